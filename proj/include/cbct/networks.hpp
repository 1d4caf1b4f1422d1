#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbct/checkpoint.hpp"
#include "cbct/codebook.hpp"
#include "cbct/config.hpp"
#include "cbct/ops.hpp"
#include "cbct/rng.hpp"
#include "cbct/sha256.hpp"

// Network blocks for the three-stage pipeline: full/sparse-view encoders,
// the shared decoder, per-voxel code classifier, residual fusion module,
// patch discriminator and the fixed perceptual pyramid.
namespace cbct::nets {

struct ArchConfig {
    int64_t in_channels = 1;
    int64_t base_channels = 32;
    int64_t levels = 3;                       // spatial factor per axis = 2^levels
    std::vector<int64_t> res_blocks{2, 2, 2}; // per level
    int64_t bottleneck_blocks = 2;
    int64_t code_dim = 32;
    int64_t codebook_size = 256;
    int64_t classifier_hidden = 64;
    int64_t disc_base = 16;
    double lrelu_slope = 0.2;
    double inorm_eps = 1e-5;

    int64_t width(int64_t level) const {
        int64_t mult = 1;
        for (int64_t i = 0; i < level && mult < 4; ++i) mult <<= 1;
        return base_channels * mult;
    }

    static ArchConfig from_config(const Config& cfg) {
        ArchConfig a;
        a.base_channels = cfg.get_int("arch.base_channels", a.base_channels);
        a.levels = cfg.get_int("arch.levels", a.levels);
        a.res_blocks.assign(size_t(a.levels), 2);
        const auto rb = cfg.get_int_list("arch.res_blocks", {});
        for (size_t i = 0; i < rb.size() && i < a.res_blocks.size(); ++i) a.res_blocks[i] = rb[i];
        a.bottleneck_blocks = cfg.get_int("arch.bottleneck_blocks", a.bottleneck_blocks);
        a.code_dim = cfg.get_int("arch.code_dim", a.code_dim);
        a.codebook_size = cfg.get_int("arch.codebook_size", a.codebook_size);
        a.classifier_hidden = cfg.get_int("arch.classifier_hidden", a.classifier_hidden);
        a.disc_base = cfg.get_int("arch.disc_base", a.disc_base);
        a.lrelu_slope = cfg.get_double("arch.lrelu_slope", a.lrelu_slope);
        a.inorm_eps = cfg.get_double("arch.inorm_eps", a.inorm_eps);
        if (int64_t(a.res_blocks.size()) != a.levels) a.res_blocks.resize(size_t(a.levels), 2);
        return a;
    }

    void to_metadata(std::map<std::string, std::string>& meta) const {
        meta["arch.base_channels"] = std::to_string(base_channels);
        meta["arch.levels"] = std::to_string(levels);
        std::string rb;
        for (size_t i = 0; i < res_blocks.size(); ++i)
            rb += (i ? "," : "") + std::to_string(res_blocks[i]);
        meta["arch.res_blocks"] = rb;
        meta["arch.bottleneck_blocks"] = std::to_string(bottleneck_blocks);
        meta["arch.code_dim"] = std::to_string(code_dim);
        meta["arch.codebook_size"] = std::to_string(codebook_size);
        meta["arch.classifier_hidden"] = std::to_string(classifier_hidden);
        meta["arch.disc_base"] = std::to_string(disc_base);
        meta["arch.lrelu_slope"] = std::to_string(lrelu_slope);
        meta["arch.inorm_eps"] = std::to_string(inorm_eps);
    }

    static ArchConfig from_metadata(const std::map<std::string, std::string>& meta) {
        Config cfg;
        for (const auto& [k, v] : meta)
            if (k.rfind("arch.", 0) == 0) cfg.set(k, v);
        return from_config(cfg);
    }
};

namespace detail {

template <typename T>
ad::Tensor<T> he_init(const std::vector<int64_t>& shape, int64_t fan_in, Rng& rng) {
    return ad::Tensor<T>::randn(shape, rng, std::sqrt(2.0 / double(fan_in)), true);
}

}  // namespace detail

template <typename T>
struct ConvLayer {
    ad::Tensor<T> w, b;
    int64_t stride = 1, pad = 0;

    static ConvLayer create(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad,
                            Rng& rng, bool zero_init = false) {
        ConvLayer l;
        l.stride = stride;
        l.pad = pad;
        if (zero_init)
            l.w = ad::Tensor<T>::zeros({cout, cin, k, k, k}, true);
        else
            l.w = detail::he_init<T>({cout, cin, k, k, k}, cin * k * k * k, rng);
        l.b = ad::Tensor<T>::zeros({cout}, true);
        return l;
    }

    // 2D pyramid layer: kernel extent 1 along depth.
    static ConvLayer create_2d(int64_t cin, int64_t cout, int64_t k, int64_t stride, Rng& rng) {
        ConvLayer l;
        l.stride = stride;
        l.pad = 0;
        l.w = detail::he_init<T>({cout, cin, 1, k, k}, cin * k * k, rng);
        l.b = ad::Tensor<T>::zeros({cout}, true);
        return l;
    }

    ad::Tensor<T> forward(const ad::Tensor<T>& x) const { return ad::conv3d(x, w, b, stride, pad); }

    void collect(std::vector<ad::Tensor<T>>& out) const {
        out.push_back(w);
        out.push_back(b);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        ck.put(p + ".w", w);
        ck.put(p + ".b", b);
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        w = ck.template get<T>(p + ".w", trainable);
        b = ck.template get<T>(p + ".b", trainable);
    }
};

template <typename T>
struct ConvTransposeLayer {
    ad::Tensor<T> w, b;  // w: [cin, cout, k, k, k]
    int64_t stride = 2, pad = 1;

    static ConvTransposeLayer create(int64_t cin, int64_t cout, int64_t k, int64_t stride,
                                     int64_t pad, Rng& rng) {
        ConvTransposeLayer l;
        l.stride = stride;
        l.pad = pad;
        l.w = detail::he_init<T>({cin, cout, k, k, k}, cin * k * k * k, rng);
        l.b = ad::Tensor<T>::zeros({cout}, true);
        return l;
    }

    ad::Tensor<T> forward(const ad::Tensor<T>& x) const {
        return ad::conv_transpose3d(x, w, b, stride, pad);
    }

    void collect(std::vector<ad::Tensor<T>>& out) const {
        out.push_back(w);
        out.push_back(b);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        ck.put(p + ".w", w);
        ck.put(p + ".b", b);
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        w = ck.template get<T>(p + ".w", trainable);
        b = ck.template get<T>(p + ".b", trainable);
    }
};

template <typename T>
struct NormLayer {
    ad::Tensor<T> gain, bias;
    double eps = 1e-5;

    static NormLayer create(int64_t channels, double eps) {
        NormLayer n;
        n.eps = eps;
        n.gain = ad::Tensor<T>::filled({channels}, T(1), true);
        n.bias = ad::Tensor<T>::zeros({channels}, true);
        return n;
    }

    ad::Tensor<T> forward(const ad::Tensor<T>& x) const {
        return ad::instance_norm3d(x, gain, bias, eps);
    }

    void collect(std::vector<ad::Tensor<T>>& out) const {
        out.push_back(gain);
        out.push_back(bias);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        ck.put(p + ".gain", gain);
        ck.put(p + ".bias", bias);
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        gain = ck.template get<T>(p + ".gain", trainable);
        bias = ck.template get<T>(p + ".bias", trainable);
    }
};

template <typename T>
struct ResBlock {
    NormLayer<T> n1, n2;
    ConvLayer<T> c1, c2;
    double slope = 0.2;

    static ResBlock create(int64_t ch, const ArchConfig& a, Rng& rng) {
        ResBlock b;
        b.slope = a.lrelu_slope;
        b.n1 = NormLayer<T>::create(ch, a.inorm_eps);
        b.c1 = ConvLayer<T>::create(ch, ch, 3, 1, 1, rng);
        b.n2 = NormLayer<T>::create(ch, a.inorm_eps);
        b.c2 = ConvLayer<T>::create(ch, ch, 3, 1, 1, rng);
        return b;
    }

    ad::Tensor<T> forward(const ad::Tensor<T>& x) const {
        auto h = c1.forward(ad::leaky_relu(n1.forward(x), slope));
        h = c2.forward(ad::leaky_relu(n2.forward(h), slope));
        return ad::add(x, h);
    }

    void collect(std::vector<ad::Tensor<T>>& out) const {
        n1.collect(out);
        c1.collect(out);
        n2.collect(out);
        c2.collect(out);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        n1.save(ck, p + ".n1");
        c1.save(ck, p + ".c1");
        n2.save(ck, p + ".n2");
        c2.save(ck, p + ".c2");
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        n1.load(ck, p + ".n1", trainable);
        c1.load(ck, p + ".c1", trainable);
        n2.load(ck, p + ".n2", trainable);
        c2.load(ck, p + ".c2", trainable);
    }
};

// Maps [N,1,D,H,W] to the code feature grid [N,c,D/2^L,...]; keeps per-level
// features for the fusion stage.
template <typename T>
struct Encoder {
    ArchConfig arch;
    ConvLayer<T> stem;
    std::vector<std::vector<ResBlock<T>>> level_blocks;
    std::vector<ConvLayer<T>> downs;
    std::vector<ResBlock<T>> bottleneck;
    ConvLayer<T> head;

    static Encoder create(const ArchConfig& a, Rng& rng) {
        Encoder e;
        e.arch = a;
        e.stem = ConvLayer<T>::create(a.in_channels, a.width(0), 3, 1, 1, rng);
        for (int64_t l = 0; l < a.levels; ++l) {
            std::vector<ResBlock<T>> blocks;
            for (int64_t b = 0; b < a.res_blocks[l]; ++b)
                blocks.push_back(ResBlock<T>::create(a.width(l), a, rng));
            e.level_blocks.push_back(std::move(blocks));
            e.downs.push_back(ConvLayer<T>::create(a.width(l), a.width(l + 1), 3, 2, 1, rng));
        }
        for (int64_t b = 0; b < a.bottleneck_blocks; ++b)
            e.bottleneck.push_back(ResBlock<T>::create(a.width(a.levels), a, rng));
        e.head = ConvLayer<T>::create(a.width(a.levels), a.code_dim, 1, 1, 0, rng);
        return e;
    }

    // taps, when requested, hold the per-level features before downsampling.
    ad::Tensor<T> forward(const ad::Tensor<T>& x, std::vector<ad::Tensor<T>>* taps = nullptr) const {
        const auto& s = x.shape();
        const int64_t div = int64_t(1) << arch.levels;
        for (size_t axis : {size_t(2), size_t(3), size_t(4)})
            if (s[axis] % div != 0)
                throw ShapeError("encoder input axis " + std::to_string(axis) + " extent " +
                                 std::to_string(s[axis]) + " not divisible by " +
                                 std::to_string(div) + "; pad the volume");
        auto h = stem.forward(x);
        if (taps) taps->clear();
        for (int64_t l = 0; l < arch.levels; ++l) {
            for (const auto& b : level_blocks[l]) h = b.forward(h);
            if (taps) taps->push_back(h);
            h = downs[l].forward(h);
        }
        for (const auto& b : bottleneck) h = b.forward(h);
        return head.forward(h);
    }

    void collect(std::vector<ad::Tensor<T>>& out) const {
        stem.collect(out);
        for (const auto& blocks : level_blocks)
            for (const auto& b : blocks) b.collect(out);
        for (const auto& d : downs) d.collect(out);
        for (const auto& b : bottleneck) b.collect(out);
        head.collect(out);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        stem.save(ck, p + ".stem");
        for (size_t l = 0; l < level_blocks.size(); ++l)
            for (size_t b = 0; b < level_blocks[l].size(); ++b)
                level_blocks[l][b].save(ck, p + ".l" + std::to_string(l) + "b" + std::to_string(b));
        for (size_t l = 0; l < downs.size(); ++l) downs[l].save(ck, p + ".down" + std::to_string(l));
        for (size_t b = 0; b < bottleneck.size(); ++b)
            bottleneck[b].save(ck, p + ".bn" + std::to_string(b));
        head.save(ck, p + ".head");
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        stem.load(ck, p + ".stem", trainable);
        for (size_t l = 0; l < level_blocks.size(); ++l)
            for (size_t b = 0; b < level_blocks[l].size(); ++b)
                level_blocks[l][b].load(ck, p + ".l" + std::to_string(l) + "b" + std::to_string(b),
                                        trainable);
        for (size_t l = 0; l < downs.size(); ++l)
            downs[l].load(ck, p + ".down" + std::to_string(l), trainable);
        for (size_t b = 0; b < bottleneck.size(); ++b)
            bottleneck[b].load(ck, p + ".bn" + std::to_string(b), trainable);
        head.load(ck, p + ".head", trainable);
    }
};

// Residual correction of decoder features from matching-resolution encoder
// features. The closing convolutions start at zero, so an untrained module
// leaves the decoder output untouched.
template <typename T>
struct FusionModule {
    std::vector<ConvLayer<T>> mix;   // concat -> level width
    std::vector<ConvLayer<T>> out;   // zero-initialized residual emit
    double slope = 0.2;

    static FusionModule create(const ArchConfig& a, Rng& rng) {
        FusionModule f;
        f.slope = a.lrelu_slope;
        for (int64_t l = 0; l < a.levels; ++l) {
            const int64_t ch = a.width(l);
            f.mix.push_back(ConvLayer<T>::create(2 * ch, ch, 3, 1, 1, rng));
            f.out.push_back(ConvLayer<T>::create(ch, ch, 3, 1, 1, rng, /*zero_init=*/true));
        }
        return f;
    }

    ad::Tensor<T> apply(int64_t level, const ad::Tensor<T>& enc_feat,
                        const ad::Tensor<T>& dec_feat) const {
        auto h = mix[level].forward(ad::concat_channels(enc_feat, dec_feat));
        h = out[level].forward(ad::leaky_relu(h, slope));
        return ad::add(dec_feat, h);
    }

    void collect(std::vector<ad::Tensor<T>>& o) const {
        for (const auto& m : mix) m.collect(o);
        for (const auto& z : out) z.collect(o);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        for (size_t l = 0; l < mix.size(); ++l) {
            mix[l].save(ck, p + ".mix" + std::to_string(l));
            out[l].save(ck, p + ".out" + std::to_string(l));
        }
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        for (size_t l = 0; l < mix.size(); ++l) {
            mix[l].load(ck, p + ".mix" + std::to_string(l), trainable);
            out[l].load(ck, p + ".out" + std::to_string(l), trainable);
        }
    }
};

template <typename T>
struct Decoder {
    ArchConfig arch;
    ConvLayer<T> head;
    std::vector<ResBlock<T>> bottleneck;
    std::vector<ConvTransposeLayer<T>> ups;  // deepest first
    std::vector<std::vector<ResBlock<T>>> level_blocks;
    ConvLayer<T> final;

    static Decoder create(const ArchConfig& a, Rng& rng) {
        Decoder d;
        d.arch = a;
        d.head = ConvLayer<T>::create(a.code_dim, a.width(a.levels), 1, 1, 0, rng);
        for (int64_t b = 0; b < a.bottleneck_blocks; ++b)
            d.bottleneck.push_back(ResBlock<T>::create(a.width(a.levels), a, rng));
        for (int64_t l = a.levels - 1; l >= 0; --l) {
            d.ups.push_back(ConvTransposeLayer<T>::create(a.width(l + 1), a.width(l), 4, 2, 1, rng));
            std::vector<ResBlock<T>> blocks;
            for (int64_t b = 0; b < a.res_blocks[l]; ++b)
                blocks.push_back(ResBlock<T>::create(a.width(l), a, rng));
            d.level_blocks.push_back(std::move(blocks));
        }
        d.final = ConvLayer<T>::create(a.width(0), a.in_channels, 3, 1, 1, rng);
        return d;
    }

    // With fusion, each upsampled feature map is residually corrected from the
    // encoder tap at the same resolution before the level's blocks run.
    ad::Tensor<T> forward(const ad::Tensor<T>& z, const FusionModule<T>* fusion = nullptr,
                          const std::vector<ad::Tensor<T>>* enc_taps = nullptr) const {
        if (fusion && !enc_taps)
            throw ContractError("decoder fusion requires encoder taps from the matching pass");
        auto h = head.forward(z);
        for (const auto& b : bottleneck) h = b.forward(h);
        for (size_t i = 0; i < ups.size(); ++i) {
            const int64_t level = arch.levels - 1 - int64_t(i);
            h = ups[i].forward(h);
            if (fusion) h = fusion->apply(level, (*enc_taps)[level], h);
            for (const auto& b : level_blocks[i]) h = b.forward(h);
        }
        return final.forward(h);
    }

    void collect(std::vector<ad::Tensor<T>>& out) const {
        head.collect(out);
        for (const auto& b : bottleneck) b.collect(out);
        for (const auto& u : ups) u.collect(out);
        for (const auto& blocks : level_blocks)
            for (const auto& b : blocks) b.collect(out);
        final.collect(out);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        head.save(ck, p + ".head");
        for (size_t b = 0; b < bottleneck.size(); ++b)
            bottleneck[b].save(ck, p + ".bn" + std::to_string(b));
        for (size_t i = 0; i < ups.size(); ++i) {
            ups[i].save(ck, p + ".up" + std::to_string(i));
            for (size_t b = 0; b < level_blocks[i].size(); ++b)
                level_blocks[i][b].save(ck, p + ".u" + std::to_string(i) + "b" + std::to_string(b));
        }
        final.save(ck, p + ".final");
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        head.load(ck, p + ".head", trainable);
        for (size_t b = 0; b < bottleneck.size(); ++b)
            bottleneck[b].load(ck, p + ".bn" + std::to_string(b), trainable);
        for (size_t i = 0; i < ups.size(); ++i) {
            ups[i].load(ck, p + ".up" + std::to_string(i), trainable);
            for (size_t b = 0; b < level_blocks[i].size(); ++b)
                level_blocks[i][b].load(ck, p + ".u" + std::to_string(i) + "b" + std::to_string(b),
                                        trainable);
        }
        final.load(ck, p + ".final", trainable);
    }
};

// Per-voxel code id logits from sparse-view features; local receptive field.
template <typename T>
struct CodeClassifier {
    ConvLayer<T> c1, c2, c3;
    double slope = 0.2;

    static CodeClassifier create(const ArchConfig& a, Rng& rng) {
        CodeClassifier c;
        c.slope = a.lrelu_slope;
        c.c1 = ConvLayer<T>::create(a.code_dim, a.classifier_hidden, 3, 1, 1, rng);
        c.c2 = ConvLayer<T>::create(a.classifier_hidden, a.classifier_hidden, 3, 1, 1, rng);
        c.c3 = ConvLayer<T>::create(a.classifier_hidden, a.codebook_size, 1, 1, 0, rng);
        return c;
    }

    ad::Tensor<T> forward(const ad::Tensor<T>& z) const {
        auto h = ad::leaky_relu(c1.forward(z), slope);
        h = ad::leaky_relu(c2.forward(h), slope);
        return c3.forward(h);
    }

    void collect(std::vector<ad::Tensor<T>>& out) const {
        c1.collect(out);
        c2.collect(out);
        c3.collect(out);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        c1.save(ck, p + ".c1");
        c2.save(ck, p + ".c2");
        c3.save(ck, p + ".c3");
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        c1.load(ck, p + ".c1", trainable);
        c2.load(ck, p + ".c2", trainable);
        c3.load(ck, p + ".c3", trainable);
    }
};

// Four-layer strided 3D patch discriminator; emits a logit grid.
template <typename T>
struct Discriminator {
    ConvLayer<T> c1, c2, c3, c4;
    NormLayer<T> n2, n3;
    double slope = 0.2;

    static Discriminator create(const ArchConfig& a, Rng& rng) {
        Discriminator d;
        d.slope = a.lrelu_slope;
        const int64_t ch = a.disc_base;
        d.c1 = ConvLayer<T>::create(a.in_channels, ch, 4, 2, 1, rng);
        d.c2 = ConvLayer<T>::create(ch, 2 * ch, 4, 2, 1, rng);
        d.n2 = NormLayer<T>::create(2 * ch, a.inorm_eps);
        d.c3 = ConvLayer<T>::create(2 * ch, 4 * ch, 4, 2, 1, rng);
        d.n3 = NormLayer<T>::create(4 * ch, a.inorm_eps);
        d.c4 = ConvLayer<T>::create(4 * ch, 1, 3, 1, 1, rng);
        return d;
    }

    ad::Tensor<T> forward(const ad::Tensor<T>& x) const {
        auto h = ad::leaky_relu(c1.forward(x), slope);
        h = ad::leaky_relu(n2.forward(c2.forward(h)), slope);
        h = ad::leaky_relu(n3.forward(c3.forward(h)), slope);
        return c4.forward(h);
    }

    void collect(std::vector<ad::Tensor<T>>& out) const {
        c1.collect(out);
        c2.collect(out);
        n2.collect(out);
        c3.collect(out);
        n3.collect(out);
        c4.collect(out);
    }
    void save(Checkpoint& ck, const std::string& p) const {
        c1.save(ck, p + ".c1");
        c2.save(ck, p + ".c2");
        n2.save(ck, p + ".n2");
        c3.save(ck, p + ".c3");
        n3.save(ck, p + ".n3");
        c4.save(ck, p + ".c4");
    }
    void load(const Checkpoint& ck, const std::string& p, bool trainable) {
        c1.load(ck, p + ".c1", trainable);
        c2.load(ck, p + ".c2", trainable);
        n2.load(ck, p + ".n2", trainable);
        c3.load(ck, p + ".c3", trainable);
        n3.load(ck, p + ".n3", trainable);
        c4.load(ck, p + ".c4", trainable);
    }
};

// Fixed, seeded 2D convolutional pyramid standing in for a pre-trained
// perceptual backbone. Weights never train; identical across runs per seed.
template <typename T>
struct PerceptualExtractor {
    ConvLayer<T> l1, l2, l3;
    double slope = 0.2;
    uint64_t seed = 0;

    static PerceptualExtractor create(uint64_t seed) {
        Rng rng(Rng::derive(seed, "perceptual"));
        PerceptualExtractor p;
        p.seed = seed;
        p.l1 = ConvLayer<T>::create_2d(1, 8, 3, 1, rng);
        p.l2 = ConvLayer<T>::create_2d(8, 16, 3, 2, rng);
        p.l3 = ConvLayer<T>::create_2d(16, 32, 3, 2, rng);
        for (auto* layer : {&p.l1, &p.l2, &p.l3}) {
            layer->w.set_requires_grad(false);
            layer->b.set_requires_grad(false);
        }
        return p;
    }

    // plane: [N,1,1,H,W]; H and W must be >= 11 so all three taps exist.
    std::vector<ad::Tensor<T>> taps(const ad::Tensor<T>& plane) const {
        std::vector<ad::Tensor<T>> out;
        auto h = ad::leaky_relu(l1.forward(plane), slope);
        out.push_back(h);
        h = ad::leaky_relu(l2.forward(h), slope);
        out.push_back(h);
        h = ad::leaky_relu(l3.forward(h), slope);
        out.push_back(h);
        return out;
    }

    std::string checksum() const {
        Checkpoint ck;
        ck.put("l1.w", l1.w);
        ck.put("l1.b", l1.b);
        ck.put("l2.w", l2.w);
        ck.put("l2.b", l2.b);
        ck.put("l3.w", l3.w);
        ck.put("l3.b", l3.b);
        return ck.checksum(ck.names());
    }
};

// The sliced plane keeps a singleton axis; relabel so the 2D pyramid sees
// [N,1,1,A,B]. The memory order already matches, so this is metadata only.
template <typename T>
ad::Tensor<T> reshape_plane(const ad::Tensor<T>& sliced) {
    const auto& s = sliced.shape();
    std::vector<int64_t> kept;
    for (size_t i = 2; i < 5; ++i)
        if (s[i] != 1) kept.push_back(s[i]);
    while (kept.size() < 2) kept.push_back(1);
    return ad::reshape(sliced, {s[0], s[1], 1, kept[0], kept[1]});
}

// One axial, one coronal and one sagittal plane at seed-determined positions,
// identical in both volumes; sum of per-tap feature distances.
template <typename T>
ad::Tensor<T> perceptual_loss(const ad::Tensor<T>& vol_a, const ad::Tensor<T>& vol_b,
                              const PerceptualExtractor<T>& phi, uint64_t seed) {
    if (vol_a.shape() != vol_b.shape()) throw ShapeError("perceptual_loss: volume shapes differ");
    if (vol_a.shape().size() != 5) throw ShapeError("perceptual_loss: expected [N,1,D,H,W]");
    const auto& s = vol_a.shape();
    Rng rng(Rng::derive(seed, "plane-pick"));
    const int64_t zi = int64_t(rng.below(uint64_t(s[2])));
    const int64_t yi = int64_t(rng.below(uint64_t(s[3])));
    const int64_t xi = int64_t(rng.below(uint64_t(s[4])));

    ad::Tensor<T> total = ad::Tensor<T>::zeros({1});
    const struct {
        size_t axis;
        int64_t index;
    } picks[3] = {{2, zi}, {3, yi}, {4, xi}};
    for (const auto& pick : picks) {
        auto pa = reshape_plane(ad::plane_slice(vol_a, pick.axis, pick.index));
        auto pb = reshape_plane(ad::plane_slice(vol_b, pick.axis, pick.index));
        const auto ta = phi.taps(pa);
        const auto tb = phi.taps(pb);
        for (size_t t = 0; t < ta.size(); ++t) total = ad::add(total, ad::mse(ta[t], tb[t]));
    }
    return total;
}

// Per-position argmax over the class (channel) axis of [N,K,D,H,W] logits.
template <typename T>
std::vector<int32_t> argmax_channel(const ad::Tensor<T>& logits) {
    const auto& s = logits.shape();
    if (s.size() != 5) throw ShapeError("argmax_channel: expected [N,K,D,H,W]");
    const int64_t N = s[0], K = s[1], sp = s[2] * s[3] * s[4];
    std::vector<int32_t> out(N * sp);
    const T* p = logits.data().data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t v = 0; v < sp; ++v) {
            T best = p[(n * K) * sp + v];
            int32_t best_k = 0;
            for (int64_t k = 1; k < K; ++k) {
                const T val = p[(n * K + k) * sp + v];
                if (val > best) {
                    best = val;
                    best_k = int32_t(k);
                }
            }
            out[n * sp + v] = best_k;
        }
    return out;
}

}  // namespace cbct::nets
