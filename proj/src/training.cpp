#include "cbct/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cbct/adam.hpp"
#include "cbct/errors.hpp"
#include "cbct/fdk.hpp"
#include "cbct/rng.hpp"
#include "cbct/volume_io.hpp"

namespace cbct::train {

namespace {

using TF = ad::Tensor<float>;

struct SplitVolumes {
    std::vector<Volume> full;    // normalized full-view reconstructions
    std::vector<Volume> sparse;  // normalized sparse-view reconstructions
};

SplitVolumes load_split(const DatasetManifest& manifest, const std::string& root,
                        const std::string& split, const TrainConfig& cfg, bool need_sparse) {
    SplitVolumes out;
    const auto range = cfg.value_range();
    for (const DatasetEntry* e : manifest.split_entries(split)) {
        if (!e->fdk_files.count(1))
            throw ParamError("dataset entry " + e->id + " lacks the full-view reconstruction");
        out.full.push_back(
            normalize_with(load_volume(root + "/" + e->fdk_files.at(1)), range));
        if (need_sparse) {
            if (!e->fdk_files.count(cfg.ratio))
                throw ParamError("dataset entry " + e->id + " lacks the 1/" +
                                 std::to_string(cfg.ratio) + " reconstruction");
            out.sparse.push_back(
                normalize_with(load_volume(root + "/" + e->fdk_files.at(cfg.ratio)), range));
        }
    }
    if (out.full.empty()) throw ParamError("dataset split '" + split + "' is empty");
    return out;
}

std::vector<int64_t> shuffled_order(int64_t n, uint64_t seed) {
    std::vector<int64_t> order(n);
    for (int64_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(uint64_t(i + 1))]);
    return order;
}

uint64_t step_seed(uint64_t root, const char* tag, int64_t epoch, int64_t step, int64_t item) {
    uint64_t s = Rng::derive(root, tag);
    s = Rng::derive(s, uint64_t(epoch));
    s = Rng::derive(s, uint64_t(step));
    return Rng::derive(s, uint64_t(item));
}

// Stacks aligned crops of one volume list into [N,1,p,p,p].
TF make_batch(const std::vector<Volume>& vols, const std::vector<int64_t>& items,
              const std::vector<std::array<int64_t, 3>>& offsets, int64_t p) {
    const int64_t n = int64_t(items.size());
    std::vector<float> data(n * p * p * p);
    for (int64_t j = 0; j < n; ++j) {
        const Volume patch = crop_at(vols[items[j]], p, offsets[j][0], offsets[j][1], offsets[j][2]);
        std::copy(patch.data.begin(), patch.data.end(), data.begin() + j * p * p * p);
    }
    return TF::from_data({n, 1, p, p, p}, std::move(data));
}

void plan_batch(const std::vector<Volume>& vols, const std::vector<int64_t>& order,
                const TrainConfig& cfg, const char* tag, int64_t epoch, int64_t step,
                int64_t batch, std::vector<int64_t>& items,
                std::vector<std::array<int64_t, 3>>& offsets) {
    const int64_t n = int64_t(vols.size());
    items.clear();
    offsets.clear();
    for (int64_t j = 0; j < batch; ++j) {
        const int64_t idx = order[(step * batch + j) % n];
        items.push_back(idx);
        int64_t od, oh, ow;
        random_crop_offsets(vols[idx], cfg.patch_size, step_seed(cfg.seed, tag, epoch, step, j),
                            od, oh, ow);
        offsets.push_back({od, oh, ow});
    }
}

template <typename M>
std::string module_checksum(const M& m) {
    Checkpoint ck;
    m.save(ck, "m");
    return ck.checksum(ck.names());
}

std::string tensor_checksum(const TF& t) {
    Checkpoint ck;
    ck.put("t", t);
    return ck.checksum(ck.names());
}

void validate_common(const DatasetManifest& manifest, const TrainConfig& cfg) {
    const int64_t div = int64_t(1) << cfg.arch.levels;
    if (cfg.patch_size % div != 0)
        throw ParamError("patch size " + std::to_string(cfg.patch_size) +
                         " must be divisible by " + std::to_string(div));
    if (std::find(manifest.ratios.begin(), manifest.ratios.end(), int64_t(1)) ==
        manifest.ratios.end())
        throw ParamError("dataset lacks full-view reconstructions");
    if (!(cfg.value_hi > cfg.value_lo)) throw ParamError("value range is empty");
}

void common_metadata(Checkpoint& ck, const DatasetManifest& manifest, const TrainConfig& cfg) {
    cfg.to_metadata(ck.metadata);
    ck.metadata["geometry_hash"] = manifest.geometry_hash;
    ck.metadata["fdk_window"] = manifest.fdk_window;
}

std::vector<std::string> prefixed_names(const Checkpoint& ck, const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& name : ck.names())
        if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
}

std::string core_checksum(const Checkpoint& ck) {
    std::vector<std::string> names = prefixed_names(ck, "enc_full.");
    const auto dec = prefixed_names(ck, "dec.");
    names.insert(names.end(), dec.begin(), dec.end());
    names.push_back("book.codes");
    return ck.checksum(names);
}

struct CsvLog {
    std::ofstream out;
    CsvLog(const std::string& path, const std::string& header) {
        if (path.empty()) return;
        out.open(path);
        if (!out) throw IoError("cannot write training log: " + path);
        out << header << "\n";
    }
    template <typename... Args>
    void row(Args... args) {
        if (!out.is_open()) return;
        bool first = true;
        ((out << (first ? "" : ","), first = false, out << args), ...);
        out << "\n";
    }
};

void ensure_finite(const TF& loss, const Checkpoint& last_good, const std::string& out_ckpt,
                   const char* stage) {
    if (std::isfinite(double(loss.item()))) return;
    if (!out_ckpt.empty()) last_good.save(out_ckpt);
    throw ContractError(std::string(stage) +
                        ": non-finite loss; last-good checkpoint written to " + out_ckpt);
}

}  // namespace

TrainConfig TrainConfig::from_config(const Config& cfg) {
    TrainConfig t;
    t.arch = nets::ArchConfig::from_config(cfg);
    t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
    t.batch_stage1 = cfg.get_int("train.batch_stage1", t.batch_stage1);
    t.batch_stage2 = cfg.get_int("train.batch_stage2", t.batch_stage2);
    t.batch_stage3 = cfg.get_int("train.batch_stage3", t.batch_stage3);
    t.patch_size = cfg.get_int("train.patch_size", t.patch_size);
    t.epochs_stage1 = cfg.get_int("train.epochs_stage1", t.epochs_stage1);
    t.epochs_stage2 = cfg.get_int("train.epochs_stage2", t.epochs_stage2);
    t.epochs_stage3 = cfg.get_int("train.epochs_stage3", t.epochs_stage3);
    t.lambda_adv = cfg.get_double("train.lambda_adv", t.lambda_adv);
    t.lambda_p = cfg.get_double("train.lambda_p", t.lambda_p);
    t.ratio = cfg.get_int("train.ratio", t.ratio);
    t.seed = uint64_t(cfg.get_int("train.seed", int64_t(t.seed)));
    t.value_lo = cfg.get_double("train.value_lo", t.value_lo);
    t.value_hi = cfg.get_double("train.value_hi", t.value_hi);
    return t;
}

void TrainConfig::to_metadata(std::map<std::string, std::string>& meta) const {
    arch.to_metadata(meta);
    meta["train.learning_rate"] = std::to_string(learning_rate);
    meta["train.batch_stage1"] = std::to_string(batch_stage1);
    meta["train.batch_stage2"] = std::to_string(batch_stage2);
    meta["train.batch_stage3"] = std::to_string(batch_stage3);
    meta["train.patch_size"] = std::to_string(patch_size);
    meta["train.epochs_stage1"] = std::to_string(epochs_stage1);
    meta["train.epochs_stage2"] = std::to_string(epochs_stage2);
    meta["train.epochs_stage3"] = std::to_string(epochs_stage3);
    meta["train.lambda_adv"] = std::to_string(lambda_adv);
    meta["train.lambda_p"] = std::to_string(lambda_p);
    meta["train.ratio"] = std::to_string(ratio);
    meta["train.seed"] = std::to_string(seed);
    meta["train.value_lo"] = std::to_string(value_lo);
    meta["train.value_hi"] = std::to_string(value_hi);
}

TrainConfig TrainConfig::from_metadata(const std::map<std::string, std::string>& meta) {
    Config cfg;
    for (const auto& [k, v] : meta)
        if (k.rfind("train.", 0) == 0 || k.rfind("arch.", 0) == 0) cfg.set(k, v);
    return from_config(cfg);
}

Checkpoint train_stage1(const DatasetManifest& manifest, const std::string& data_root,
                        const TrainConfig& cfg, const std::string& out_ckpt,
                        const std::string& log_csv) {
    validate_common(manifest, cfg);
    const auto data = load_split(manifest, data_root, "train", cfg, /*need_sparse=*/false);
    const int64_t n = int64_t(data.full.size());

    Rng init_rng(Rng::derive(cfg.seed, "stage1-init"));
    auto enc = nets::Encoder<float>::create(cfg.arch, init_rng);
    auto dec = nets::Decoder<float>::create(cfg.arch, init_rng);
    auto disc = nets::Discriminator<float>::create(cfg.arch, init_rng);
    auto book = vq::Codebook<float>::create(cfg.arch.codebook_size, cfg.arch.code_dim, init_rng);
    const auto phi = nets::PerceptualExtractor<float>::create(cfg.seed);
    const std::string phi_sum = phi.checksum();

    std::vector<TF> params_g;
    enc.collect(params_g);
    dec.collect(params_g);
    params_g.push_back(book.codes);
    std::vector<TF> params_d;
    disc.collect(params_d);

    ad::AdamState<float> g_state, d_state;
    g_state.learning_rate = d_state.learning_rate = cfg.learning_rate;
    g_state.init(params_g);
    d_state.init(params_d);

    auto snapshot = [&]() {
        Checkpoint ck;
        common_metadata(ck, manifest, cfg);
        ck.metadata["stage"] = "1";
        enc.save(ck, "enc_full");
        dec.save(ck, "dec");
        disc.save(ck, "disc");
        ck.put("book.codes", book.codes);
        ck.metadata["checksum.core"] = core_checksum(ck);
        ck.metadata["perceptual_checksum"] = phi_sum;
        return ck;
    };

    CsvLog log(log_csv, "step,total,vq,adv_g,adv_d,perceptual,codebook_usage");
    Checkpoint last_good = snapshot();
    vq::UsageHistogram usage(cfg.arch.codebook_size);
    bool book_ready = false;
    int64_t gstep = 0;
    const int64_t steps_per_epoch = std::max<int64_t>(1, n / cfg.batch_stage1);

    for (int64_t epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
        const auto order = shuffled_order(n, Rng::derive(Rng::derive(cfg.seed, "s1-order"),
                                                         uint64_t(epoch)));
        for (int64_t step = 0; step < steps_per_epoch; ++step) {
            std::vector<int64_t> items;
            std::vector<std::array<int64_t, 3>> offs;
            plan_batch(data.full, order, cfg, "s1-crop", epoch, step, cfg.batch_stage1, items,
                       offs);
            const TF x = make_batch(data.full, items, offs, cfg.patch_size);

            auto z = enc.forward(x);
            if (!book_ready) {
                Rng book_rng(Rng::derive(cfg.seed, "book-init"));
                book.init_from_features(z, book_rng);
                book_ready = true;
            }
            auto assign = vq::quantize_nearest(z, book);
            auto recon = dec.forward(assign.quantized);

            // discriminator update on (real, detached fake)
            ad::zero_grad(params_d);
            auto d_loss = ad::add(ad::bce_with_logits_mean(disc.forward(x), 1.0),
                                  ad::bce_with_logits_mean(disc.forward(ad::detach(recon)), 0.0));
            ad::backward(d_loss);
            ad::adam_step(params_d, d_state);

            // generator update
            auto vq_term = vq::vq_loss(x, recon, z, assign, book);
            auto adv_term = ad::bce_with_logits_mean(disc.forward(recon), 1.0);
            auto perc_term = nets::perceptual_loss(
                x, recon, phi, Rng::derive(Rng::derive(cfg.seed, "s1-plane"), uint64_t(gstep)));
            auto total = ad::add(
                vq_term, ad::add(ad::scale(adv_term, cfg.lambda_adv),
                                 ad::scale(perc_term, cfg.lambda_p)));
            ensure_finite(total, last_good, out_ckpt, "stage1");
            ad::backward(total);
            ad::adam_step(params_g, g_state);

            usage.add(assign);
            log.row(gstep, total.item(), vq_term.item(), adv_term.item(), d_loss.item(),
                    perc_term.item(), usage.used_fraction());
            ++gstep;
        }
        last_good = snapshot();
    }
    if (phi.checksum() != phi_sum)
        throw ContractError("stage1: perceptual extractor weights drifted");
    Checkpoint result = snapshot();
    if (!out_ckpt.empty()) result.save(out_ckpt);
    return result;
}

Checkpoint train_stage2(const DatasetManifest& manifest, const std::string& data_root,
                        const TrainConfig& cfg, const Checkpoint& stage1,
                        const std::string& out_ckpt, const std::string& log_csv) {
    if (stage1.metadata.count("stage") == 0 || stage1.metadata.at("stage") != "1")
        throw ContractError("train_stage2 requires a stage-1 checkpoint");
    validate_common(manifest, cfg);
    const nets::ArchConfig arch = nets::ArchConfig::from_metadata(stage1.metadata);
    TrainConfig run = cfg;
    run.arch = arch;
    const auto data = load_split(manifest, data_root, "train", run, /*need_sparse=*/true);
    const int64_t n = int64_t(data.full.size());

    Rng init_rng(Rng::derive(cfg.seed, "stage2-init"));
    auto enc_full = nets::Encoder<float>::create(arch, init_rng);
    enc_full.load(stage1, "enc_full", /*trainable=*/false);
    vq::Codebook<float> book;
    book.codes = stage1.get<float>("book.codes", /*requires_grad=*/false);
    // sparse-view encoder starts as a copy of the full-view encoder
    auto enc_sparse = nets::Encoder<float>::create(arch, init_rng);
    enc_sparse.load(stage1, "enc_full", /*trainable=*/true);
    auto clf = nets::CodeClassifier<float>::create(arch, init_rng);

    const std::string frozen_before =
        module_checksum(enc_full) + tensor_checksum(book.codes);

    std::vector<TF> params;
    enc_sparse.collect(params);
    clf.collect(params);
    ad::AdamState<float> state;
    state.learning_rate = cfg.learning_rate;
    state.init(params);

    auto snapshot = [&]() {
        Checkpoint ck;
        // frozen stage-1 payloads pass through byte-identical
        for (const auto& name : stage1.names()) {
            Checkpoint::Entry e = stage1.entry(name);
            if (e.dtype == "float32")
                ck.put(name, TF::from_data(e.shape, std::vector<float>(e.data.begin(), e.data.end())));
            else
                ck.put(name, ad::TensorD::from_data(e.shape, e.data));
        }
        common_metadata(ck, manifest, cfg);
        arch.to_metadata(ck.metadata);
        ck.metadata["stage"] = "2";
        enc_sparse.save(ck, "enc_sparse");
        clf.save(ck, "clf");
        ck.metadata["checksum.core"] = core_checksum(ck);
        ck.metadata["checksum.classifier"] = module_checksum(clf);
        if (stage1.metadata.count("perceptual_checksum"))
            ck.metadata["perceptual_checksum"] = stage1.metadata.at("perceptual_checksum");
        return ck;
    };

    CsvLog log(log_csv, "step,total,feature,ce,top1_accuracy");
    Checkpoint last_good = snapshot();
    int64_t gstep = 0;
    const int64_t steps_per_epoch = std::max<int64_t>(1, n / cfg.batch_stage2);

    for (int64_t epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
        const auto order = shuffled_order(n, Rng::derive(Rng::derive(cfg.seed, "s2-order"),
                                                         uint64_t(epoch)));
        for (int64_t step = 0; step < steps_per_epoch; ++step) {
            std::vector<int64_t> items;
            std::vector<std::array<int64_t, 3>> offs;
            plan_batch(data.full, order, run, "s2-crop", epoch, step, cfg.batch_stage2, items,
                       offs);
            const TF x_sparse = make_batch(data.sparse, items, offs, cfg.patch_size);
            const TF x_full = make_batch(data.full, items, offs, cfg.patch_size);

            // labels from the frozen full-view path
            auto z_full = enc_full.forward(x_full);
            auto label_assign = vq::quantize_nearest(z_full, book);
            std::vector<int64_t> labels(label_assign.indices.begin(), label_assign.indices.end());

            auto z_sparse = enc_sparse.forward(x_sparse);
            auto feat_term = ad::mse(z_sparse, z_full);
            auto logits = clf.forward(z_sparse);
            auto ce_term = ad::softmax_cross_entropy(logits, labels);
            auto total = ad::add(feat_term, ce_term);
            ensure_finite(total, last_good, out_ckpt, "stage2");
            ad::backward(total);
            ad::adam_step(params, state);

            const auto pred = nets::argmax_channel(logits);
            int64_t hit = 0;
            for (size_t i = 0; i < pred.size(); ++i)
                if (pred[i] == label_assign.indices[i]) ++hit;
            log.row(gstep, total.item(), feat_term.item(), ce_term.item(),
                    double(hit) / double(pred.size()));
            ++gstep;
        }
        last_good = snapshot();
    }
    const std::string frozen_after = module_checksum(enc_full) + tensor_checksum(book.codes);
    if (frozen_before != frozen_after)
        throw ContractError("stage2: frozen component weights drifted");
    Checkpoint result = snapshot();
    if (!out_ckpt.empty()) result.save(out_ckpt);
    return result;
}

Checkpoint train_stage3(const DatasetManifest& manifest, const std::string& data_root,
                        const TrainConfig& cfg, const Checkpoint& stage2,
                        const std::string& out_ckpt, const std::string& log_csv) {
    if (stage2.metadata.count("stage") == 0 || stage2.metadata.at("stage") != "2")
        throw ContractError("train_stage3 requires a stage-2 checkpoint");
    validate_common(manifest, cfg);
    const nets::ArchConfig arch = nets::ArchConfig::from_metadata(stage2.metadata);
    TrainConfig run = cfg;
    run.arch = arch;
    const auto data = load_split(manifest, data_root, "train", run, /*need_sparse=*/true);
    const int64_t n = int64_t(data.full.size());

    Rng init_rng(Rng::derive(cfg.seed, "stage3-init"));
    auto dec = nets::Decoder<float>::create(arch, init_rng);
    dec.load(stage2, "dec", /*trainable=*/false);
    vq::Codebook<float> book;
    book.codes = stage2.get<float>("book.codes", false);
    auto clf = nets::CodeClassifier<float>::create(arch, init_rng);
    clf.load(stage2, "clf", /*trainable=*/false);
    auto enc_sparse = nets::Encoder<float>::create(arch, init_rng);
    enc_sparse.load(stage2, "enc_sparse", /*trainable=*/true);
    auto disc = nets::Discriminator<float>::create(arch, init_rng);
    disc.load(stage2, "disc", /*trainable=*/true);
    auto fusion = nets::FusionModule<float>::create(arch, init_rng);
    const auto phi = nets::PerceptualExtractor<float>::create(cfg.seed);

    const std::string frozen_before = module_checksum(dec) + tensor_checksum(book.codes) +
                                      module_checksum(clf);

    std::vector<TF> params_g;
    fusion.collect(params_g);
    enc_sparse.collect(params_g);
    std::vector<TF> params_d;
    disc.collect(params_d);
    ad::AdamState<float> g_state, d_state;
    g_state.learning_rate = d_state.learning_rate = cfg.learning_rate;
    g_state.init(params_g);
    d_state.init(params_d);

    auto snapshot = [&]() {
        Checkpoint ck;
        for (const auto& name : stage2.names()) {
            if (name.rfind("enc_sparse.", 0) == 0 || name.rfind("disc.", 0) == 0) continue;
            Checkpoint::Entry e = stage2.entry(name);
            if (e.dtype == "float32")
                ck.put(name, TF::from_data(e.shape, std::vector<float>(e.data.begin(), e.data.end())));
            else
                ck.put(name, ad::TensorD::from_data(e.shape, e.data));
        }
        common_metadata(ck, manifest, cfg);
        arch.to_metadata(ck.metadata);
        ck.metadata["stage"] = "3";
        enc_sparse.save(ck, "enc_sparse");
        disc.save(ck, "disc");
        fusion.save(ck, "fusion");
        ck.metadata["checksum.core"] = core_checksum(ck);
        ck.metadata["checksum.classifier"] = module_checksum(clf);
        if (stage2.metadata.count("perceptual_checksum"))
            ck.metadata["perceptual_checksum"] = stage2.metadata.at("perceptual_checksum");
        return ck;
    };

    CsvLog log(log_csv, "step,total,reconstruction,adv_g,adv_d,perceptual");
    Checkpoint last_good = snapshot();
    int64_t gstep = 0;
    const int64_t steps_per_epoch = std::max<int64_t>(1, n / cfg.batch_stage3);

    for (int64_t epoch = 0; epoch < cfg.epochs_stage3; ++epoch) {
        const auto order = shuffled_order(n, Rng::derive(Rng::derive(cfg.seed, "s3-order"),
                                                         uint64_t(epoch)));
        for (int64_t step = 0; step < steps_per_epoch; ++step) {
            std::vector<int64_t> items;
            std::vector<std::array<int64_t, 3>> offs;
            plan_batch(data.full, order, run, "s3-crop", epoch, step, cfg.batch_stage3, items,
                       offs);
            const TF x_sparse = make_batch(data.sparse, items, offs, cfg.patch_size);
            const TF x_full = make_batch(data.full, items, offs, cfg.patch_size);

            std::vector<TF> taps;
            auto z_sparse = enc_sparse.forward(x_sparse, &taps);
            auto logits = clf.forward(z_sparse);
            const auto idx = nets::argmax_channel(logits);
            auto quant = ad::codebook_lookup(book.codes, idx,
                                             {z_sparse.shape()[2], z_sparse.shape()[3],
                                              z_sparse.shape()[4]},
                                             z_sparse.shape()[0]);
            auto recon = dec.forward(quant, &fusion, &taps);

            ad::zero_grad(params_d);
            auto d_loss = ad::add(ad::bce_with_logits_mean(disc.forward(x_full), 1.0),
                                  ad::bce_with_logits_mean(disc.forward(ad::detach(recon)), 0.0));
            ad::backward(d_loss);
            ad::adam_step(params_d, d_state);

            auto rec_term = ad::mse(x_full, recon);
            auto adv_term = ad::bce_with_logits_mean(disc.forward(recon), 1.0);
            auto perc_term = nets::perceptual_loss(
                x_full, recon, phi, Rng::derive(Rng::derive(cfg.seed, "s3-plane"), uint64_t(gstep)));
            auto total = ad::add(
                rec_term, ad::add(ad::scale(adv_term, cfg.lambda_adv),
                                  ad::scale(perc_term, cfg.lambda_p)));
            ensure_finite(total, last_good, out_ckpt, "stage3");
            ad::backward(total);
            // The hard code selection carries no gradient, so sparse-encoder
            // layers past the last fusion tap receive none; give them zeros
            // and they stay at their stage-2 values.
            for (auto& p : params_g) p.node()->ensure_grad();
            ad::adam_step(params_g, g_state);

            log.row(gstep, total.item(), rec_term.item(), adv_term.item(), d_loss.item(),
                    perc_term.item());
            ++gstep;
        }
        last_good = snapshot();
    }
    const std::string frozen_after = module_checksum(dec) + tensor_checksum(book.codes) +
                                     module_checksum(clf);
    if (frozen_before != frozen_after)
        throw ContractError("stage3: frozen component weights drifted");
    Checkpoint result = snapshot();
    if (!out_ckpt.empty()) result.save(out_ckpt);
    return result;
}

Checkpoint train_direct_ae(const DatasetManifest& manifest, const std::string& data_root,
                           const TrainConfig& cfg, const std::string& out_ckpt,
                           const std::string& log_csv) {
    validate_common(manifest, cfg);
    const auto data = load_split(manifest, data_root, "train", cfg, /*need_sparse=*/true);
    const int64_t n = int64_t(data.full.size());

    Rng init_rng(Rng::derive(cfg.seed, "direct-init"));
    auto enc = nets::Encoder<float>::create(cfg.arch, init_rng);
    auto dec = nets::Decoder<float>::create(cfg.arch, init_rng);
    auto disc = nets::Discriminator<float>::create(cfg.arch, init_rng);
    const auto phi = nets::PerceptualExtractor<float>::create(cfg.seed);

    std::vector<TF> params_g;
    enc.collect(params_g);
    dec.collect(params_g);
    std::vector<TF> params_d;
    disc.collect(params_d);
    ad::AdamState<float> g_state, d_state;
    g_state.learning_rate = d_state.learning_rate = cfg.learning_rate;
    g_state.init(params_g);
    d_state.init(params_d);

    auto snapshot = [&]() {
        Checkpoint ck;
        common_metadata(ck, manifest, cfg);
        ck.metadata["stage"] = "direct";
        enc.save(ck, "enc");
        dec.save(ck, "dec");
        disc.save(ck, "disc");
        return ck;
    };

    CsvLog log(log_csv, "step,total,reconstruction,adv_g,adv_d,perceptual");
    Checkpoint last_good = snapshot();
    int64_t gstep = 0;
    const int64_t steps_per_epoch = std::max<int64_t>(1, n / cfg.batch_stage1);

    for (int64_t epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
        const auto order = shuffled_order(n, Rng::derive(Rng::derive(cfg.seed, "da-order"),
                                                         uint64_t(epoch)));
        for (int64_t step = 0; step < steps_per_epoch; ++step) {
            std::vector<int64_t> items;
            std::vector<std::array<int64_t, 3>> offs;
            plan_batch(data.full, order, cfg, "da-crop", epoch, step, cfg.batch_stage1, items,
                       offs);
            const TF x_sparse = make_batch(data.sparse, items, offs, cfg.patch_size);
            const TF x_full = make_batch(data.full, items, offs, cfg.patch_size);

            auto recon = dec.forward(enc.forward(x_sparse));

            ad::zero_grad(params_d);
            auto d_loss = ad::add(ad::bce_with_logits_mean(disc.forward(x_full), 1.0),
                                  ad::bce_with_logits_mean(disc.forward(ad::detach(recon)), 0.0));
            ad::backward(d_loss);
            ad::adam_step(params_d, d_state);

            auto rec_term = ad::mse(x_full, recon);
            auto adv_term = ad::bce_with_logits_mean(disc.forward(recon), 1.0);
            auto perc_term = nets::perceptual_loss(
                x_full, recon, phi, Rng::derive(Rng::derive(cfg.seed, "da-plane"), uint64_t(gstep)));
            auto total = ad::add(
                rec_term, ad::add(ad::scale(adv_term, cfg.lambda_adv),
                                  ad::scale(perc_term, cfg.lambda_p)));
            ensure_finite(total, last_good, out_ckpt, "direct-ae");
            ad::backward(total);
            ad::adam_step(params_g, g_state);

            log.row(gstep, total.item(), rec_term.item(), adv_term.item(), d_loss.item(),
                    perc_term.item());
            ++gstep;
        }
        last_good = snapshot();
    }
    Checkpoint result = snapshot();
    if (!out_ckpt.empty()) result.save(out_ckpt);
    return result;
}

Volume infer_volume(const Volume& sparse_fdk, const Checkpoint& ckpt) {
    if (!ckpt.metadata.count("stage")) throw ContractError("checkpoint lacks a stage tag");
    const std::string stage = ckpt.metadata.at("stage");
    const TrainConfig cfg = TrainConfig::from_metadata(ckpt.metadata);
    const nets::ArchConfig arch = cfg.arch;

    const Volume norm = normalize_with(sparse_fdk, cfg.value_range());
    const TF x = TF::from_data({1, 1, norm.d, norm.h, norm.w}, norm.data);

    Rng dummy(0);
    TF out_tensor;
    if (stage == "direct") {
        auto enc = nets::Encoder<float>::create(arch, dummy);
        enc.load(ckpt, "enc", false);
        auto dec = nets::Decoder<float>::create(arch, dummy);
        dec.load(ckpt, "dec", false);
        out_tensor = dec.forward(enc.forward(x));
    } else if (stage == "2" || stage == "3") {
        auto enc_sparse = nets::Encoder<float>::create(arch, dummy);
        enc_sparse.load(ckpt, "enc_sparse", false);
        auto dec = nets::Decoder<float>::create(arch, dummy);
        dec.load(ckpt, "dec", false);
        auto clf = nets::CodeClassifier<float>::create(arch, dummy);
        clf.load(ckpt, "clf", false);
        vq::Codebook<float> book;
        book.codes = ckpt.get<float>("book.codes", false);

        std::vector<TF> taps;
        auto z = enc_sparse.forward(x, &taps);
        const auto idx = nets::argmax_channel(clf.forward(z));
        auto quant = ad::codebook_lookup(book.codes, idx,
                                         {z.shape()[2], z.shape()[3], z.shape()[4]},
                                         z.shape()[0]);
        if (stage == "3") {
            auto fusion = nets::FusionModule<float>::create(arch, dummy);
            fusion.load(ckpt, "fusion", false);
            out_tensor = dec.forward(quant, &fusion, &taps);
        } else {
            out_tensor = dec.forward(quant);
        }
    } else if (stage == "1") {
        throw ContractError(
            "stage-1 checkpoint has no sparse-view encoder; train stage 2 before inference");
    } else {
        throw ContractError("unknown checkpoint stage: " + stage);
    }

    Volume out = sparse_fdk;
    out.data.assign(out_tensor.data().begin(), out_tensor.data().end());
    return denormalize(out, cfg.value_range());
}

Volume infer(const ProjectionSet& sparse_proj, const Checkpoint& ckpt) {
    if (!ckpt.metadata.count("geometry_hash"))
        throw ContractError("checkpoint lacks a geometry hash");
    if (ckpt.metadata.at("geometry_hash") != sparse_proj.geometry.content_hash())
        throw GeometryError("projections were acquired with a different geometry than training");
    const RampWindow window =
        ramp_window_from_string(ckpt.metadata.count("fdk_window")
                                    ? ckpt.metadata.at("fdk_window")
                                    : "hann");
    const Volume fdk_vol = fdk_reconstruct(sparse_proj, window);
    return infer_volume(fdk_vol, ckpt);
}

}  // namespace cbct::train
