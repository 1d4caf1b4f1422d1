#pragma once

#include <cstdint>
#include <vector>

#include "cbct/ops.hpp"
#include "cbct/rng.hpp"
#include "cbct/tensor.hpp"

// Discrete prior: learnable code vectors with nearest-neighbor quantization
// and straight-through gradients.
namespace cbct::vq {

template <typename T>
struct Codebook {
    ad::Tensor<T> codes;  // [K, c]

    int64_t size() const { return codes.shape()[0]; }
    int64_t dim() const { return codes.shape()[1]; }

    static Codebook create(int64_t K, int64_t c, Rng& rng, bool trainable = true) {
        if (K < 2) throw ParamError("codebook size must be >= 2");
        Codebook b;
        b.codes = ad::Tensor<T>::randn({K, c}, rng, 0.5, trainable);
        return b;
    }

    // Data-dependent init: code vectors sampled from encoder output positions.
    void init_from_features(const ad::Tensor<T>& features, Rng& rng) {
        const auto& s = features.shape();
        const int64_t N = s[0], C = s[1];
        if (C != dim()) throw ShapeError("codebook init: feature dim mismatch");
        int64_t sp = 1;
        for (size_t i = 2; i < s.size(); ++i) sp *= s[i];
        const int64_t positions = N * sp;
        for (int64_t k = 0; k < size(); ++k) {
            const int64_t p = int64_t(rng.below(uint64_t(positions)));
            const int64_t n = p / sp, v = p % sp;
            for (int64_t ch = 0; ch < C; ++ch)
                codes.data()[k * C + ch] = features.data()[(n * C + ch) * sp + v];
        }
    }
};

template <typename T>
struct CodeAssignment {
    std::vector<int32_t> indices;   // batch-major, one code id per voxel
    std::vector<int64_t> spatial;   // D,H,W of the feature grid
    int64_t batch = 0;
    ad::Tensor<T> quantized;        // straight-through node over the features
};

// L2-nearest code per voxel, ties broken by lowest index. The quantized
// tensor's backward copies gradients to the feature input unchanged.
template <typename T>
CodeAssignment<T> quantize_nearest(const ad::Tensor<T>& features, const Codebook<T>& book) {
    const auto& s = features.shape();
    if (s.size() != 5) throw ShapeError("quantize_nearest: features must be [N,c,D,H,W]");
    const int64_t N = s[0], C = s[1];
    if (C != book.dim())
        throw ShapeError("quantize_nearest: feature dim " + std::to_string(C) +
                         " vs codebook dim " + std::to_string(book.dim()));
    const int64_t K = book.size();
    const int64_t sp = s[2] * s[3] * s[4];

    CodeAssignment<T> out;
    out.batch = N;
    out.spatial = {s[2], s[3], s[4]};
    out.indices.resize(N * sp);
    std::vector<T> qvalues(features.size());
    const T* f = features.data().data();
    const T* cb = book.codes.data().data();
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < N * sp; ++p) {
        const int64_t n = p / sp, v = p % sp;
        double best = 1e300;
        int32_t best_k = 0;
        for (int64_t k = 0; k < K; ++k) {
            double dist = 0;
            const T* row = cb + k * C;
            for (int64_t ch = 0; ch < C; ++ch) {
                const double d = double(f[(n * C + ch) * sp + v]) - double(row[ch]);
                dist += d * d;
            }
            if (dist < best) {  // strict: ties keep the lowest index
                best = dist;
                best_k = int32_t(k);
            }
        }
        out.indices[p] = best_k;
        for (int64_t ch = 0; ch < C; ++ch)
            qvalues[(n * C + ch) * sp + v] = cb[best_k * C + ch];
    }
    out.quantized = ad::straight_through(features, std::move(qvalues));
    return out;
}

// VQ objective: reconstruction + codebook + commitment terms, each a mean
// squared error. Stop-gradients make the middle term train only the code
// table and the last term only the encoder.
template <typename T>
ad::Tensor<T> vq_loss(const ad::Tensor<T>& vol_in, const ad::Tensor<T>& vol_rec,
                      const ad::Tensor<T>& features, const CodeAssignment<T>& assign,
                      const Codebook<T>& book) {
    auto rec_term = ad::mse(vol_in, vol_rec);
    auto looked_up = ad::codebook_lookup(book.codes, assign.indices, assign.spatial, assign.batch);
    auto code_term = ad::mse(ad::detach(features), looked_up);
    auto commit_term = ad::mse(ad::detach(assign.quantized), features);
    return ad::add(rec_term, ad::add(code_term, commit_term));
}

// Collapse diagnostics over a stream of assignments.
struct UsageHistogram {
    std::vector<int64_t> counts;
    int64_t total = 0;

    explicit UsageHistogram(int64_t K) : counts(K, 0) {}

    template <typename T>
    void add(const CodeAssignment<T>& a) {
        for (int32_t idx : a.indices) {
            ++counts[idx];
            ++total;
        }
    }

    double used_fraction() const {
        if (counts.empty()) return 0.0;
        int64_t used = 0;
        for (int64_t c : counts) used += c > 0 ? 1 : 0;
        return double(used) / double(counts.size());
    }
};

}  // namespace cbct::vq
