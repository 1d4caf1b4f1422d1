#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cbct/tensor.hpp"

namespace cbct::ad {

// Adam with bias correction. Moments are laid out parallel to the parameter
// list passed at init; the list must not change between steps.
template <typename T>
struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int64_t step_count = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;

    void init(const std::vector<Tensor<T>>& params) {
        first_moment.clear();
        second_moment.clear();
        for (const auto& p : params) {
            first_moment.emplace_back(p.size(), T(0));
            second_moment.emplace_back(p.size(), T(0));
        }
        step_count = 0;
    }
};

// One update across all parameters; zeroes gradients afterwards.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
    if (state.first_moment.size() != params.size())
        throw ContractError("adam_step: state not initialized for this parameter list");
    for (size_t i = 0; i < params.size(); ++i)
        if (params[i].grad().empty())
            throw ContractError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].data();
        auto& g = params[i].grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        const int64_t n = int64_t(p.size());
        for (int64_t j = 0; j < n; ++j) {
            const double gj = g[j];
            const double mj = state.beta1 * double(m[j]) + (1.0 - state.beta1) * gj;
            const double vj = state.beta2 * double(v[j]) + (1.0 - state.beta2) * gj * gj;
            m[j] = T(mj);
            v[j] = T(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            p[j] = T(double(p[j]) - state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
        }
        params[i].zero_grad();
    }
}

}  // namespace cbct::ad
