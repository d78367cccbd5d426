#pragma once

#include <cmath>
#include <map>
#include <string>

#include "lnmdet/tensor.hpp"

namespace lnmdet {

// Adam with bias correction. Moment tensors are keyed like the parameters;
// they are created lazily on the first step.
template <typename T>
struct AdamState {
    std::int64_t step = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::map<std::string, Tensor<T>> m;
    std::map<std::string, Tensor<T>> v;
};

template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params,
               const std::map<std::string, Tensor<T>>& grads, AdamState<T>& state) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        require(git != grads.end(), ErrorCategory::state, "missing gradient for " + name);
        const Tensor<T>& g = git->second;
        require(g.same_shape(p), ErrorCategory::shape, "gradient shape mismatch for " + name);
        auto& m = state.m.try_emplace(name, Tensor<T>(p.shape)).first->second;
        auto& v = state.v.try_emplace(name, Tensor<T>(p.shape)).first->second;
        const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
        const T one_m_b1 = static_cast<T>(1.0 - state.beta1);
        const T one_m_b2 = static_cast<T>(1.0 - state.beta2);
        const T lr = static_cast<T>(state.learning_rate);
        const T inv_bc1 = static_cast<T>(1.0 / bc1);
        const T inv_bc2 = static_cast<T>(1.0 / bc2);
        const T eps = static_cast<T>(state.epsilon);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const T gi = g.data[i];
            if (!std::isfinite(static_cast<double>(gi))) {
                raise(ErrorCategory::state, "non-finite gradient in " + name);
            }
            m.data[i] = b1 * m.data[i] + one_m_b1 * gi;
            v.data[i] = b2 * v.data[i] + one_m_b2 * gi * gi;
            const T mhat = m.data[i] * inv_bc1;
            const T vhat = v.data[i] * inv_bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace lnmdet
