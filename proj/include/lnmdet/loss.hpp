#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lnmdet/tensor.hpp"

namespace lnmdet {

constexpr double kProbFloor = 1e-12;

inline bool l2_regularized(const std::string& name) {
    // batch-norm scale/shift stay out of the L2 penalty
    auto ends_with = [&](const char* suffix) {
        std::string s(suffix);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return !ends_with(".gamma") && !ends_with(".beta");
}

template <typename T>
double l2_penalty(const std::map<std::string, Tensor<T>>& params, double lambda) {
    double acc = 0.0;
    for (const auto& [name, p] : params) {
        if (!l2_regularized(name)) continue;
        for (T v : p.data) acc += static_cast<double>(v) * static_cast<double>(v);
    }
    return lambda * acc;
}

// Mean negative log-likelihood over the batch. probs holds softmax outputs
// [N, classes, 1, 1]; a 0 at the true label is clamped to 1e-12.
template <typename T>
double cross_entropy(const Tensor<T>& probs, const std::vector<int>& labels) {
    const std::int64_t n = probs.dim(0), c = probs.dim(1);
    require(probs.rank() == 4 && probs.dim(2) == 1 && probs.dim(3) == 1, ErrorCategory::shape,
            "cross entropy expects [N, classes, 1, 1] probabilities");
    require(static_cast<std::int64_t>(labels.size()) == n, ErrorCategory::shape,
            "label count mismatch");
    double acc = 0.0;
    for (std::int64_t s = 0; s < n; ++s) {
        const int y = labels[static_cast<std::size_t>(s)];
        require(y >= 0 && y < c, ErrorCategory::data, "label out of range");
        double p = static_cast<double>(probs.data[static_cast<std::size_t>(s * c + y)]);
        if (p < kProbFloor) p = kProbFloor;
        acc -= std::log(p);
    }
    return acc / static_cast<double>(n);
}

// Total training loss: mean cross entropy plus lambda * sum(theta^2).
template <typename T>
double cross_entropy_l2(const Tensor<T>& probs, const std::vector<int>& labels,
                        const std::map<std::string, Tensor<T>>& params, double lambda = 1e-4) {
    return cross_entropy(probs, labels) + l2_penalty(params, lambda);
}

// Gradient of the mean cross entropy with respect to the probabilities.
template <typename T>
Tensor<T> cross_entropy_backward(const Tensor<T>& probs, const std::vector<int>& labels) {
    const std::int64_t n = probs.dim(0), c = probs.dim(1);
    Tensor<T> d(probs.shape);
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::int64_t s = 0; s < n; ++s) {
        const int y = labels[static_cast<std::size_t>(s)];
        T p = probs.data[static_cast<std::size_t>(s * c + y)];
        if (p < static_cast<T>(kProbFloor)) p = static_cast<T>(kProbFloor);
        d.data[static_cast<std::size_t>(s * c + y)] = -inv_n / p;
    }
    return d;
}

// L2 gradient contribution, added onto existing parameter gradients.
template <typename T>
void add_l2_grad(const std::map<std::string, Tensor<T>>& params, double lambda,
                 std::map<std::string, Tensor<T>>& grads) {
    if (lambda == 0.0) return;
    const T two_lambda = static_cast<T>(2.0 * lambda);
    for (const auto& [name, p] : params) {
        if (!l2_regularized(name)) continue;
        auto& g = grads.at(name);
        for (std::size_t i = 0; i < p.data.size(); ++i) g.data[i] += two_lambda * p.data[i];
    }
}

}  // namespace lnmdet
