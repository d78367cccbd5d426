#pragma once

// Shared helpers for the unit and acceptance suites: random tensors, a
// brute-force convolution, and a central-difference gradient checker that is
// independent of the backward implementations it verifies.

#include <cmath>
#include <functional>
#include <vector>

#include "lnmdet/graph.hpp"
#include "lnmdet/init.hpp"
#include "lnmdet/rng.hpp"
#include "lnmdet/tensor.hpp"

namespace lnmdet::test {

inline Tensor<double> random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

// Direct 6-loop convolution, the reference for conv2d_valid.
inline Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& w,
                                     const Tensor<double>& b, std::int64_t stride) {
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const std::int64_t f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::int64_t oh = (h - kh) / stride + 1, ow = (ww - kw) / stride + 1;
    Tensor<double> out({n, f, oh, ow});
    for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t fi = 0; fi < f; ++fi)
            for (std::int64_t i = 0; i < oh; ++i)
                for (std::int64_t j = 0; j < ow; ++j) {
                    double acc = b.data[static_cast<std::size_t>(fi)];
                    for (std::int64_t ci = 0; ci < c; ++ci)
                        for (std::int64_t ki = 0; ki < kh; ++ki)
                            for (std::int64_t kj = 0; kj < kw; ++kj)
                                acc += x.at4(s, ci, i * stride + ki, j * stride + kj) *
                                       w.at4(fi, ci, ki, kj);
                    out.at4(s, fi, i, j) = acc;
                }
    return out;
}

// Scalar objective J = sum(weights .* forward(input)); random weights make
// every output position contribute.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
};

inline GradCheckResult gradient_check(NetGraph<double>& graph, const Tensor<double>& input,
                                      Rng& rng, double h = 1e-5) {
    Tape<double> tape;
    const Tensor<double>& out = forward(graph, input, tape);
    Tensor<double> mix(out.shape);
    for (auto& v : mix.data) v = rng.uniform(-1.0, 1.0);

    auto objective = [&]() {
        Tape<double> t;
        // batch-norm running averages must not drift while probing
        auto saved_state = graph.state;
        const Tensor<double>& o = forward(graph, input, t);
        double acc = 0.0;
        for (std::size_t i = 0; i < o.data.size(); ++i) acc += o.data[i] * mix.data[i];
        graph.state = saved_state;
        return acc;
    };

    auto saved_state = graph.state;
    GradMap<double> grads = backward(graph, tape, mix);
    graph.state = saved_state;

    GradCheckResult res;
    for (auto& [name, p] : graph.params) {
        Tensor<double>& g = grads.at(name);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double orig = p.data[i];
            p.data[i] = orig + h;
            const double jp = objective();
            p.data[i] = orig - h;
            const double jm = objective();
            p.data[i] = orig;
            const double numeric = (jp - jm) / (2.0 * h);
            const double analytic = g.data[i];
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
            const double rel = std::fabs(numeric - analytic) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = name;
            }
        }
    }
    return res;
}

// Small hand-built graphs for per-layer checks.
struct GraphBuilder {
    NetGraph<double> g;
    int last = 0;

    explicit GraphBuilder(std::int64_t channels) {
        g.input_channels = channels;
        g.nodes.push_back(LayerSpec{LayerKind::input, "input", {}, 0, 1, 0, {}});
    }
    GraphBuilder& conv(std::int64_t c_in, std::int64_t f, std::int64_t k, std::int64_t stride,
                       Rng& rng) {
        const std::string name = "conv" + std::to_string(g.nodes.size());
        Tensor<double> w({f, c_in, k, k});
        he_init(w, rng);
        g.params.emplace(name + ".w", std::move(w));
        Tensor<double> b({f});
        for (auto& v : b.data) v = rng.uniform(-0.1, 0.1);
        g.params.emplace(name + ".b", std::move(b));
        g.nodes.push_back(LayerSpec{LayerKind::conv, name, {last}, k, stride, f, {}});
        last = static_cast<int>(g.nodes.size()) - 1;
        return *this;
    }
    GraphBuilder& bn(std::int64_t c, Rng& rng) {
        const std::string name = "bn" + std::to_string(g.nodes.size());
        Tensor<double> gamma({c}), beta({c});
        for (auto& v : gamma.data) v = rng.uniform(0.5, 1.5);
        for (auto& v : beta.data) v = rng.uniform(-0.3, 0.3);
        g.params.emplace(name + ".gamma", std::move(gamma));
        g.params.emplace(name + ".beta", std::move(beta));
        g.state.emplace(name + ".mean", Tensor<double>({c}));
        Tensor<double> var({c});
        for (auto& v : var.data) v = rng.uniform(0.5, 2.0);
        g.state.emplace(name + ".var", std::move(var));
        g.nodes.push_back(LayerSpec{LayerKind::batch_norm, name, {last}, 0, 1, 0, {}});
        last = static_cast<int>(g.nodes.size()) - 1;
        return *this;
    }
    GraphBuilder& relu() {
        g.nodes.push_back(
            LayerSpec{LayerKind::relu, "relu" + std::to_string(g.nodes.size()), {last}, 0, 1, 0, {}});
        last = static_cast<int>(g.nodes.size()) - 1;
        return *this;
    }
    GraphBuilder& max_pool(std::int64_t k, std::int64_t stride) {
        g.nodes.push_back(LayerSpec{LayerKind::max_pool, "maxpool" + std::to_string(g.nodes.size()),
                                    {last}, k, stride, 0, {}});
        last = static_cast<int>(g.nodes.size()) - 1;
        return *this;
    }
    GraphBuilder& avg_pool(std::int64_t k, std::int64_t stride) {
        g.nodes.push_back(LayerSpec{LayerKind::avg_pool, "avgpool" + std::to_string(g.nodes.size()),
                                    {last}, k, stride, 0, {}});
        last = static_cast<int>(g.nodes.size()) - 1;
        return *this;
    }
    GraphBuilder& crop_concat(std::vector<int> inputs, std::vector<std::int64_t> margins) {
        LayerSpec spec{LayerKind::crop_concat, "concat" + std::to_string(g.nodes.size()),
                       std::move(inputs), 0, 1, 0, std::move(margins)};
        g.nodes.push_back(std::move(spec));
        last = static_cast<int>(g.nodes.size()) - 1;
        return *this;
    }
    GraphBuilder& softmax() {
        g.nodes.push_back(LayerSpec{LayerKind::softmax, "softmax" + std::to_string(g.nodes.size()),
                                    {last}, 0, 1, 0, {}});
        last = static_cast<int>(g.nodes.size()) - 1;
        return *this;
    }
};

}  // namespace lnmdet::test
