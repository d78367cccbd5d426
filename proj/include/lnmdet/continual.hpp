#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lnmdet/graph.hpp"
#include "lnmdet/rng.hpp"
#include "lnmdet/tensor.hpp"
#include "lnmdet/threadpool.hpp"

namespace lnmdet {

// Per-task anchor: diagonal Fisher estimates and the reference parameters
// the quadratic penalty pulls toward.
template <typename T>
struct FisherAnchor {
    std::string task;
    std::uint64_t sample_count = 0;
    std::map<std::string, Tensor<T>> fisher;
    std::map<std::string, Tensor<T>> theta_star;
};

template <typename T>
struct EwcConfig {
    double phi = 0.01;  // total weight, split evenly across anchors
    std::vector<FisherAnchor<T>> anchors;

    bool active() const { return phi != 0.0 && !anchors.empty(); }
};

namespace detail {

template <typename T>
void check_anchor(const std::map<std::string, Tensor<T>>& params, const FisherAnchor<T>& a) {
    for (const auto& [name, p] : params) {
        auto fit = a.fisher.find(name);
        auto tit = a.theta_star.find(name);
        require(fit != a.fisher.end() && tit != a.theta_star.end(), ErrorCategory::shape,
                "anchor for task " + a.task + " is missing parameter " + name);
        require(fit->second.shape == p.shape && tit->second.shape == p.shape, ErrorCategory::shape,
                "anchor shape mismatch for parameter " + name);
    }
}

}  // namespace detail

// sum over anchors a of (phi / #anchors) * sum_i F_i^a (theta_i - theta*_i^a)^2
template <typename T>
double ewc_loss(const std::map<std::string, Tensor<T>>& params, const EwcConfig<T>& cfg) {
    if (!cfg.active()) return 0.0;
    const double coef = cfg.phi / static_cast<double>(cfg.anchors.size());
    double total = 0.0;
    for (const auto& a : cfg.anchors) {
        detail::check_anchor(params, a);
        double acc = 0.0;
        for (const auto& [name, p] : params) {
            const Tensor<T>& f = a.fisher.at(name);
            const Tensor<T>& ref = a.theta_star.at(name);
            for (std::size_t i = 0; i < p.data.size(); ++i) {
                const double d = static_cast<double>(p.data[i]) - static_cast<double>(ref.data[i]);
                acc += static_cast<double>(f.data[i]) * d * d;
            }
        }
        total += coef * acc;
    }
    return total;
}

template <typename T>
void add_ewc_grad(const std::map<std::string, Tensor<T>>& params, const EwcConfig<T>& cfg,
                  GradMap<T>& grads) {
    if (!cfg.active()) return;
    const T coef2 = static_cast<T>(2.0 * cfg.phi / static_cast<double>(cfg.anchors.size()));
    for (const auto& a : cfg.anchors) {
        detail::check_anchor(params, a);
        for (const auto& [name, p] : params) {
            const Tensor<T>& f = a.fisher.at(name);
            const Tensor<T>& ref = a.theta_star.at(name);
            Tensor<T>& g = grads.at(name);
            for (std::size_t i = 0; i < p.data.size(); ++i) {
                g.data[i] += coef2 * f.data[i] * (p.data[i] - ref.data[i]);
            }
        }
    }
}

// d ewc_loss / d theta = 2 (phi / #anchors) * F * (theta - theta*), summed
// over anchors.
template <typename T>
GradMap<T> ewc_grad(const std::map<std::string, Tensor<T>>& params, const EwcConfig<T>& cfg) {
    GradMap<T> grads;
    for (const auto& [name, p] : params) grads.emplace(name, Tensor<T>(p.shape));
    add_ewc_grad(params, cfg, grads);
    return grads;
}

// Supplies the network input for Fisher-estimation patch i. The rng is the
// per-patch stream; it continues into the label draw afterwards.
template <typename T>
using PatchProvider = std::function<Tensor<T>(std::int64_t index, Rng& rng)>;

// Diagonal Fisher estimate: mean over patches of the squared score of a label
// drawn from the model's own predictive distribution. The graph must be in
// inference mode so batch-norm running statistics stay untouched.
template <typename T>
FisherAnchor<T> estimate_fisher(NetGraph<T>& graph, const PatchProvider<T>& provider,
                                std::int64_t n_patches, const std::string& task,
                                std::uint64_t seed) {
    require(!graph.training, ErrorCategory::state, "Fisher estimation needs inference mode");
    require(n_patches > 0, ErrorCategory::data, "Fisher estimation needs at least one patch");

    FisherAnchor<T> anchor;
    anchor.task = task;
    anchor.sample_count = static_cast<std::uint64_t>(n_patches);
    for (const auto& [name, p] : graph.params) {
        anchor.fisher.emplace(name, Tensor<T>(p.shape));
        anchor.theta_star.emplace(name, p);
    }

    // per-patch squared scores are accumulated in patch order, so the result
    // does not depend on the thread count
    const std::int64_t slots = std::max<std::int64_t>(2 * ThreadPool::global().size(), 2);
    std::vector<GradMap<T>> slot_grads(static_cast<std::size_t>(slots));

    for (std::int64_t base = 0; base < n_patches; base += slots) {
        const std::int64_t block = std::min(slots, n_patches - base);
        ThreadPool::global().parallel_for(block, [&](std::int64_t s) {
            const std::int64_t index = base + s;
            Rng rng(derive_seed(seed, "fisher", static_cast<std::uint64_t>(index)));
            Tensor<T> input = provider(index, rng);
            Tape<T> tape;
            const Tensor<T>& probs = forward(graph, input, tape);
            require(probs.dim(0) == 1 && probs.dim(2) == 1 && probs.dim(3) == 1,
                    ErrorCategory::shape, "Fisher estimation expects single-patch outputs");
            const std::int64_t classes = probs.dim(1);
            // draw y from the predictive distribution
            double u = rng.uniform();
            std::int64_t y = classes - 1;
            double cum = 0.0;
            for (std::int64_t c = 0; c < classes; ++c) {
                cum += static_cast<double>(probs.data[static_cast<std::size_t>(c)]);
                if (u < cum) {
                    y = c;
                    break;
                }
            }
            // d log p(y) / d probs = one-hot(y) / p_y
            Tensor<T> dprobs(probs.shape);
            T py = probs.data[static_cast<std::size_t>(y)];
            if (py < static_cast<T>(1e-12)) py = static_cast<T>(1e-12);
            dprobs.data[static_cast<std::size_t>(y)] = T(1) / py;
            slot_grads[static_cast<std::size_t>(s)] = backward(graph, tape, dprobs);
        });
        for (std::int64_t s = 0; s < block; ++s) {
            const GradMap<T>& g = slot_grads[static_cast<std::size_t>(s)];
            for (auto& [name, f] : anchor.fisher) {
                const Tensor<T>& gs = g.at(name);
                for (std::size_t i = 0; i < f.data.size(); ++i) {
                    f.data[i] += gs.data[i] * gs.data[i];
                }
            }
        }
    }
    const T inv_n = T(1) / static_cast<T>(n_patches);
    for (auto& [name, f] : anchor.fisher) {
        for (auto& v : f.data) v *= inv_n;
    }
    return anchor;
}

}  // namespace lnmdet
