#pragma once

#include <map>
#include <string>
#include <vector>

#include "lnmdet/layers.hpp"
#include "lnmdet/tensor.hpp"

namespace lnmdet {

enum class LayerKind {
    input,
    conv,
    batch_norm,
    relu,
    max_pool,
    avg_pool,
    crop_concat,
    softmax,
};

struct LayerSpec {
    LayerKind kind = LayerKind::input;
    std::string name;
    std::vector<int> inputs;  // node indices
    std::int64_t kernel = 0;
    std::int64_t stride = 1;
    std::int64_t filters = 0;
    std::vector<std::int64_t> crop_margins;  // crop_concat only, one per input
};

// Layered network: nodes in topological order, parameters and batch-norm
// running statistics in name-keyed stores (names are stable, so checkpoints
// and EWC anchors address parameters by name).
template <typename T>
struct NetGraph {
    std::vector<LayerSpec> nodes;
    std::map<std::string, Tensor<T>> params;
    std::map<std::string, Tensor<T>> state;
    bool training = false;
    std::int64_t input_channels = 3;

    const Tensor<T>& param(const std::string& name) const {
        auto it = params.find(name);
        require(it != params.end(), ErrorCategory::state, "unknown parameter " + name);
        return it->second;
    }

    template <typename U>
    NetGraph<U> cast() const {
        NetGraph<U> out;
        out.nodes = nodes;
        out.training = training;
        out.input_channels = input_channels;
        for (const auto& [k, v] : params) out.params.emplace(k, v.template cast<U>());
        for (const auto& [k, v] : state) out.state.emplace(k, v.template cast<U>());
        return out;
    }
};

// Forward-pass record; owns every intermediate activation so backward can
// replay the graph in reverse.
template <typename T>
struct Tape {
    std::vector<Tensor<T>> act;
    std::vector<BatchNormCache<T>> bn;
    std::vector<std::vector<std::int32_t>> pool_argmax;
    bool valid = false;
};

template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

// Runs the graph on a batch. In training mode batch-norm consumes batch
// statistics and updates the running averages in graph.state.
template <typename T>
const Tensor<T>& forward(NetGraph<T>& graph, const Tensor<T>& input, Tape<T>& tape) {
    require(input.rank() == 4, ErrorCategory::shape, "network input must be 4-d");
    require(input.dim(1) == graph.input_channels, ErrorCategory::shape,
            "network input channel mismatch");
    const std::size_t n_nodes = graph.nodes.size();
    tape.act.resize(n_nodes);
    tape.bn.resize(n_nodes);
    tape.pool_argmax.resize(n_nodes);

    for (std::size_t i = 0; i < n_nodes; ++i) {
        const LayerSpec& spec = graph.nodes[i];
        switch (spec.kind) {
            case LayerKind::input:
                tape.act[i] = input;
                break;
            case LayerKind::conv: {
                const Tensor<T>& x = tape.act[static_cast<std::size_t>(spec.inputs[0])];
                tape.act[i] = conv2d_valid(x, graph.param(spec.name + ".w"),
                                           graph.param(spec.name + ".b"), spec.stride);
                break;
            }
            case LayerKind::batch_norm: {
                const Tensor<T>& x = tape.act[static_cast<std::size_t>(spec.inputs[0])];
                tape.act[i] = batch_norm_forward(x, graph.param(spec.name + ".gamma"),
                                                 graph.param(spec.name + ".beta"),
                                                 graph.state.at(spec.name + ".mean"),
                                                 graph.state.at(spec.name + ".var"), graph.training,
                                                 tape.bn[i]);
                break;
            }
            case LayerKind::relu:
                tape.act[i] = relu_forward(tape.act[static_cast<std::size_t>(spec.inputs[0])]);
                break;
            case LayerKind::max_pool:
                tape.act[i] = max_pool_forward(tape.act[static_cast<std::size_t>(spec.inputs[0])],
                                               spec.kernel, spec.stride, tape.pool_argmax[i]);
                break;
            case LayerKind::avg_pool:
                tape.act[i] = avg_pool_forward(tape.act[static_cast<std::size_t>(spec.inputs[0])],
                                               spec.kernel, spec.stride);
                break;
            case LayerKind::crop_concat: {
                std::vector<const Tensor<T>*> ins;
                ins.reserve(spec.inputs.size());
                for (int idx : spec.inputs) ins.push_back(&tape.act[static_cast<std::size_t>(idx)]);
                tape.act[i] = crop_concat_forward(ins, spec.crop_margins);
                break;
            }
            case LayerKind::softmax:
                tape.act[i] = softmax_forward(tape.act[static_cast<std::size_t>(spec.inputs[0])]);
                break;
        }
    }
    tape.valid = true;
    return tape.act.back();
}

// Backpropagates d_output through the recorded tape and returns the gradient
// of every trained parameter. Gradients of activations are discarded.
template <typename T>
GradMap<T> backward(NetGraph<T>& graph, Tape<T>& tape, const Tensor<T>& d_output) {
    require(tape.valid, ErrorCategory::state, "backward called before forward");
    const std::size_t n_nodes = graph.nodes.size();
    require(tape.act.size() == n_nodes, ErrorCategory::state, "tape does not match graph");
    require(d_output.shape == tape.act.back().shape, ErrorCategory::shape,
            "loss gradient shape mismatch");

    GradMap<T> grads;
    std::vector<Tensor<T>> d_act(n_nodes);
    d_act[n_nodes - 1] = d_output;

    auto ensure = [&](int idx) -> Tensor<T>& {
        Tensor<T>& g = d_act[static_cast<std::size_t>(idx)];
        if (g.empty() && !tape.act[static_cast<std::size_t>(idx)].empty()) {
            g = Tensor<T>(tape.act[static_cast<std::size_t>(idx)].shape);
        }
        return g;
    };
    auto add_into = [](Tensor<T>& dst, const Tensor<T>& src) {
        for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
    };

    for (std::size_t ri = n_nodes; ri-- > 0;) {
        const LayerSpec& spec = graph.nodes[ri];
        if (spec.kind == LayerKind::input) continue;
        Tensor<T>& dy = d_act[ri];
        if (dy.empty()) continue;  // node feeds nothing that received gradient
        const int in0 = spec.inputs.empty() ? -1 : spec.inputs[0];
        const bool need_dx = in0 > 0 || spec.kind == LayerKind::crop_concat;

        switch (spec.kind) {
            case LayerKind::conv: {
                const Tensor<T>& x = tape.act[static_cast<std::size_t>(in0)];
                Tensor<T> dw, db, dx;
                conv2d_valid_backward(x, graph.param(spec.name + ".w"), dy, spec.stride, dw, db,
                                      need_dx ? &dx : nullptr);
                grads[spec.name + ".w"] = std::move(dw);
                grads[spec.name + ".b"] = std::move(db);
                if (need_dx) add_into(ensure(in0), dx);
                break;
            }
            case LayerKind::batch_norm: {
                const Tensor<T>& x = tape.act[static_cast<std::size_t>(in0)];
                Tensor<T> dgamma, dbeta, dx;
                batch_norm_backward(x, graph.param(spec.name + ".gamma"), dy, tape.bn[ri],
                                    graph.training, dgamma, dbeta, dx);
                grads[spec.name + ".gamma"] = std::move(dgamma);
                grads[spec.name + ".beta"] = std::move(dbeta);
                if (need_dx) add_into(ensure(in0), dx);
                break;
            }
            case LayerKind::relu:
                if (need_dx) add_into(ensure(in0), relu_backward(tape.act[ri], dy));
                break;
            case LayerKind::max_pool:
                if (need_dx) {
                    add_into(ensure(in0),
                             max_pool_backward(tape.act[static_cast<std::size_t>(in0)], dy,
                                               tape.pool_argmax[ri]));
                }
                break;
            case LayerKind::avg_pool:
                if (need_dx) {
                    add_into(ensure(in0), avg_pool_backward(tape.act[static_cast<std::size_t>(in0)],
                                                            dy, spec.kernel, spec.stride));
                }
                break;
            case LayerKind::crop_concat: {
                std::vector<const Tensor<T>*> ins;
                for (int idx : spec.inputs) ins.push_back(&tape.act[static_cast<std::size_t>(idx)]);
                auto parts = crop_concat_backward(ins, spec.crop_margins, dy);
                for (std::size_t k = 0; k < parts.size(); ++k) {
                    if (spec.inputs[k] > 0) add_into(ensure(spec.inputs[k]), parts[k]);
                }
                break;
            }
            case LayerKind::softmax:
                if (need_dx) add_into(ensure(in0), softmax_backward(tape.act[ri], dy));
                break;
            case LayerKind::input:
                break;
        }
        dy = Tensor<T>();  // release as soon as consumed
    }

    // Every trained parameter reports a gradient even if its node never saw
    // upstream signal (possible with zero loss gradients).
    for (const auto& [name, p] : graph.params) {
        if (!grads.count(name)) grads.emplace(name, Tensor<T>(p.shape));
    }
    return grads;
}

}  // namespace lnmdet
