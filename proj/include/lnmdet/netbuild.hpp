#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lnmdet/graph.hpp"
#include "lnmdet/init.hpp"
#include "lnmdet/rng.hpp"

namespace lnmdet {

// Valid-padding DenseNet configuration. Defaults give the 279 -> 1x1 network;
// filter_scale shrinks the 64/32 filter counts so small tests run fast.
struct NetConfig {
    std::int64_t input_size = 279;
    std::int64_t input_channels = 3;
    std::int64_t initial_kernel = 7;
    std::int64_t initial_stride = 2;
    std::int64_t initial_pool = 3;
    std::int64_t initial_pool_stride = 2;
    int dense_blocks = 3;
    int units_per_block = 4;
    std::int64_t bottleneck_filters = 64;
    std::int64_t growth_filters = 32;
    double compression = 0.5;
    std::int64_t transition_pool = 2;
    std::int64_t transition_pool_stride = 2;
    std::int64_t final_kernel = 3;
    std::int64_t classes = 2;
    double filter_scale = 1.0;

    std::int64_t scaled(std::int64_t filters) const {
        std::int64_t f = static_cast<std::int64_t>(std::llround(static_cast<double>(filters) * filter_scale));
        return f < 1 ? 1 : f;
    }
    std::int64_t stem_filters() const { return scaled(2 * growth_filters); }
    std::int64_t bottleneck() const { return scaled(bottleneck_filters); }
    std::int64_t growth() const { return scaled(growth_filters); }

    void validate() const {
        require(input_size >= 1 && input_channels >= 1, ErrorCategory::shape, "bad input dims");
        require(compression > 0.0 && compression <= 1.0, ErrorCategory::shape,
                "compression must be in (0, 1]");
        require(dense_blocks >= 1 && units_per_block >= 1, ErrorCategory::shape,
                "need at least one dense block and unit");
        require(classes >= 2, ErrorCategory::shape, "need at least two classes");
        require(filter_scale > 0.0, ErrorCategory::shape, "filter_scale must be positive");
    }
};

struct ShapeTraceEntry {
    std::string name;
    std::int64_t in_extent = 0;
    std::int64_t out_extent = 0;
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t cumulative_stride = 1;
};

struct ShapeTrace {
    std::vector<ShapeTraceEntry> entries;

    std::int64_t output_extent() const { return entries.back().out_extent; }
    std::int64_t output_channels() const { return entries.back().out_channels; }
    std::int64_t total_stride() const { return entries.back().cumulative_stride; }
};

namespace detail {

// Walks the architecture once; the callback sees every layer in order. Both
// trace_shapes and build_network derive from this single walk so the trace
// can never drift from the built graph.
template <typename Fn>
void walk_architecture(const NetConfig& cfg, Fn&& layer) {
    // layer(name, kind, kernel, stride, filters, concat_sources)
    layer("stem.conv", LayerKind::conv, cfg.initial_kernel, cfg.initial_stride, cfg.stem_filters());
    layer("stem.pool", LayerKind::max_pool, cfg.initial_pool, cfg.initial_pool_stride, std::int64_t(0));
    for (int b = 1; b <= cfg.dense_blocks; ++b) {
        const std::string bp = "block" + std::to_string(b);
        for (int u = 1; u <= cfg.units_per_block; ++u) {
            const std::string up = bp + ".unit" + std::to_string(u);
            if (u > 1) layer(up + ".concat", LayerKind::crop_concat, std::int64_t(u - 1), std::int64_t(0), std::int64_t(0));
            layer(up + ".conv1", LayerKind::conv, std::int64_t(1), std::int64_t(1), cfg.bottleneck());
            layer(up + ".conv3", LayerKind::conv, std::int64_t(3), std::int64_t(1), cfg.growth());
        }
        layer(bp + ".concat", LayerKind::crop_concat, std::int64_t(cfg.units_per_block), std::int64_t(0), std::int64_t(0));
        if (b < cfg.dense_blocks) {
            const std::string tp = "transition" + std::to_string(b);
            layer(tp + ".conv", LayerKind::conv, std::int64_t(1), std::int64_t(1), std::int64_t(-1));
            layer(tp + ".pool", LayerKind::avg_pool, cfg.transition_pool, cfg.transition_pool_stride, std::int64_t(0));
        }
    }
    layer("final.conv", LayerKind::conv, cfg.final_kernel, std::int64_t(1), cfg.classes);
    layer("softmax", LayerKind::softmax, std::int64_t(0), std::int64_t(0), std::int64_t(0));
}

}  // namespace detail

// Pure shape arithmetic for the configured architecture. Throws a
// construction error naming the first layer that would produce a
// non-positive extent.
inline ShapeTrace trace_shapes(const NetConfig& cfg) {
    cfg.validate();
    ShapeTrace trace;
    std::int64_t extent = cfg.input_size;
    std::int64_t channels = cfg.input_channels;
    std::int64_t block_in_channels = 0;
    std::int64_t cum_stride = 1;

    detail::walk_architecture(cfg, [&](const std::string& name, LayerKind kind, std::int64_t kernel,
                                       std::int64_t stride, std::int64_t filters) {
        ShapeTraceEntry e;
        e.name = name;
        e.in_extent = extent;
        e.in_channels = channels;
        switch (kind) {
            case LayerKind::conv: {
                std::int64_t f = filters;
                if (f < 0) f = static_cast<std::int64_t>(std::llround(cfg.compression * static_cast<double>(channels)));
                require(extent >= kernel, ErrorCategory::shape,
                        "layer " + name + ": extent " + std::to_string(extent) +
                            " smaller than kernel " + std::to_string(kernel));
                extent = (extent - kernel) / stride + 1;
                channels = f;
                break;
            }
            case LayerKind::max_pool:
            case LayerKind::avg_pool:
                require(extent >= kernel, ErrorCategory::shape,
                        "layer " + name + ": extent " + std::to_string(extent) +
                            " smaller than pool window " + std::to_string(kernel));
                extent = (extent - kernel) / stride + 1;
                break;
            case LayerKind::crop_concat:
                // kernel carries the number of unit outputs joined here
                channels = block_in_channels + kernel * cfg.growth();
                break;
            case LayerKind::softmax:
                break;
            default:
                break;
        }
        if (kind == LayerKind::conv || kind == LayerKind::max_pool || kind == LayerKind::avg_pool) {
            if (stride > 1) cum_stride *= stride;
        }
        require(extent >= 1, ErrorCategory::shape,
                "layer " + name + ": non-positive output extent");
        e.out_extent = extent;
        e.out_channels = channels;
        e.cumulative_stride = cum_stride;
        trace.entries.push_back(e);

        // block bookkeeping: a block starts right after the stem pool or a
        // transition pool
        if (name == "stem.pool" || name.find("transition") == 0) {
            if (kind == LayerKind::max_pool || kind == LayerKind::avg_pool) block_in_channels = channels;
        }
    });
    return trace;
}

// Receptive-field half-width of the default patch network; a map produced in
// fully-convolutional mode predicts the label of the pixel this far from the
// window corner.
inline std::int64_t receptive_half_width(const NetConfig& cfg) {
    return (cfg.input_size - 1) / 2;
}

// Builds the network graph and He-initializes it. Node layout matches
// trace_shapes exactly.
template <typename T>
NetGraph<T> build_network(const NetConfig& cfg, Rng& rng) {
    trace_shapes(cfg);  // validates extents, throws on bad configs
    NetGraph<T> g;
    g.input_channels = cfg.input_channels;
    g.nodes.push_back(LayerSpec{LayerKind::input, "input", {}, 0, 1, 0, {}});

    std::int64_t channels = cfg.input_channels;
    std::int64_t block_in_channels = 0;
    int block_in_node = 0;
    std::vector<int> unit_outputs;  // relu outputs of the current block's units
    int last = 0;

    auto add_node = [&](LayerSpec spec) -> int {
        g.nodes.push_back(std::move(spec));
        return static_cast<int>(g.nodes.size()) - 1;
    };
    auto add_conv = [&](const std::string& name, std::int64_t kernel, std::int64_t stride,
                        std::int64_t filters, int input, bool with_bn_relu) -> int {
        Tensor<T> w({filters, channels, kernel, kernel});
        he_init(w, rng);
        g.params.emplace(name + ".w", std::move(w));
        g.params.emplace(name + ".b", Tensor<T>({filters}));
        int node = add_node(LayerSpec{LayerKind::conv, name, {input}, kernel, stride, filters, {}});
        channels = filters;
        if (with_bn_relu) {
            g.params.emplace(name + ".bn.gamma", Tensor<T>({filters}, T(1)));
            g.params.emplace(name + ".bn.beta", Tensor<T>({filters}));
            g.state.emplace(name + ".bn.mean", Tensor<T>({filters}));
            g.state.emplace(name + ".bn.var", Tensor<T>({filters}, T(1)));
            node = add_node(LayerSpec{LayerKind::batch_norm, name + ".bn", {node}, 0, 1, 0, {}});
            node = add_node(LayerSpec{LayerKind::relu, name + ".relu", {node}, 0, 1, 0, {}});
        }
        return node;
    };
    auto add_concat = [&](const std::string& name, int units) -> int {
        // inputs: block input plus the first `units` unit outputs; each 3x3
        // valid conv shrank the extent by 2, so margins step down by 1
        LayerSpec spec{LayerKind::crop_concat, name, {}, 0, 1, 0, {}};
        spec.inputs.push_back(block_in_node);
        spec.crop_margins.push_back(units);
        for (int j = 0; j < units; ++j) {
            spec.inputs.push_back(unit_outputs[static_cast<std::size_t>(j)]);
            spec.crop_margins.push_back(units - 1 - j);
        }
        channels = block_in_channels + static_cast<std::int64_t>(units) * cfg.growth();
        return add_node(std::move(spec));
    };

    last = add_conv("stem.conv", cfg.initial_kernel, cfg.initial_stride, cfg.stem_filters(), last, true);
    last = add_node(LayerSpec{LayerKind::max_pool, "stem.pool", {last}, cfg.initial_pool,
                              cfg.initial_pool_stride, 0, {}});

    for (int b = 1; b <= cfg.dense_blocks; ++b) {
        const std::string bp = "block" + std::to_string(b);
        block_in_node = last;
        block_in_channels = channels;
        unit_outputs.clear();
        for (int u = 1; u <= cfg.units_per_block; ++u) {
            const std::string up = bp + ".unit" + std::to_string(u);
            int unit_in = (u == 1) ? block_in_node : add_concat(up + ".concat", u - 1);
            if (u > 1) {
                // concat set channels; conv consumes them
            } else {
                channels = block_in_channels;
            }
            int x = add_conv(up + ".conv1", 1, 1, cfg.bottleneck(), unit_in, true);
            x = add_conv(up + ".conv3", 3, 1, cfg.growth(), x, true);
            unit_outputs.push_back(x);
        }
        last = add_concat(bp + ".concat", cfg.units_per_block);
        if (b < cfg.dense_blocks) {
            const std::string tp = "transition" + std::to_string(b);
            const std::int64_t f =
                static_cast<std::int64_t>(std::llround(cfg.compression * static_cast<double>(channels)));
            last = add_conv(tp + ".conv", 1, 1, f, last, true);
            last = add_node(LayerSpec{LayerKind::avg_pool, tp + ".pool", {last}, cfg.transition_pool,
                                      cfg.transition_pool_stride, 0, {}});
        }
    }

    last = add_conv("final.conv", cfg.final_kernel, 1, cfg.classes, last, false);
    add_node(LayerSpec{LayerKind::softmax, "softmax", {last}, 0, 1, 0, {}});
    return g;
}

}  // namespace lnmdet
