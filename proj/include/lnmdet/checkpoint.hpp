#pragma once

// 'LNMC' checkpoint format, version 1, little-endian.
//
//   magic 'LNMC' | version u32 | flags u32 (1 = Adam state, 2 = Fisher anchors)
//   params:  u32 count, then per blob: name str, dtype u8 (0 f32 / 1 f64),
//            rank u32, dims u32[rank], raw values
//   state:   same blob layout (batch-norm running statistics)
//   [Adam]   step u64, lr f64, beta1 f64, beta2 f64, eps f64, m blobs, v blobs
//   [Fisher] u32 count, then per anchor: task str, sample_count u64,
//            fisher blobs, theta_star blobs
//
// Round trips are bit-identical; loading validates names and dims against the
// graph built from the caller's NetConfig.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lnmdet/continual.hpp"
#include "lnmdet/io.hpp"
#include "lnmdet/netbuild.hpp"
#include "lnmdet/optim.hpp"
#include "lnmdet/tensor.hpp"

namespace lnmdet {

namespace detail {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kFlagAdam = 1;
constexpr std::uint32_t kFlagFisher = 2;

template <typename T>
constexpr std::uint8_t dtype_code() {
    return sizeof(T) == 4 ? 0 : 1;
}

template <typename T>
void write_blob(BinWriter& w, const std::string& name, const Tensor<T>& t) {
    w.str(name);
    w.u8(dtype_code<T>());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.bytes(t.data.data(), t.data.size() * sizeof(T));
}

template <typename T>
void write_blob_map(BinWriter& w, const std::map<std::string, Tensor<T>>& m) {
    w.u32(static_cast<std::uint32_t>(m.size()));
    for (const auto& [name, t] : m) write_blob(w, name, t);
}

template <typename T>
std::pair<std::string, Tensor<T>> read_blob(BinReader& r) {
    std::string name = r.str();
    const std::uint8_t code = r.u8();
    require(code <= 1, ErrorCategory::parse, "unknown dtype code in " + r.path());
    const std::uint32_t rank = r.u32();
    require(rank <= 8, ErrorCategory::parse, "blob rank too large in " + r.path());
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = r.u32();
    Tensor<T> t(dims);
    if (code == dtype_code<T>()) {
        r.bytes(t.data.data(), t.data.size() * sizeof(T));
    } else if (code == 0) {
        std::vector<float> tmp(t.data.size());
        r.bytes(tmp.data(), tmp.size() * 4);
        for (std::size_t i = 0; i < tmp.size(); ++i) t.data[i] = static_cast<T>(tmp[i]);
    } else {
        std::vector<double> tmp(t.data.size());
        r.bytes(tmp.data(), tmp.size() * 8);
        for (std::size_t i = 0; i < tmp.size(); ++i) t.data[i] = static_cast<T>(tmp[i]);
    }
    return {std::move(name), std::move(t)};
}

template <typename T>
std::map<std::string, Tensor<T>> read_blob_map(BinReader& r) {
    const std::uint32_t n = r.u32();
    require(n <= 1u << 20, ErrorCategory::parse, "blob count too large in " + r.path());
    std::map<std::string, Tensor<T>> m;
    for (std::uint32_t i = 0; i < n; ++i) m.insert(read_blob<T>(r));
    return m;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const NetGraph<T>& graph,
                     const AdamState<T>* adam = nullptr,
                     const std::vector<FisherAnchor<T>>* anchors = nullptr) {
    BinWriter w(path);
    w.magic("LNMC");
    w.u32(detail::kCheckpointVersion);
    std::uint32_t flags = 0;
    if (adam) flags |= detail::kFlagAdam;
    if (anchors && !anchors->empty()) flags |= detail::kFlagFisher;
    w.u32(flags);
    detail::write_blob_map(w, graph.params);
    detail::write_blob_map(w, graph.state);
    if (adam) {
        w.u64(static_cast<std::uint64_t>(adam->step));
        w.f64(adam->learning_rate);
        w.f64(adam->beta1);
        w.f64(adam->beta2);
        w.f64(adam->epsilon);
        detail::write_blob_map(w, adam->m);
        detail::write_blob_map(w, adam->v);
    }
    if (flags & detail::kFlagFisher) {
        w.u32(static_cast<std::uint32_t>(anchors->size()));
        for (const auto& a : *anchors) {
            w.str(a.task);
            w.u64(a.sample_count);
            detail::write_blob_map(w, a.fisher);
            detail::write_blob_map(w, a.theta_star);
        }
    }
    w.close();
}

template <typename T>
struct LoadedCheckpoint {
    NetGraph<T> graph;
    std::optional<AdamState<T>> adam;
    std::vector<FisherAnchor<T>> anchors;
};

// Loads a checkpoint and validates parameter names and dims against the
// architecture described by cfg.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path, const NetConfig& cfg) {
    BinReader r(path);
    r.expect_magic("LNMC", "checkpoint");
    const std::uint32_t version = r.u32();
    require(version == detail::kCheckpointVersion, ErrorCategory::parse,
            "unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t flags = r.u32();

    LoadedCheckpoint<T> out;
    Rng rng(0);
    out.graph = build_network<T>(cfg, rng);

    auto params = detail::read_blob_map<T>(r);
    auto state = detail::read_blob_map<T>(r);
    auto check_match = [&](const std::map<std::string, Tensor<T>>& want,
                           std::map<std::string, Tensor<T>>& got, const char* what) {
        require(want.size() == got.size(), ErrorCategory::parse,
                std::string(what) + " count mismatch against config");
        for (const auto& [name, t] : want) {
            auto it = got.find(name);
            require(it != got.end(), ErrorCategory::parse,
                    std::string(what) + " missing from checkpoint: " + name);
            require(it->second.shape == t.shape, ErrorCategory::parse,
                    std::string(what) + " dim mismatch for " + name + ": checkpoint " +
                        it->second.shape_str() + " vs config " + t.shape_str());
        }
    };
    check_match(out.graph.params, params, "parameter");
    check_match(out.graph.state, state, "state");
    out.graph.params = std::move(params);
    out.graph.state = std::move(state);

    if (flags & detail::kFlagAdam) {
        AdamState<T> adam;
        adam.step = static_cast<std::int64_t>(r.u64());
        adam.learning_rate = r.f64();
        adam.beta1 = r.f64();
        adam.beta2 = r.f64();
        adam.epsilon = r.f64();
        adam.m = detail::read_blob_map<T>(r);
        adam.v = detail::read_blob_map<T>(r);
        out.adam = std::move(adam);
    }
    if (flags & detail::kFlagFisher) {
        const std::uint32_t n = r.u32();
        require(n <= 1u << 16, ErrorCategory::parse, "anchor count too large");
        for (std::uint32_t i = 0; i < n; ++i) {
            FisherAnchor<T> a;
            a.task = r.str();
            a.sample_count = r.u64();
            a.fisher = detail::read_blob_map<T>(r);
            a.theta_star = detail::read_blob_map<T>(r);
            out.anchors.push_back(std::move(a));
        }
    }
    return out;
}

}  // namespace lnmdet
