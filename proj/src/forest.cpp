#include "lnmdet/forest.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "lnmdet/io.hpp"
#include "lnmdet/rng.hpp"
#include "lnmdet/threadpool.hpp"

namespace lnmdet {

std::array<double, 4> feature_vector(const RegionFeatures& f) {
    return {f.diameter_um, f.area_um2, f.max_prob, f.mean_prob};
}

std::array<double, 4> balanced_class_weights(const std::vector<MetastasisClass>& labels) {
    std::array<std::int64_t, 4> counts{};
    for (auto l : labels) counts[static_cast<std::size_t>(l)]++;
    int present = 0;
    for (auto c : counts) present += c > 0 ? 1 : 0;
    std::array<double, 4> weights{};
    const double n = static_cast<double>(labels.size());
    for (std::size_t c = 0; c < 4; ++c) {
        if (counts[c] > 0) {
            weights[c] = n / (static_cast<double>(present) * static_cast<double>(counts[c]));
        }
    }
    return weights;
}

namespace {

struct TrainContext {
    const std::vector<std::array<double, 4>>* x;
    const std::vector<MetastasisClass>* y;
    const std::array<double, 4>* weights;
};

double gini(const std::array<double, 4>& hist, double total) {
    if (total <= 0) return 0.0;
    double acc = 1.0;
    for (double h : hist) {
        const double p = h / total;
        acc -= p * p;
    }
    return acc;
}

int majority_class(const std::array<double, 4>& hist) {
    int best = 0;
    for (int c = 1; c < 4; ++c) {
        if (hist[static_cast<std::size_t>(c)] > hist[static_cast<std::size_t>(best)]) best = c;
    }
    return best;  // ties resolve to the lower class by construction
}

int grow_node(const TrainContext& ctx, std::vector<int>& indices, ForestTree& tree, Rng& rng) {
    std::array<double, 4> hist{};
    for (int i : indices) {
        hist[static_cast<std::size_t>((*ctx.y)[static_cast<std::size_t>(i)])] +=
            (*ctx.weights)[static_cast<std::size_t>((*ctx.y)[static_cast<std::size_t>(i)])];
    }
    double total = 0.0;
    for (double h : hist) total += h;
    const double node_gini = gini(hist, total);

    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(ForestNode{});

    auto make_leaf = [&]() {
        tree.nodes[static_cast<std::size_t>(node_id)].leaf_class = majority_class(hist);
        return node_id;
    };
    if (node_gini <= 0.0 || indices.size() < 2) return make_leaf();

    // sqrt(4) = 2 distinct candidate features per split
    int feat_a = static_cast<int>(rng.uniform_index(4));
    int feat_b = static_cast<int>(rng.uniform_index(3));
    if (feat_b >= feat_a) ++feat_b;

    int best_feature = -1;
    double best_threshold = 0.0, best_score = node_gini;  // must strictly improve
    for (int feature : {feat_a, feat_b}) {
        std::vector<int> order = indices;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double va = (*ctx.x)[static_cast<std::size_t>(a)][static_cast<std::size_t>(feature)];
            const double vb = (*ctx.x)[static_cast<std::size_t>(b)][static_cast<std::size_t>(feature)];
            return va < vb || (va == vb && a < b);
        });
        std::array<double, 4> left{};
        double left_total = 0.0;
        for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
            const int i = order[pos];
            const auto cls = static_cast<std::size_t>((*ctx.y)[static_cast<std::size_t>(i)]);
            left[cls] += (*ctx.weights)[cls];
            left_total += (*ctx.weights)[cls];
            const double va = (*ctx.x)[static_cast<std::size_t>(i)][static_cast<std::size_t>(feature)];
            const double vb =
                (*ctx.x)[static_cast<std::size_t>(order[pos + 1])][static_cast<std::size_t>(feature)];
            if (va == vb) continue;
            std::array<double, 4> right{};
            for (std::size_t c = 0; c < 4; ++c) right[c] = hist[c] - left[c];
            const double right_total = total - left_total;
            const double score = (left_total / total) * gini(left, left_total) +
                                 (right_total / total) * gini(right, right_total);
            if (score < best_score - 1e-12) {
                best_score = score;
                best_feature = feature;
                best_threshold = 0.5 * (va + vb);
            }
        }
    }
    if (best_feature < 0) return make_leaf();

    std::vector<int> left_idx, right_idx;
    for (int i : indices) {
        const double v = (*ctx.x)[static_cast<std::size_t>(i)][static_cast<std::size_t>(best_feature)];
        (v <= best_threshold ? left_idx : right_idx).push_back(i);
    }
    if (left_idx.empty() || right_idx.empty()) return make_leaf();

    tree.nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(node_id)].threshold = best_threshold;
    indices.clear();
    indices.shrink_to_fit();
    const int left_id = grow_node(ctx, left_idx, tree, rng);
    tree.nodes[static_cast<std::size_t>(node_id)].left = left_id;
    const int right_id = grow_node(ctx, right_idx, tree, rng);
    tree.nodes[static_cast<std::size_t>(node_id)].right = right_id;
    return node_id;
}

}  // namespace

ForestModel forest_train(const std::vector<RegionFeatures>& features,
                         const std::vector<MetastasisClass>& labels, std::uint64_t seed,
                         int n_trees) {
    require(!features.empty() && features.size() == labels.size(), ErrorCategory::data,
            "forest training needs matching feature and label lists");
    require(n_trees >= 1, ErrorCategory::data, "forest needs at least one tree");

    ForestModel model;
    model.class_weights = balanced_class_weights(labels);
    int present = 0;
    for (double w : model.class_weights) present += w > 0 ? 1 : 0;
    if (present < 2) {
        std::cerr << "warning: single-class training set, forest degenerates to a constant\n";
    }

    std::vector<std::array<double, 4>> x(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) x[i] = feature_vector(features[i]);
    TrainContext ctx{&x, &labels, &model.class_weights};

    model.trees.resize(static_cast<std::size_t>(n_trees));
    ThreadPool::global().parallel_for(n_trees, [&](std::int64_t t) {
        Rng rng(derive_seed(seed, "tree", static_cast<std::uint64_t>(t)));
        std::vector<int> bootstrap(features.size());
        for (auto& i : bootstrap) i = static_cast<int>(rng.uniform_index(features.size()));
        ForestTree& tree = model.trees[static_cast<std::size_t>(t)];
        grow_node(ctx, bootstrap, tree, rng);
    });
    return model;
}

MetastasisClass tree_predict(const ForestTree& tree, const std::array<double, 4>& x) {
    int node = 0;
    for (;;) {
        const ForestNode& n = tree.nodes[static_cast<std::size_t>(node)];
        if (n.feature < 0) return static_cast<MetastasisClass>(n.leaf_class);
        node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
}

MetastasisClass forest_predict(const ForestModel& model, const RegionFeatures& features) {
    require(!model.trees.empty(), ErrorCategory::state, "empty forest model");
    const auto x = feature_vector(features);
    std::array<int, 4> votes{};
    for (const auto& tree : model.trees) {
        votes[static_cast<std::size_t>(tree_predict(tree, x))]++;
    }
    int best = 0;
    for (int c = 1; c < 4; ++c) {
        if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
    }
    return static_cast<MetastasisClass>(best);
}

void save_forest(const std::string& path, const ForestModel& model) {
    BinWriter w(path);
    w.magic("RFCM");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(model.trees.size()));
    for (double cw : model.class_weights) w.f64(cw);
    for (const auto& tree : model.trees) {
        w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
        for (const auto& n : tree.nodes) {
            w.u32(static_cast<std::uint32_t>(n.feature));
            w.f64(n.threshold);
            w.u32(static_cast<std::uint32_t>(n.left));
            w.u32(static_cast<std::uint32_t>(n.right));
            w.u32(static_cast<std::uint32_t>(n.leaf_class));
        }
    }
    w.close();
}

ForestModel load_forest(const std::string& path) {
    BinReader r(path);
    r.expect_magic("RFCM", "forest model");
    require(r.u32() == 1, ErrorCategory::parse, "unsupported forest version");
    ForestModel model;
    const std::uint32_t n_trees = r.u32();
    require(n_trees >= 1 && n_trees <= 100000, ErrorCategory::parse, "implausible tree count");
    for (auto& cw : model.class_weights) cw = r.f64();
    model.trees.resize(n_trees);
    for (auto& tree : model.trees) {
        const std::uint32_t n_nodes = r.u32();
        require(n_nodes >= 1, ErrorCategory::parse, "tree without nodes");
        tree.nodes.resize(n_nodes);
        for (auto& n : tree.nodes) {
            n.feature = static_cast<int>(r.u32());
            n.threshold = r.f64();
            n.left = static_cast<int>(r.u32());
            n.right = static_cast<int>(r.u32());
            n.leaf_class = static_cast<int>(r.u32());
        }
    }
    return model;
}

}  // namespace lnmdet
