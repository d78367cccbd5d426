#pragma once

#include <array>
#include <string>
#include <vector>

#include "lnmdet/postproc.hpp"
#include "lnmdet/types.hpp"

namespace lnmdet {

// Random forest over the four region features, classifying slides into
// metastasis size classes. Balanced class weights w_c = N / (k * N_c) with k
// the number of classes present; Gini splits over sqrt(4) = 2 features drawn
// per node; trees grow to purity on bootstrap resamples.
struct ForestNode {
    int feature = -1;      // -1 marks a leaf
    double threshold = 0;  // goes left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    int leaf_class = -1;
};

struct ForestTree {
    std::vector<ForestNode> nodes;  // node 0 is the root
};

struct ForestModel {
    std::array<double, 4> class_weights{};  // by MetastasisClass index
    std::vector<ForestTree> trees;
};

std::array<double, 4> feature_vector(const RegionFeatures& f);

// Balanced weights over the classes present in the labels.
std::array<double, 4> balanced_class_weights(const std::vector<MetastasisClass>& labels);

ForestModel forest_train(const std::vector<RegionFeatures>& features,
                         const std::vector<MetastasisClass>& labels, std::uint64_t seed,
                         int n_trees = 100);

// Per-tree leaf vote; majority wins, ties to the lower class.
MetastasisClass forest_predict(const ForestModel& model, const RegionFeatures& features);
MetastasisClass tree_predict(const ForestTree& tree, const std::array<double, 4>& x);

// 'RFCM' container; round trips bit-identically.
void save_forest(const std::string& path, const ForestModel& model);
ForestModel load_forest(const std::string& path);

}  // namespace lnmdet
