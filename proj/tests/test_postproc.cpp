#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lnmdet/forest.hpp"
#include "lnmdet/postproc.hpp"
#include "lnmdet/staging.hpp"
#include "support.hpp"

using namespace lnmdet;

namespace {

LikelihoodMap make_map(std::int64_t h, std::int64_t w, std::int64_t stride = 16,
                       double spacing = 0.5) {
    LikelihoodMap m;
    m.height = h;
    m.width = w;
    m.stride_px = stride;
    m.spacing_um = spacing;
    m.prob.assign(static_cast<std::size_t>(h * w), 0.f);
    m.valid.assign(static_cast<std::size_t>(h * w), 1);
    return m;
}

// Independent brute-force NMS used as the oracle.
std::vector<Detection> nms_oracle(const LikelihoodMap& map, double radius_um, double stop) {
    std::vector<double> grid(map.prob.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid[i] = map.valid[i] ? static_cast<double>(map.prob[i]) : 0.0;
    }
    std::vector<Detection> out;
    const double pitch = map.cell_um();
    for (;;) {
        double best = -1.0;
        std::int64_t bi = -1;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(grid.size()); ++i) {
            if (grid[static_cast<std::size_t>(i)] > best) {
                best = grid[static_cast<std::size_t>(i)];
                bi = i;
            }
        }
        if (best <= stop) break;
        const std::int64_t by = bi / map.width, bx = bi % map.width;
        out.push_back(Detection{map.x_um(bx), map.y_um(by), best});
        for (std::int64_t y = 0; y < map.height; ++y) {
            for (std::int64_t x = 0; x < map.width; ++x) {
                const double d = std::hypot(static_cast<double>(y - by) * pitch,
                                            static_cast<double>(x - bx) * pitch);
                if (d <= radius_um) grid[static_cast<std::size_t>(y * map.width + x)] = 0.0;
            }
        }
    }
    return out;
}

// Independent rule-table oracle for pn_stage.
PnStage pn_oracle(const std::vector<MetastasisClass>& nodes) {
    int counts[4] = {0, 0, 0, 0};
    for (auto c : nodes) counts[static_cast<int>(c)]++;
    const int macro = counts[3], micro = counts[2], itc = counts[1];
    if (macro == 0 && micro == 0 && itc == 0) return PnStage::pn0;
    if (macro == 0 && micro == 0) return PnStage::pn0i;
    if (macro == 0) return PnStage::pn1mi;
    return (micro + macro) >= 4 ? PnStage::pn2 : PnStage::pn1;
}

}  // namespace

TEST_CASE("nms: quiet map yields no detections") {
    auto m = make_map(16, 16);
    std::fill(m.prob.begin(), m.prob.end(), 0.5f);
    CHECK(nms(m).empty());
}

TEST_CASE("nms: a single spike is found at its cell") {
    auto m = make_map(16, 16);
    m.prob[m.idx(5, 7)] = 0.9f;
    auto dets = nms(m);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].likelihood == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(dets[0].x_um == doctest::Approx(7 * 8.0).epsilon(1e-12));
    CHECK(dets[0].y_um == doctest::Approx(5 * 8.0).epsilon(1e-12));
}

TEST_CASE("nms: matches the brute-force oracle on random maps") {
    Rng rng(1);
    for (int fixture = 0; fixture < 30; ++fixture) {
        auto m = make_map(64, 64);
        for (auto& v : m.prob) v = static_cast<float>(rng.uniform());
        for (auto& v : m.valid) v = rng.bernoulli(0.9) ? 1 : 0;
        const double radius = rng.uniform(20.0, 200.0);
        auto got = nms(m, radius);
        auto want = nms_oracle(m, radius, 0.5);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].x_um == want[i].x_um);
            CHECK(got[i].y_um == want[i].y_um);
            CHECK(got[i].likelihood == want[i].likelihood);
        }
        // detections are sorted, above threshold, and pairwise separated
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].likelihood > 0.5);
            if (i) CHECK(got[i].likelihood <= got[i - 1].likelihood);
            for (std::size_t j = i + 1; j < got.size(); ++j) {
                CHECK(std::hypot(got[i].x_um - got[j].x_um, got[i].y_um - got[j].y_um) > radius);
            }
        }
    }
}

TEST_CASE("nms: masked cells never produce detections") {
    Rng rng(2);
    auto m = make_map(32, 32);
    for (auto& v : m.prob) v = static_cast<float>(rng.uniform());
    for (std::size_t i = 0; i < m.valid.size(); ++i) m.valid[i] = (i % 3 == 0) ? 0 : 1;
    auto dets = nms(m, 10.0);
    for (const auto& d : dets) {
        const auto gx = static_cast<std::int64_t>(d.x_um / m.cell_um());
        const auto gy = static_cast<std::int64_t>(d.y_um / m.cell_um());
        CHECK(m.valid[m.idx(gy, gx)] == 1);
    }
}

TEST_CASE("slide_score: masked and constant maps") {
    auto m = make_map(8, 8);
    std::fill(m.valid.begin(), m.valid.end(), std::uint8_t(0));
    std::fill(m.prob.begin(), m.prob.end(), 0.9f);
    CHECK(slide_score(m) == 0.0);

    auto m2 = make_map(8, 8);
    std::fill(m2.prob.begin(), m2.prob.end(), 0.3f);
    CHECK(slide_score(m2) == doctest::Approx(0.3).epsilon(1e-7));

    Rng rng(3);
    auto m3 = make_map(12, 9);
    float best = 0.f;
    for (std::size_t i = 0; i < m3.prob.size(); ++i) {
        m3.prob[i] = static_cast<float>(rng.uniform());
        best = std::max(best, m3.prob[i]);
    }
    CHECK(slide_score(m3) == doctest::Approx(static_cast<double>(best)).epsilon(1e-12));
}

TEST_CASE("extract_features: empty map gives all-zero features") {
    auto m = make_map(8, 8);
    std::fill(m.prob.begin(), m.prob.end(), 0.4f);
    auto f = extract_features(m);
    CHECK(f.diameter_um == 0.0);
    CHECK(f.area_um2 == 0.0);
    CHECK(f.max_prob == 0.0);
    CHECK(f.mean_prob == 0.0);
}

TEST_CASE("extract_features: single-cell geometry at stride 16, spacing 0.5") {
    auto m = make_map(8, 8, 16, 0.5);
    m.prob[m.idx(3, 3)] = 0.9f;
    auto f = extract_features(m);
    CHECK(f.area_um2 == doctest::Approx(64.0).epsilon(1e-12));
    CHECK(f.diameter_um == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(f.max_prob == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(f.mean_prob == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("extract_features: largest diameter wins over higher probability") {
    auto m = make_map(16, 16, 16, 0.5);
    // region A: 4-cell horizontal run at probability 0.6
    for (std::int64_t x = 1; x <= 4; ++x) m.prob[m.idx(2, x)] = 0.6f;
    // region B: single very confident cell
    m.prob[m.idx(10, 10)] = 0.99f;
    auto f = extract_features(m);
    CHECK(f.area_um2 == doctest::Approx(4 * 64.0).epsilon(1e-12));
    CHECK(f.diameter_um == doctest::Approx(3 * 8.0 + 8.0).epsilon(1e-12));
    CHECK(f.max_prob == doctest::Approx(0.6).epsilon(1e-7));
}

TEST_CASE("extract_features: diagonal cells are 8-connected") {
    auto m = make_map(8, 8, 16, 0.5);
    m.prob[m.idx(1, 1)] = 0.7f;
    m.prob[m.idx(2, 2)] = 0.8f;
    auto f = extract_features(m);
    CHECK(f.area_um2 == doctest::Approx(2 * 64.0).epsilon(1e-12));
    CHECK(f.max_prob == doctest::Approx(0.8).epsilon(1e-7));
    CHECK(f.mean_prob == doctest::Approx(0.75).epsilon(1e-7));
}

TEST_CASE("pn_stage: table rows") {
    using MC = MetastasisClass;
    CHECK(pn_stage({MC::negative, MC::negative, MC::negative, MC::negative, MC::negative}) ==
          PnStage::pn0);
    CHECK(pn_stage({MC::itc, MC::negative, MC::negative, MC::negative, MC::negative}) ==
          PnStage::pn0i);
    CHECK(pn_stage({MC::micro, MC::itc, MC::negative, MC::negative, MC::negative}) ==
          PnStage::pn1mi);
    CHECK(pn_stage({MC::macro, MC::micro, MC::negative, MC::negative, MC::negative}) ==
          PnStage::pn1);
    CHECK(pn_stage({MC::macro, MC::macro, MC::macro, MC::macro, MC::negative}) == PnStage::pn2);
}

TEST_CASE("pn_stage: exhaustive over all 4^5 label vectors") {
    for (int code = 0; code < 1024; ++code) {
        std::vector<MetastasisClass> nodes;
        int c = code;
        for (int k = 0; k < 5; ++k) {
            nodes.push_back(static_cast<MetastasisClass>(c % 4));
            c /= 4;
        }
        CHECK(pn_stage(nodes) == pn_oracle(nodes));
    }
}

TEST_CASE("pn_stage: wrong slide count is rejected") {
    CHECK_THROWS_AS((void)pn_stage({MetastasisClass::negative}), Error);
    CHECK_THROWS_AS((void)pn_stage({}), Error);
}

TEST_CASE("balanced class weights: N/(k*N_c)") {
    std::vector<MetastasisClass> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(MetastasisClass::negative);
    for (int i = 0; i < 4; ++i) labels.push_back(MetastasisClass::itc);
    for (int i = 0; i < 2; ++i) labels.push_back(MetastasisClass::micro);
    for (int i = 0; i < 2; ++i) labels.push_back(MetastasisClass::macro);
    auto w = balanced_class_weights(labels);
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(w[3] == doctest::Approx(2.0).epsilon(1e-12));
}

namespace {

// toy feature set separable on the diameter alone
void separable_data(std::vector<RegionFeatures>& x, std::vector<MetastasisClass>& y, Rng& rng,
                    int per_class) {
    const double centers[4] = {0.0, 30.0, 200.0, 900.0};
    for (int c = 0; c < 4; ++c) {
        for (int i = 0; i < per_class; ++i) {
            RegionFeatures f;
            f.diameter_um = centers[c] + rng.uniform(-5.0, 5.0);
            f.area_um2 = f.diameter_um * f.diameter_um * rng.uniform(0.4, 0.8);
            f.max_prob = c == 0 ? rng.uniform(0.0, 0.4) : rng.uniform(0.5, 1.0);
            f.mean_prob = f.max_prob * rng.uniform(0.5, 1.0);
            x.push_back(f);
            y.push_back(static_cast<MetastasisClass>(c));
        }
    }
}

}  // namespace

TEST_CASE("forest: perfectly separable training data is memorized") {
    Rng rng(4);
    std::vector<RegionFeatures> x;
    std::vector<MetastasisClass> y;
    separable_data(x, y, rng, 8);
    auto model = forest_train(x, y, 11, 100);
    REQUIRE(model.trees.size() == 100);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(forest_predict(model, x[i]) == y[i]);
    }
}

TEST_CASE("forest: prediction equals the per-tree enumeration oracle") {
    Rng rng(5);
    std::vector<RegionFeatures> x;
    std::vector<MetastasisClass> y;
    separable_data(x, y, rng, 6);
    auto model = forest_train(x, y, 12, 33);
    for (int rep = 0; rep < 50; ++rep) {
        RegionFeatures probe;
        probe.diameter_um = rng.uniform(0.0, 1000.0);
        probe.area_um2 = rng.uniform(0.0, 5e5);
        probe.max_prob = rng.uniform(0.0, 1.0);
        probe.mean_prob = rng.uniform(0.0, probe.max_prob);
        int votes[4] = {0, 0, 0, 0};
        for (const auto& tree : model.trees) {
            votes[static_cast<int>(tree_predict(tree, feature_vector(probe)))]++;
        }
        int want = 0;
        for (int c = 1; c < 4; ++c) {
            if (votes[c] > votes[want]) want = c;
        }
        CHECK(static_cast<int>(forest_predict(model, probe)) == want);
    }
}

TEST_CASE("forest: training is deterministic in the seed") {
    Rng rng(6);
    std::vector<RegionFeatures> x;
    std::vector<MetastasisClass> y;
    separable_data(x, y, rng, 5);
    auto m1 = forest_train(x, y, 77, 20);
    auto m2 = forest_train(x, y, 77, 20);
    REQUIRE(m1.trees.size() == m2.trees.size());
    for (std::size_t t = 0; t < m1.trees.size(); ++t) {
        REQUIRE(m1.trees[t].nodes.size() == m2.trees[t].nodes.size());
        for (std::size_t n = 0; n < m1.trees[t].nodes.size(); ++n) {
            CHECK(m1.trees[t].nodes[n].feature == m2.trees[t].nodes[n].feature);
            CHECK(m1.trees[t].nodes[n].threshold == m2.trees[t].nodes[n].threshold);
            CHECK(m1.trees[t].nodes[n].leaf_class == m2.trees[t].nodes[n].leaf_class);
        }
    }
}

TEST_CASE("forest: single-class training degenerates to a constant classifier") {
    Rng rng(7);
    std::vector<RegionFeatures> x;
    std::vector<MetastasisClass> y;
    for (int i = 0; i < 10; ++i) {
        RegionFeatures f;
        f.diameter_um = rng.uniform(0.0, 100.0);
        x.push_back(f);
        y.push_back(MetastasisClass::micro);
    }
    auto model = forest_train(x, y, 13, 15);
    for (int rep = 0; rep < 10; ++rep) {
        RegionFeatures probe;
        probe.diameter_um = rng.uniform(0.0, 1000.0);
        CHECK(forest_predict(model, probe) == MetastasisClass::micro);
    }
}

TEST_CASE("forest: model round trip is bit-identical") {
    Rng rng(8);
    std::vector<RegionFeatures> x;
    std::vector<MetastasisClass> y;
    separable_data(x, y, rng, 4);
    auto model = forest_train(x, y, 14, 10);
    auto dir = std::filesystem::temp_directory_path() / "lnmdet_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "model.rfcm").string();
    save_forest(path, model);
    auto loaded = load_forest(path);
    CHECK(loaded.class_weights == model.class_weights);
    REQUIRE(loaded.trees.size() == model.trees.size());
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        REQUIRE(loaded.trees[t].nodes.size() == model.trees[t].nodes.size());
        for (std::size_t n = 0; n < model.trees[t].nodes.size(); ++n) {
            CHECK(loaded.trees[t].nodes[n].feature == model.trees[t].nodes[n].feature);
            CHECK(loaded.trees[t].nodes[n].threshold == model.trees[t].nodes[n].threshold);
            CHECK(loaded.trees[t].nodes[n].left == model.trees[t].nodes[n].left);
            CHECK(loaded.trees[t].nodes[n].right == model.trees[t].nodes[n].right);
            CHECK(loaded.trees[t].nodes[n].leaf_class == model.trees[t].nodes[n].leaf_class);
        }
    }
}

TEST_CASE("detections csv: round trip") {
    std::vector<Detection> dets = {{12.5, 99.25, 0.9371}, {0.0, 4.0, 0.5001}};
    auto dir = std::filesystem::temp_directory_path() / "lnmdet_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "dets.csv").string();
    save_detections(path, dets);
    auto loaded = load_detections(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].x_um == doctest::Approx(12.5).epsilon(1e-9));
    CHECK(loaded[0].likelihood == doctest::Approx(0.9371).epsilon(1e-9));
    CHECK(loaded[1].y_um == doctest::Approx(4.0).epsilon(1e-9));
}
