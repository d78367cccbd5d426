#include <doctest.h>

#include <cmath>

#include "lnmdet/continual.hpp"
#include "support.hpp"

using namespace lnmdet;
using test::GraphBuilder;

namespace {

std::map<std::string, Tensor<double>> single_param(double value) {
    std::map<std::string, Tensor<double>> params;
    params.emplace("p", Tensor<double>({1}, value));
    return params;
}

FisherAnchor<double> scalar_anchor(const std::string& task, double f, double theta_star) {
    FisherAnchor<double> a;
    a.task = task;
    a.fisher.emplace("p", Tensor<double>({1}, f));
    a.theta_star.emplace("p", Tensor<double>({1}, theta_star));
    return a;
}

}  // namespace

TEST_CASE("ewc_loss: zero at theta = theta*") {
    auto params = single_param(1.0);
    EwcConfig<double> cfg;
    cfg.phi = 0.01;
    cfg.anchors.push_back(scalar_anchor("B", 2.0, 1.0));
    CHECK(ewc_loss(params, cfg) == 0.0);
}

TEST_CASE("ewc_loss: single-anchor worked example is exact") {
    auto params = single_param(3.0);
    EwcConfig<double> cfg;
    cfg.phi = 0.01;
    cfg.anchors.push_back(scalar_anchor("B", 2.0, 1.0));
    CHECK(std::fabs(ewc_loss(params, cfg) - 0.08) < 1e-12);
}

TEST_CASE("ewc_loss: phi splits evenly across two anchors") {
    auto params = single_param(3.0);
    EwcConfig<double> cfg;
    cfg.phi = 0.01;
    cfg.anchors.push_back(scalar_anchor("B", 2.0, 1.0));
    cfg.anchors.push_back(scalar_anchor("C", 2.0, 1.0));
    CHECK(std::fabs(ewc_loss(params, cfg) - 0.08) < 1e-12);  // 0.04 + 0.04
}

TEST_CASE("ewc_loss: scaling F by a power of two equals scaling phi") {
    Rng rng(3);
    std::map<std::string, Tensor<double>> params;
    params.emplace("w", test::random_tensor({4, 3}, rng));
    EwcConfig<double> base;
    base.phi = 0.01;
    FisherAnchor<double> a;
    a.task = "B";
    Tensor<double> f = test::random_tensor({4, 3}, rng);
    for (auto& v : f.data) v = std::fabs(v);
    a.fisher.emplace("w", f);
    a.theta_star.emplace("w", test::random_tensor({4, 3}, rng));
    base.anchors.push_back(a);

    EwcConfig<double> scaled_f = base;
    for (auto& v : scaled_f.anchors[0].fisher.at("w").data) v *= 4.0;
    EwcConfig<double> scaled_phi = base;
    scaled_phi.phi *= 4.0;
    CHECK(ewc_loss(params, scaled_f) == ewc_loss(params, scaled_phi));

    // non-dyadic factors agree to rounding
    EwcConfig<double> scaled_f3 = base;
    for (auto& v : scaled_f3.anchors[0].fisher.at("w").data) v *= 3.0;
    EwcConfig<double> scaled_phi3 = base;
    scaled_phi3.phi *= 3.0;
    CHECK(ewc_loss(params, scaled_f3) ==
          doctest::Approx(ewc_loss(params, scaled_phi3)).epsilon(1e-12));
}

TEST_CASE("ewc_grad: zero at the anchor, analytic value away from it") {
    auto params = single_param(1.0);
    EwcConfig<double> cfg;
    cfg.phi = 0.01;
    cfg.anchors.push_back(scalar_anchor("B", 2.0, 1.0));
    CHECK(ewc_grad(params, cfg).at("p").data[0] == 0.0);

    params.at("p").data[0] = 3.0;
    // 2 * 0.01 * 2 * (3 - 1) = 0.08
    CHECK(ewc_grad(params, cfg).at("p").data[0] == doctest::Approx(0.08).epsilon(1e-12));
}

TEST_CASE("ewc_grad: matches central finite differences") {
    Rng rng(4);
    std::map<std::string, Tensor<double>> params;
    params.emplace("a", test::random_tensor({3, 2}, rng));
    params.emplace("b", test::random_tensor({5}, rng));
    EwcConfig<double> cfg;
    cfg.phi = 0.37;
    for (const std::string task : {"B", "C"}) {
        FisherAnchor<double> a;
        a.task = task;
        for (const auto& [name, p] : params) {
            Tensor<double> f = test::random_tensor(p.shape, rng);
            for (auto& v : f.data) v = std::fabs(v);
            a.fisher.emplace(name, std::move(f));
            a.theta_star.emplace(name, test::random_tensor(p.shape, rng));
        }
        cfg.anchors.push_back(std::move(a));
    }
    auto grads = ewc_grad(params, cfg);
    const double h = 1e-6;
    for (auto& [name, p] : params) {
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double orig = p.data[i];
            p.data[i] = orig + h;
            const double jp = ewc_loss(params, cfg);
            p.data[i] = orig - h;
            const double jm = ewc_loss(params, cfg);
            p.data[i] = orig;
            const double numeric = (jp - jm) / (2.0 * h);
            const double analytic = grads.at(name).data[i];
            CHECK(std::fabs(numeric - analytic) /
                      std::max({std::fabs(numeric), std::fabs(analytic), 1e-6}) <
                  1e-6);
        }
    }
}

TEST_CASE("ewc: shape mismatch errors name the parameter") {
    auto params = single_param(1.0);
    EwcConfig<double> cfg;
    cfg.phi = 0.01;
    FisherAnchor<double> a;
    a.task = "B";
    a.fisher.emplace("p", Tensor<double>({2}, 1.0));  // wrong shape
    a.theta_star.emplace("p", Tensor<double>({1}, 0.0));
    cfg.anchors.push_back(std::move(a));
    try {
        (void)ewc_loss(params, cfg);
        FAIL("expected shape error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("p") != std::string::npos);
    }
}

TEST_CASE("estimate_fisher: non-negative and reproducible") {
    Rng rng(5);
    GraphBuilder gb(2);
    gb.conv(2, 3, 3, 1, rng).bn(3, rng).relu().conv(3, 2, 3, 1, rng).softmax();
    gb.g.training = false;
    PatchProvider<double> provider = [](std::int64_t, Rng& r) {
        Tensor<double> x({1, 2, 5, 5});
        for (auto& v : x.data) v = r.uniform(-1.0, 1.0);
        return x;
    };
    auto a1 = estimate_fisher(gb.g, provider, 64, "B", 9);
    auto a2 = estimate_fisher(gb.g, provider, 64, "B", 9);
    for (const auto& [name, f] : a1.fisher) {
        for (double v : f.data) CHECK(v >= 0.0);
        CHECK(f.data == a2.fisher.at(name).data);
        CHECK(a1.theta_star.at(name).data == gb.g.params.at(name).data);
    }
    CHECK(a1.sample_count == 64);
}

TEST_CASE("estimate_fisher: a dead unit has zero Fisher mass") {
    Rng rng(6);
    GraphBuilder gb(1);
    gb.conv(1, 2, 1, 1, rng).relu().conv(2, 2, 1, 1, rng).softmax();
    // kill filter 1 of the first conv with a large negative bias; inputs are
    // bounded so the ReLU never opens
    const std::string first_conv = "conv1";
    gb.g.params.at(first_conv + ".b").data[1] = -100.0;
    gb.g.training = false;
    PatchProvider<double> provider = [](std::int64_t, Rng& r) {
        Tensor<double> x({1, 1, 1, 1});
        x.data[0] = r.uniform(-1.0, 1.0);
        return x;
    };
    auto anchor = estimate_fisher(gb.g, provider, 128, "B", 10);
    // weights and bias feeding the dead unit get no gradient
    CHECK(anchor.fisher.at(first_conv + ".w").data[1] == 0.0);
    CHECK(anchor.fisher.at(first_conv + ".b").data[1] == 0.0);
    // downstream weights reading the dead channel are also silent
    CHECK(anchor.fisher.at("conv3.w").data[1] == 0.0);  // filter 0, channel 1
    CHECK(anchor.fisher.at("conv3.w").data[3] == 0.0);  // filter 1, channel 1
    // the alive unit carries mass
    CHECK(anchor.fisher.at(first_conv + ".w").data[0] > 0.0);
}

TEST_CASE("estimate_fisher: logistic model matches the enumeration oracle") {
    // two-parameter model: logits (w1 x, w2 x), p = softmax
    Rng rng(7);
    GraphBuilder gb(1);
    gb.conv(1, 2, 1, 1, rng).softmax();
    gb.g.params.at("conv1.w").data = {0.8, -0.5};
    gb.g.params.at("conv1.b").data = {0.0, 0.0};
    gb.g.training = false;

    const std::vector<double> xs = {-1.0, -0.25, 0.5, 1.5};
    PatchProvider<double> provider = [&xs](std::int64_t, Rng& r) {
        Tensor<double> x({1, 1, 1, 1});
        x.data[0] = xs[r.uniform_index(xs.size())];
        return x;
    };

    // exact Fisher by enumerating inputs and label draws:
    //   d log p(y) / d w_c = (1[c=y] - p_c) x  =>  F_wc = E_x x^2 p_c (1 - p_c)
    const double w1 = 0.8, w2 = -0.5;
    double f_w[2] = {0, 0}, f_b[2] = {0, 0};
    for (double x : xs) {
        const double z1 = w1 * x, z2 = w2 * x;
        const double m = std::max(z1, z2);
        const double e1 = std::exp(z1 - m), e2 = std::exp(z2 - m);
        const double p1 = e1 / (e1 + e2), p2 = e2 / (e1 + e2);
        f_w[0] += 0.25 * x * x * p1 * (1 - p1);
        f_w[1] += 0.25 * x * x * p2 * (1 - p2);
        f_b[0] += 0.25 * p1 * (1 - p1);
        f_b[1] += 0.25 * p2 * (1 - p2);
    }

    auto anchor = estimate_fisher(gb.g, provider, 100000, "toy", 11);
    for (int c = 0; c < 2; ++c) {
        CHECK(std::fabs(anchor.fisher.at("conv1.w").data[c] - f_w[c]) / f_w[c] < 0.02);
        CHECK(std::fabs(anchor.fisher.at("conv1.b").data[c] - f_b[c]) / f_b[c] < 0.02);
    }
}
