#include "lnmdet/evalstat.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lnmdet/rng.hpp"
#include "lnmdet/threadpool.hpp"

namespace lnmdet {

FrocResult froc(const std::vector<FrocSlide>& slides) {
    std::int64_t negative_slides = 0;
    std::int64_t total_lesions = 0;
    for (const auto& s : slides) {
        if (s.negative) {
            require(s.lesion_ids.empty(), ErrorCategory::data,
                    "negative slide carries lesion ids");
            ++negative_slides;
        } else {
            total_lesions += static_cast<std::int64_t>(s.lesion_ids.size());
        }
    }
    require(negative_slides > 0, ErrorCategory::data,
            "FROC needs at least one metastasis-free slide for the FP axis");
    require(total_lesions > 0, ErrorCategory::data, "FROC needs at least one lesion");

    // descending distinct thresholds over all detection likelihoods
    std::vector<double> thresholds;
    for (const auto& s : slides) {
        for (const auto& [id, p] : s.detections) thresholds.push_back(p);
    }
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    FrocResult result;
    for (double t : thresholds) {
        std::int64_t hit_lesions = 0;
        std::int64_t false_positives = 0;
        for (std::size_t si = 0; si < slides.size(); ++si) {
            const auto& s = slides[si];
            if (s.negative) {
                for (const auto& [id, p] : s.detections) {
                    if (p >= t) ++false_positives;  // everything outside lesions
                }
            } else {
                std::set<std::int64_t> hit;
                for (const auto& [id, p] : s.detections) {
                    if (p >= t && id != 0) hit.insert(id);
                }
                hit_lesions += static_cast<std::int64_t>(hit.size());
            }
        }
        const double sensitivity =
            static_cast<double>(hit_lesions) / static_cast<double>(total_lesions);
        const double fp_rate =
            static_cast<double>(false_positives) / static_cast<double>(negative_slides);
        result.curve.emplace_back(fp_rate, sensitivity);
    }

    const double targets[6] = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    double acc = 0.0;
    for (double target : targets) {
        double best = 0.0;
        for (const auto& [fp, sens] : result.curve) {
            if (fp <= target && sens > best) best = sens;
        }
        acc += best;
    }
    result.score = acc / 6.0;
    return result;
}

std::int64_t lesion_id_at(const LesionMask& mask, double x_um, double y_um, double spacing_um) {
    require(spacing_um > 0, ErrorCategory::data, "spacing must be positive");
    std::int64_t px = static_cast<std::int64_t>(std::llround(x_um / spacing_um));
    std::int64_t py = static_cast<std::int64_t>(std::llround(y_um / spacing_um));
    px = std::clamp<std::int64_t>(px, 0, mask.width - 1);
    py = std::clamp<std::int64_t>(py, 0, mask.height - 1);
    return mask.data[static_cast<std::size_t>(py * mask.width + px)];
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    require(scores.size() == labels.size() && !scores.empty(), ErrorCategory::data,
            "ROC needs matching nonempty scores and labels");
    std::int64_t pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg)++;
    require(pos > 0 && neg > 0, ErrorCategory::data, "ROC needs both classes present");

    std::int64_t concordant = 0, ties = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) ++concordant;
            else if (scores[i] == scores[j]) ++ties;
        }
    }
    return (static_cast<double>(concordant) + 0.5 * static_cast<double>(ties)) /
           (static_cast<double>(pos) * static_cast<double>(neg));
}

KappaResult kappa_quadratic(const std::vector<PnStage>& predicted,
                            const std::vector<PnStage>& reference) {
    require(predicted.size() == reference.size(), ErrorCategory::data,
            "kappa needs equal-length stage lists");
    require(!predicted.empty(), ErrorCategory::data, "kappa needs at least one case");

    KappaResult result;
    std::array<std::int64_t, 5> row{}, col{};
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const auto p = static_cast<std::size_t>(predicted[i]);
        const auto r = static_cast<std::size_t>(reference[i]);
        result.confusion[p][r]++;
        row[p]++;
        col[r]++;
    }
    const double n = static_cast<double>(predicted.size());
    double observed = 0.0, expected = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            const double w = static_cast<double>((static_cast<std::int64_t>(i) -
                                                  static_cast<std::int64_t>(j)) *
                                                 (static_cast<std::int64_t>(i) -
                                                  static_cast<std::int64_t>(j))) /
                             16.0;
            observed += w * static_cast<double>(result.confusion[i][j]) / n;
            expected += w * (static_cast<double>(row[i]) / n) * (static_cast<double>(col[j]) / n);
        }
    }
    result.kappa = expected == 0.0 ? 1.0 : 1.0 - observed / expected;
    return result;
}

BootstrapCI bootstrap(const std::function<double(const std::vector<std::int64_t>&)>& metric,
                      std::int64_t n_units, std::int64_t n_samples, std::uint64_t seed) {
    require(n_units > 0, ErrorCategory::data, "bootstrap needs at least one unit");
    require(n_samples > 0, ErrorCategory::data, "bootstrap needs at least one resample");

    BootstrapCI ci;
    ci.samples = n_samples;
    ci.seed = seed;
    std::vector<std::int64_t> identity(static_cast<std::size_t>(n_units));
    for (std::int64_t i = 0; i < n_units; ++i) identity[static_cast<std::size_t>(i)] = i;
    ci.estimate = metric(identity);

    std::vector<double> stats(static_cast<std::size_t>(n_samples));
    std::vector<std::uint8_t> ok(static_cast<std::size_t>(n_samples), 0);
    ThreadPool::global().parallel_for(n_samples, [&](std::int64_t r) {
        Rng rng(derive_seed(seed, "resample", static_cast<std::uint64_t>(r)));
        std::vector<std::int64_t> units(static_cast<std::size_t>(n_units));
        for (auto& u : units) u = static_cast<std::int64_t>(rng.uniform_index(
                                  static_cast<std::uint64_t>(n_units)));
        try {
            stats[static_cast<std::size_t>(r)] = metric(units);
            ok[static_cast<std::size_t>(r)] = 1;
        } catch (const Error&) {
            ok[static_cast<std::size_t>(r)] = 0;
        }
    });

    std::vector<double> kept;
    kept.reserve(static_cast<std::size_t>(n_samples));
    for (std::int64_t r = 0; r < n_samples; ++r) {
        if (ok[static_cast<std::size_t>(r)]) kept.push_back(stats[static_cast<std::size_t>(r)]);
    }
    ci.degenerate = n_samples - static_cast<std::int64_t>(kept.size());
    require(ci.degenerate * 2 <= n_samples, ErrorCategory::data,
            "metric failed on more than half of the bootstrap resamples");

    std::sort(kept.begin(), kept.end());
    const std::int64_t m = static_cast<std::int64_t>(kept.size());
    const std::int64_t lo = std::clamp<std::int64_t>(m * 25 / 1000, 0, m - 1);
    const std::int64_t hi = std::clamp<std::int64_t>(m * 975 / 1000, 0, m - 1);
    ci.lower = kept[static_cast<std::size_t>(lo)];
    ci.upper = kept[static_cast<std::size_t>(hi)];
    return ci;
}

}  // namespace lnmdet
