#pragma once

#include <functional>
#include <vector>

#include "lnmdet/postproc.hpp"
#include "lnmdet/raster.hpp"
#include "lnmdet/types.hpp"

namespace lnmdet {

// Lesion-level free-response ROC. Detections are already resolved against
// the lesion masks: each carries the lesion id under its position (0 =
// outside every lesion).
struct FrocSlide {
    bool negative = false;                                   // metastasis-free slide
    std::vector<std::int64_t> lesion_ids;                    // distinct ids on this slide
    std::vector<std::pair<std::int64_t, double>> detections; // (lesion id, likelihood)
};

struct FrocResult {
    // one point per distinct likelihood threshold, in decreasing-threshold
    // order: (mean false positives per negative slide, sensitivity)
    std::vector<std::pair<double, double>> curve;
    double score = 0.0;  // mean sensitivity at 1/4, 1/2, 1, 2, 4, 8 FPs/slide
};

FrocResult froc(const std::vector<FrocSlide>& slides);

// Lesion id under a detection: the mask value at its nearest raster pixel.
std::int64_t lesion_id_at(const LesionMask& mask, double x_um, double y_um, double spacing_um);

// Mann-Whitney AUC: (concordant + 0.5 * ties) / (P * N).
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct KappaResult {
    double kappa = 0.0;
    std::array<std::array<std::int64_t, 5>, 5> confusion{};  // [predicted][reference]
};

// Cohen's kappa with quadratic weights w_ij = (i - j)^2 / 16 over the five pN
// stages. When both raters are constant and identical the weighted chance
// agreement is 0 and kappa is defined as 1.
KappaResult kappa_quadratic(const std::vector<PnStage>& predicted,
                            const std::vector<PnStage>& reference);

struct BootstrapCI {
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::int64_t samples = 0;
    std::uint64_t seed = 0;
    std::int64_t degenerate = 0;  // resamples the metric rejected
};

// Percentile bootstrap (2.5 / 97.5) over resampled unit indices. The metric
// receives a multiset of unit indices; throwing marks the resample as
// degenerate. Deterministic in the seed; resamples may evaluate in parallel.
BootstrapCI bootstrap(const std::function<double(const std::vector<std::int64_t>&)>& metric,
                      std::int64_t n_units, std::int64_t n_samples, std::uint64_t seed);

}  // namespace lnmdet
