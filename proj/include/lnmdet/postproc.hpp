#pragma once

#include <string>
#include <vector>

#include "lnmdet/infermap.hpp"
#include "lnmdet/staging.hpp"
#include "lnmdet/types.hpp"

namespace lnmdet {

struct Detection {
    double x_um = 0;
    double y_um = 0;
    double likelihood = 0;  // in (stop, 1]
};

// Iterative peak extraction: take the global maximum, record it, zero every
// cell within radius_um, repeat until the maximum is no longer above `stop`.
// Masked cells never produce detections. Ties go to the first cell in
// row-major order.
std::vector<Detection> nms(const LikelihoodMap& map, double radius_um = 150.0, double stop = 0.5);

// Highest probability over unmasked cells; 0 when everything is masked.
double slide_score(const LikelihoodMap& map);

struct RegionFeatures {
    double diameter_um = 0;  // max pairwise cell-center distance plus one cell pitch
    double area_um2 = 0;     // cell count times cell area
    double max_prob = 0;
    double mean_prob = 0;
};

// Features of the largest-diameter 8-connected region of cells above the
// threshold; all-zero features when no cell qualifies.
RegionFeatures extract_features(const LikelihoodMap& map, double threshold = 0.5);

// Detections CSV: header 'x_um,y_um,likelihood', one detection per line.
void save_detections(const std::string& path, const std::vector<Detection>& detections);
std::vector<Detection> load_detections(const std::string& path);

}  // namespace lnmdet
