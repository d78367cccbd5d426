#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lnmdet/manifest.hpp"
#include "lnmdet/raster.hpp"

namespace lnmdet {

// Procedural texture: a base color modulated by two band-limited value-noise
// fields (coarse structure and fine speckle). 8-bit color units.
struct TextureParams {
    double r = 228, g = 175, b = 203;  // H&E-like pink for normal tissue
    double coarse_amp = 20.0;
    double coarse_freq = 1.0 / 28.0;
    double fine_amp = 12.0;
    double fine_freq = 1.0 / 6.0;
};

struct SplitSpec {
    int negatives = 0;
    int positives = 0;
    int total() const { return negatives + positives; }
};

struct SynthConfig {
    std::int64_t slide_size = 2048;
    double spacing_um = 0.5;
    double itc_max_um = 50.0;    // size-class thresholds, desk-scale defaults
    double micro_max_um = 500.0;
    int case_size = 5;
    int lesions_min = 1;
    int lesions_max = 3;

    TextureParams normal;  // shared by every task
    TextureParams lesion_b{118, 92, 168, 16.0, 1.0 / 10.0, 14.0, 1.0 / 3.0};
    TextureParams lesion_c{96, 148, 132, 22.0, 1.0 / 36.0, 8.0, 1.0 / 8.0};
    TextureParams lesion_hn{172, 142, 92, 18.0, 1.0 / 20.0, 12.0, 1.0 / 5.0};

    SplitSpec train{10, 8};
    SplitSpec val{4, 3};
    SplitSpec test{10, 10};
    SplitSpec rfc_train{6, 9};  // task B only; classes must all appear

    bool with_cases = true;      // group the B test split into 5-slide cases
    bool with_rfc_split = true;  // emit the B rfc-train split

    void validate() const;
    const TextureParams& lesion_for(const std::string& task) const;
};

struct GeneratedDataset {
    std::vector<std::string> manifest_paths;  // one per split, in a fixed order
};

// Writes rasters, masks and manifests for one task under out_dir. Fully
// deterministic in (cfg, task, seed); slides are independent so generation
// parallelizes over them.
GeneratedDataset generate_dataset(const SynthConfig& cfg, const std::string& task,
                                  std::uint64_t seed, const std::string& out_dir);

// Deterministic band-limited value noise in [-1, 1]; exposed for tests.
double value_noise(double x, double y, std::uint64_t seed);

// Size class a generating diameter falls into under cfg's thresholds.
MetastasisClass size_class(double diameter_um, const SynthConfig& cfg);

// Pixel count of a single rasterized lesion shape, with the same warped
// boundary rule the slides use.
std::int64_t rasterized_lesion_pixels(double diameter_um, double spacing_um,
                                      std::uint64_t warp_seed);

}  // namespace lnmdet
