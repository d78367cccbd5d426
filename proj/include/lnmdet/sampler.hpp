#pragma once

#include <memory>
#include <vector>

#include "lnmdet/augment.hpp"
#include "lnmdet/manifest.hpp"
#include "lnmdet/raster.hpp"
#include "lnmdet/rng.hpp"
#include "lnmdet/tensor.hpp"

namespace lnmdet {

// Patch-sampling configuration. One cancer patch per `normal_per_cancer`
// normal patches; epochs draw a fixed number of patches in batches.
struct PatchSpec {
    std::int64_t patch_size = 279;
    double resolution_um = 0.5;
    double normal_per_cancer = 4.0;
    std::int64_t batch_size = 32;
    std::int64_t epoch_size = 262144;

    double cancer_fraction() const { return 1.0 / (1.0 + normal_per_cancer); }
    void validate() const {
        require(patch_size >= 1, ErrorCategory::data, "patch size must be positive");
        require(normal_per_cancer > 0, ErrorCategory::data, "label ratio must be positive");
        require(batch_size >= 1 && epoch_size >= 1, ErrorCategory::data, "bad batch/epoch size");
        require(epoch_size % batch_size == 0, ErrorCategory::data,
                "epoch size must be divisible by the batch size");
    }
};

// A slide with its rasters in memory plus per-row cumulative counts of
// eligible center pixels for each label.
struct LoadedSlide {
    SlideRecord rec;
    RgbRaster raster;
    TissueMask tissue;
    LesionMask lesion;
    std::vector<std::uint64_t> normal_cum;  // tissue and not lesion, per row
    std::vector<std::uint64_t> cancer_cum;  // tissue and lesion, per row
    std::uint64_t normal_total = 0;
    std::uint64_t cancer_total = 0;
};

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<LoadedSlide> slides;
    std::vector<int> slides_with_cancer;
    std::vector<int> slides_with_normal;
};

LoadedSlide load_slide(const DatasetManifest& m, const SlideRecord& rec);
LoadedDataset load_dataset(const std::string& manifest_path);

// Draws one patch with the requested center label. The patch is fully inside
// the raster via reflection at the borders; its label is the lesion-mask
// value at the center pixel.
struct PatchDraw {
    Tensor<float> patch;  // [3, P, P] in [0, 1]
    int label = 0;        // 1 = cancer
    std::int64_t center_x = 0;
    std::int64_t center_y = 0;
};

PatchDraw sample_patch(const LoadedSlide& slide, bool want_cancer, std::int64_t patch_size,
                       Rng& rng);

// Deterministic epoch of patches over one or more datasets: each draw picks a
// dataset uniformly, then a label at the configured ratio, then a slide
// uniformly among that dataset's slides that can serve the label. Draw i is a
// pure function of (seed, i), so prefetching in parallel cannot reorder
// results.
class EpochStream {
public:
    EpochStream(std::vector<const LoadedDataset*> datasets, PatchSpec spec, std::uint64_t seed,
                const AugConfig* augment = nullptr);

    std::int64_t batch_count() const { return spec_.epoch_size / spec_.batch_size; }
    const PatchSpec& spec() const { return spec_; }

    // The deterministic plan of one draw: dataset uniformly, then the label at
    // the configured ratio, then a slide uniformly among those that can serve
    // the label. The rng continues into patch extraction.
    struct DrawPlan {
        int dataset = 0;
        int slide = 0;
        bool cancer = false;
    };
    DrawPlan plan_draw(std::int64_t draw_index, Rng& rng) const;
    DrawPlan plan_draw(std::int64_t draw_index) const;

    // Fills input [batch, 3, P, P] and labels (1 = cancer); parallel over the
    // batch entries.
    void fill_batch(std::int64_t batch_index, Tensor<float>& input, std::vector<int>& labels) const;

private:
    void draw_one(std::int64_t draw_index, float* out, int& label) const;

    std::vector<const LoadedDataset*> datasets_;
    PatchSpec spec_;
    std::uint64_t seed_;
    const AugConfig* augment_;
};

}  // namespace lnmdet
