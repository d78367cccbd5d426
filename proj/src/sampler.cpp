#include "lnmdet/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "lnmdet/threadpool.hpp"

namespace lnmdet {

namespace {

// reflect index into [0, n)
std::int64_t reflect(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

// locate the k-th eligible pixel (0-based) using the per-row cumulative
// counts, then scan that row
std::pair<std::int64_t, std::int64_t> locate(const LoadedSlide& s,
                                             const std::vector<std::uint64_t>& cum,
                                             bool want_cancer, std::uint64_t k) {
    const auto row_it = std::upper_bound(cum.begin(), cum.end(), k);
    const std::int64_t y = static_cast<std::int64_t>(row_it - cum.begin());
    const std::uint64_t before = y == 0 ? 0 : cum[static_cast<std::size_t>(y - 1)];
    std::uint64_t remaining = k - before;
    const std::int64_t w = s.raster.width;
    for (std::int64_t x = 0; x < w; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y * w + x);
        const bool tissue = s.tissue.data[idx] != 0;
        const bool lesion = s.lesion.data[idx] != 0;
        const bool eligible = want_cancer ? (tissue && lesion) : (tissue && !lesion);
        if (eligible) {
            if (remaining == 0) return {y, x};
            --remaining;
        }
    }
    raise(ErrorCategory::internal, "cumulative pixel counts out of sync for slide " + s.rec.id);
}

}  // namespace

LoadedSlide load_slide(const DatasetManifest& m, const SlideRecord& rec) {
    LoadedSlide s;
    s.rec = rec;
    s.raster = read_raster(m.resolve(rec.raster_path));
    s.tissue = read_tissue_mask(m.resolve(rec.tissue_path));
    s.lesion = read_lesion_mask(m.resolve(rec.lesion_path));
    require(s.tissue.width == s.raster.width && s.tissue.height == s.raster.height,
            ErrorCategory::data, "tissue mask dims differ from raster for slide " + rec.id);
    require(s.lesion.width == s.raster.width && s.lesion.height == s.raster.height,
            ErrorCategory::data, "lesion mask dims differ from raster for slide " + rec.id);

    const std::int64_t h = s.raster.height, w = s.raster.width;
    s.normal_cum.resize(static_cast<std::size_t>(h));
    s.cancer_cum.resize(static_cast<std::size_t>(h));
    std::uint64_t ncum = 0, ccum = 0;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y * w + x);
            if (!s.tissue.data[idx]) continue;
            if (s.lesion.data[idx]) {
                ++ccum;
            } else {
                ++ncum;
            }
        }
        s.normal_cum[static_cast<std::size_t>(y)] = ncum;
        s.cancer_cum[static_cast<std::size_t>(y)] = ccum;
    }
    s.normal_total = ncum;
    s.cancer_total = ccum;

    const bool has_lesion = ccum > 0;
    require(has_lesion == is_positive(rec.label), ErrorCategory::data,
            "slide " + rec.id + ": label disagrees with the lesion mask");
    return s;
}

LoadedDataset load_dataset(const std::string& manifest_path) {
    LoadedDataset d;
    d.manifest = load_manifest(manifest_path);
    d.slides.resize(d.manifest.slides.size());
    ThreadPool::global().parallel_for(static_cast<std::int64_t>(d.manifest.slides.size()),
                                      [&](std::int64_t i) {
                                          d.slides[static_cast<std::size_t>(i)] = load_slide(
                                              d.manifest, d.manifest.slides[static_cast<std::size_t>(i)]);
                                      });
    for (std::size_t i = 0; i < d.slides.size(); ++i) {
        if (d.slides[i].cancer_total > 0) d.slides_with_cancer.push_back(static_cast<int>(i));
        if (d.slides[i].normal_total > 0) d.slides_with_normal.push_back(static_cast<int>(i));
    }
    return d;
}

PatchDraw sample_patch(const LoadedSlide& slide, bool want_cancer, std::int64_t patch_size,
                       Rng& rng) {
    const std::uint64_t total = want_cancer ? slide.cancer_total : slide.normal_total;
    if (total == 0) {
        raise(ErrorCategory::data, "slide " + slide.rec.id + " has no eligible center for label " +
                                       (want_cancer ? "cancer" : "normal"));
    }
    const auto [cy, cx] =
        locate(slide, want_cancer ? slide.cancer_cum : slide.normal_cum, want_cancer,
               rng.uniform_index(total));

    const std::int64_t p = patch_size;
    const std::int64_t half = p / 2;
    const std::int64_t h = slide.raster.height, w = slide.raster.width;
    PatchDraw draw;
    draw.center_x = cx;
    draw.center_y = cy;
    draw.label = want_cancer ? 1 : 0;
    draw.patch = Tensor<float>({3, p, p});
    for (std::int64_t c = 0; c < 3; ++c) {
        const std::uint8_t* plane = slide.raster.data.data() + c * h * w;
        float* dst = draw.patch.ptr() + c * p * p;
        for (std::int64_t i = 0; i < p; ++i) {
            const std::int64_t sy = reflect(cy - half + i, h);
            const std::uint8_t* row = plane + sy * w;
            for (std::int64_t j = 0; j < p; ++j) {
                dst[i * p + j] = static_cast<float>(row[reflect(cx - half + j, w)]) * (1.0f / 255.0f);
            }
        }
    }
    return draw;
}

EpochStream::EpochStream(std::vector<const LoadedDataset*> datasets, PatchSpec spec,
                         std::uint64_t seed, const AugConfig* augment)
    : datasets_(std::move(datasets)), spec_(spec), seed_(seed), augment_(augment) {
    spec_.validate();
    require(!datasets_.empty(), ErrorCategory::data, "epoch needs at least one dataset");
    const std::string& split = datasets_.front()->manifest.split;
    for (const auto* d : datasets_) {
        require(!d->manifest.slides.empty(), ErrorCategory::data,
                "dataset " + d->manifest.name + " is empty");
        require(d->manifest.split == split, ErrorCategory::data,
                "cannot mix splits in one epoch: " + split + " vs " + d->manifest.split);
        require(!d->slides_with_cancer.empty(), ErrorCategory::data,
                "dataset " + d->manifest.name + " has no cancer pixels to sample");
        require(!d->slides_with_normal.empty(), ErrorCategory::data,
                "dataset " + d->manifest.name + " has no normal tissue to sample");
        for (const auto& s : d->slides) {
            require(std::fabs(s.rec.spacing_um - spec_.resolution_um) < 0.25 * spec_.resolution_um,
                    ErrorCategory::data,
                    "slide " + s.rec.id + " spacing is far from the sampling resolution");
        }
    }
}

EpochStream::DrawPlan EpochStream::plan_draw(std::int64_t draw_index, Rng& rng) const {
    rng = Rng(derive_seed(seed_, "draw", static_cast<std::uint64_t>(draw_index)));
    DrawPlan plan;
    plan.dataset = static_cast<int>(rng.uniform_index(datasets_.size()));
    plan.cancer = rng.bernoulli(spec_.cancer_fraction());
    const auto& ds = *datasets_[static_cast<std::size_t>(plan.dataset)];
    const auto& pool = plan.cancer ? ds.slides_with_cancer : ds.slides_with_normal;
    plan.slide = pool[rng.uniform_index(pool.size())];
    return plan;
}

EpochStream::DrawPlan EpochStream::plan_draw(std::int64_t draw_index) const {
    Rng rng(0);
    return plan_draw(draw_index, rng);
}

void EpochStream::draw_one(std::int64_t draw_index, float* out, int& label) const {
    Rng rng(0);
    const DrawPlan plan = plan_draw(draw_index, rng);
    const LoadedSlide& slide =
        datasets_[static_cast<std::size_t>(plan.dataset)]->slides[static_cast<std::size_t>(plan.slide)];
    PatchDraw draw = sample_patch(slide, plan.cancer, spec_.patch_size, rng);
    Tensor<float> patch = std::move(draw.patch);
    if (augment_) patch = augment_patch(patch, *augment_, rng);
    std::copy(patch.data.begin(), patch.data.end(), out);
    label = plan.cancer ? 1 : 0;
}

void EpochStream::fill_batch(std::int64_t batch_index, Tensor<float>& input,
                             std::vector<int>& labels) const {
    require(batch_index >= 0 && batch_index < batch_count(), ErrorCategory::data,
            "batch index out of range");
    const std::int64_t b = spec_.batch_size, p = spec_.patch_size;
    if (input.shape != std::vector<std::int64_t>{b, 3, p, p}) {
        input = Tensor<float>({b, 3, p, p});
    }
    labels.assign(static_cast<std::size_t>(b), 0);
    const std::int64_t base = batch_index * b;
    ThreadPool::global().parallel_for(b, [&](std::int64_t s) {
        draw_one(base + s, input.ptr() + s * 3 * p * p, labels[static_cast<std::size_t>(s)]);
    });
}

}  // namespace lnmdet
