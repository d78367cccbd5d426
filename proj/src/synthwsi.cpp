#include "lnmdet/synthwsi.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lnmdet/rng.hpp"
#include "lnmdet/staging.hpp"
#include "lnmdet/threadpool.hpp"

namespace lnmdet {

namespace {

std::uint64_t lattice_hash(std::int64_t xi, std::int64_t yi, std::uint64_t seed) {
    std::uint64_t x = seed ^ (static_cast<std::uint64_t>(xi) * 0x9e3779b97f4a7c15ull) ^
                      (static_cast<std::uint64_t>(yi) * 0xc2b2ae3d27d4eb4full);
    return splitmix64(x);
}

double lattice_value(std::int64_t xi, std::int64_t yi, std::uint64_t seed) {
    return static_cast<double>(lattice_hash(xi, yi, seed) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

double value_noise(double x, double y, std::uint64_t seed) {
    const double fx = std::floor(x), fy = std::floor(y);
    const std::int64_t xi = static_cast<std::int64_t>(fx), yi = static_cast<std::int64_t>(fy);
    const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
    const double v00 = lattice_value(xi, yi, seed);
    const double v10 = lattice_value(xi + 1, yi, seed);
    const double v01 = lattice_value(xi, yi + 1, seed);
    const double v11 = lattice_value(xi + 1, yi + 1, seed);
    const double top = v00 + (v10 - v00) * tx;
    const double bot = v01 + (v11 - v01) * tx;
    return top + (bot - top) * ty;
}

void SynthConfig::validate() const {
    require(slide_size >= 64, ErrorCategory::data, "slide size too small");
    require(spacing_um > 0, ErrorCategory::data, "spacing must be positive");
    require(itc_max_um > 0 && itc_max_um < micro_max_um, ErrorCategory::data,
            "size-class thresholds must satisfy 0 < itc_max < micro_max");
    require(case_size == 5, ErrorCategory::data, "cases group exactly 5 slides");
    require(lesions_min >= 1 && lesions_min <= lesions_max, ErrorCategory::data,
            "bad lesion count range");
    // the largest macro lesion (1.3 * micro_max diameter) must fit inside the
    // smallest possible tissue blob
    const double slide_um = static_cast<double>(slide_size) * spacing_um;
    require(micro_max_um < 0.49 * slide_um, ErrorCategory::data,
            "macro lesions cannot fit: shrink thresholds or grow the slide");
}

const TextureParams& SynthConfig::lesion_for(const std::string& task) const {
    if (task == "B") return lesion_b;
    if (task == "C") return lesion_c;
    if (task == "HN") return lesion_hn;
    raise(ErrorCategory::data, "unknown task: " + task);
}

namespace {

struct LesionShape {
    double cx, cy;        // px
    double radius_px;     // generating radius
    double diameter_um;   // generating diameter, decides the size class
    double warp_seed;
};

struct SlidePlan {
    std::string id;
    std::string split;
    SlideLabel label = SlideLabel::negative;
    MetastasisClass target = MetastasisClass::negative;
    std::uint64_t seed = 0;
    std::string case_id;
};

constexpr double kBoundaryWarp = 0.06;

double draw_diameter(MetastasisClass target, const SynthConfig& cfg, Rng& rng) {
    const double px_um = cfg.spacing_um;
    switch (target) {
        case MetastasisClass::itc:
            return rng.uniform(std::max(6.0 * px_um, 0.4 * cfg.itc_max_um), cfg.itc_max_um);
        case MetastasisClass::micro:
            return rng.uniform(1.2 * cfg.itc_max_um, 0.85 * cfg.micro_max_um);
        case MetastasisClass::macro:
            return rng.uniform(1.1 * cfg.micro_max_um, 1.3 * cfg.micro_max_um);
        default:
            raise(ErrorCategory::internal, "negative class has no lesion diameter");
    }
}

// Tissue blob: noise-warped ellipse around the slide center.
struct TissueBlob {
    double cx, cy, rx, ry;
    std::uint64_t warp_seed;

    bool inside(double x, double y) const {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        const double base = std::sqrt(dx * dx + dy * dy);
        const double warp =
            1.0 + 0.12 * value_noise(x * 0.004 + 7.3, y * 0.004 + 2.1, warp_seed);
        return base * warp < 1.0;
    }
};

bool lesion_inside_tissue(const LesionShape& l, const TissueBlob& tissue) {
    if (!tissue.inside(l.cx, l.cy)) return false;
    for (int a = 0; a < 16; ++a) {
        const double ang = 2.0 * 3.14159265358979323846 * static_cast<double>(a) / 16.0;
        // probe slightly beyond the warped boundary
        const double rr = l.radius_px * (1.0 + kBoundaryWarp + 0.02);
        if (!tissue.inside(l.cx + rr * std::cos(ang), l.cy + rr * std::sin(ang))) return false;
    }
    return true;
}

bool lesions_overlap(const LesionShape& a, const LesionShape& b) {
    const double dx = a.cx - b.cx, dy = a.cy - b.cy;
    const double lim = (a.radius_px + b.radius_px) * (1.0 + 2.0 * kBoundaryWarp) + 4.0;
    return dx * dx + dy * dy < lim * lim;
}

bool inside_lesion(const LesionShape& l, double x, double y) {
    const double dx = x - l.cx, dy = y - l.cy;
    const double r = std::sqrt(dx * dx + dy * dy);
    const double warped =
        l.radius_px *
        (1.0 + kBoundaryWarp * value_noise(x * 0.02 + 3.7, y * 0.02 + 9.4,
                                           static_cast<std::uint64_t>(l.warp_seed)));
    return r < warped;
}

void paint_texture(const TextureParams& tex, double coarse, double fine, std::uint8_t* px,
                   std::int64_t plane) {
    // channel mixes differ so the fields tint rather than just darken
    static constexpr double wr[2] = {1.0, 0.6};
    static constexpr double wg[2] = {0.7, 1.0};
    static constexpr double wb[2] = {0.85, 0.8};
    const double r = tex.r + tex.coarse_amp * wr[0] * coarse + tex.fine_amp * wr[1] * fine;
    const double g = tex.g + tex.coarse_amp * wg[0] * coarse + tex.fine_amp * wg[1] * fine;
    const double b = tex.b + tex.coarse_amp * wb[0] * coarse + tex.fine_amp * wb[1] * fine;
    px[0] = static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
    px[plane] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
    px[2 * plane] = static_cast<std::uint8_t>(std::clamp(b, 0.0, 255.0));
}

struct SlideOutput {
    RgbRaster raster;
    TissueMask tissue;
    LesionMask lesion;
    SlideLabel label;
};

SlideOutput generate_slide(const SynthConfig& cfg, const std::string& task, const SlidePlan& plan) {
    const std::int64_t n = cfg.slide_size;
    Rng rng(plan.seed);

    TissueBlob tissue;
    tissue.cx = static_cast<double>(n) * rng.uniform(0.47, 0.53);
    tissue.cy = static_cast<double>(n) * rng.uniform(0.47, 0.53);
    tissue.rx = static_cast<double>(n) * rng.uniform(0.38, 0.44);
    tissue.ry = static_cast<double>(n) * rng.uniform(0.38, 0.44);
    tissue.warp_seed = rng.next_u64();

    // place lesions; label holds the class of the largest one
    std::vector<LesionShape> lesions;
    if (plan.label != SlideLabel::negative) {
        const int count = cfg.lesions_min +
                          static_cast<int>(rng.uniform_index(
                              static_cast<std::uint64_t>(cfg.lesions_max - cfg.lesions_min + 1)));
        for (int li = 0; li < count; ++li) {
            // the first lesion realizes the target class, later ones must not
            // exceed it so the slide label stays the target
            MetastasisClass cls = plan.target;
            if (li > 0) {
                const int t = static_cast<int>(plan.target);
                cls = static_cast<MetastasisClass>(1 + rng.uniform_index(static_cast<std::uint64_t>(t)));
            }
            const double d_um = draw_diameter(cls, cfg, rng);
            LesionShape shape;
            shape.diameter_um = d_um;
            shape.radius_px = 0.5 * d_um / cfg.spacing_um;
            // centers are drawn from the disc around the tissue center where
            // the whole lesion can fit, then verified against the warped
            // boundary
            const double fit = std::min(tissue.rx, tissue.ry) * 0.92 -
                               shape.radius_px * (1.0 + kBoundaryWarp + 0.02);
            bool placed = false;
            for (int attempt = 0; attempt < 200 && fit > 0.0; ++attempt) {
                const double rr = fit * std::sqrt(rng.uniform());
                const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
                shape.cx = tissue.cx + rr * std::cos(ang);
                shape.cy = tissue.cy + rr * std::sin(ang);
                shape.warp_seed = static_cast<double>(rng.next_u64());
                if (!lesion_inside_tissue(shape, tissue)) continue;
                bool overlap = false;
                for (const auto& other : lesions) overlap = overlap || lesions_overlap(shape, other);
                if (overlap) continue;
                placed = true;
                break;
            }
            if (!placed && li == 0) {
                raise(ErrorCategory::data, "cannot place lesion of " +
                                               std::to_string(shape.diameter_um) + " um on slide " +
                                               plan.id);
            }
            if (placed) lesions.push_back(shape);
        }
    }

    SlideOutput out;
    out.raster.width = out.raster.height = n;
    out.raster.channels = 3;
    out.raster.spacing_um = static_cast<float>(cfg.spacing_um);
    out.raster.data.assign(static_cast<std::size_t>(3 * n * n), 0);
    out.tissue = TissueMask{n, n, static_cast<float>(cfg.spacing_um), 1,
                            std::vector<std::uint8_t>(static_cast<std::size_t>(n * n), 0)};
    out.lesion = LesionMask{n, n, static_cast<float>(cfg.spacing_um), 1,
                            std::vector<std::uint16_t>(static_cast<std::size_t>(n * n), 0)};

    const std::uint64_t coarse_seed = derive_seed(plan.seed, "coarse");
    const std::uint64_t fine_seed = derive_seed(plan.seed, "fine");
    const std::uint64_t back_seed = derive_seed(plan.seed, "background");
    const TextureParams& lesion_tex = cfg.lesion_for(task);
    const std::int64_t plane = n * n;

    for (std::int64_t y = 0; y < n; ++y) {
        for (std::int64_t x = 0; x < n; ++x) {
            const std::int64_t idx = y * n + x;
            std::uint8_t* px = out.raster.data.data() + idx;
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            if (!tissue.inside(fx, fy)) {
                // glass background: near white with a faint wash
                const double v = 246.0 + 4.0 * value_noise(fx / 64.0, fy / 64.0, back_seed);
                px[0] = px[plane] = px[2 * plane] =
                    static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
                continue;
            }
            out.tissue.data[static_cast<std::size_t>(idx)] = 1;
            std::uint16_t lesion_id = 0;
            for (std::size_t li = 0; li < lesions.size(); ++li) {
                if (inside_lesion(lesions[li], fx, fy)) {
                    lesion_id = static_cast<std::uint16_t>(li + 1);
                    break;
                }
            }
            const TextureParams& tex = lesion_id ? lesion_tex : cfg.normal;
            const double coarse = value_noise(fx * tex.coarse_freq, fy * tex.coarse_freq, coarse_seed);
            const double fine = value_noise(fx * tex.fine_freq, fy * tex.fine_freq, fine_seed);
            out.lesion.data[static_cast<std::size_t>(idx)] = lesion_id;
            paint_texture(tex, coarse, fine, px, plane);
        }
    }

    // derive the label from the largest generating diameter
    if (lesions.empty()) {
        out.label = SlideLabel::negative;
    } else {
        double dmax = 0.0;
        for (const auto& l : lesions) dmax = std::max(dmax, l.diameter_um);
        const MetastasisClass cls = size_class(dmax, cfg);
        out.label = task == "B" ? static_cast<SlideLabel>(static_cast<int>(cls))
                                : SlideLabel::positive;
    }
    return out;
}

std::vector<SlidePlan> plan_split(const SynthConfig& cfg, const std::string& task,
                                  const std::string& split, const SplitSpec& spec,
                                  std::uint64_t seed, int& counter) {
    // deterministically interleave negatives and positives, and rotate the
    // positive target classes for task B so every class appears
    std::vector<SlidePlan> plans;
    std::vector<int> kinds;  // 0 negative, 1 positive
    kinds.insert(kinds.end(), static_cast<std::size_t>(spec.negatives), 0);
    kinds.insert(kinds.end(), static_cast<std::size_t>(spec.positives), 1);
    Rng shuffle_rng(derive_seed(seed, task + "/" + split + "/shuffle"));
    for (std::size_t i = kinds.size(); i > 1; --i) {
        std::swap(kinds[i - 1], kinds[shuffle_rng.uniform_index(i)]);
    }
    int positive_counter = 0;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        SlidePlan p;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%03d", counter);
        p.id = task + "_" + split + "_" + buf;
        p.split = split;
        p.seed = derive_seed(seed, task + "/slide", static_cast<std::uint64_t>(counter));
        ++counter;
        if (kinds[i] == 1) {
            if (task == "B") {
                const MetastasisClass order[3] = {MetastasisClass::macro, MetastasisClass::micro,
                                                  MetastasisClass::itc};
                p.target = order[positive_counter % 3];
                p.label = static_cast<SlideLabel>(static_cast<int>(p.target));
            } else {
                p.target = MetastasisClass::macro;  // geometry only; label is binary
                p.label = SlideLabel::positive;
            }
            ++positive_counter;
        }
        plans.push_back(std::move(p));
    }
    return plans;
}

}  // namespace

MetastasisClass size_class(double diameter_um, const SynthConfig& cfg) {
    if (diameter_um <= cfg.itc_max_um) return MetastasisClass::itc;
    if (diameter_um <= cfg.micro_max_um) return MetastasisClass::micro;
    return MetastasisClass::macro;
}

std::int64_t rasterized_lesion_pixels(double diameter_um, double spacing_um,
                                      std::uint64_t warp_seed) {
    LesionShape shape;
    shape.diameter_um = diameter_um;
    shape.radius_px = 0.5 * diameter_um / spacing_um;
    const std::int64_t margin = static_cast<std::int64_t>(shape.radius_px * 1.2) + 4;
    shape.cx = shape.cy = static_cast<double>(margin);
    shape.warp_seed = static_cast<double>(warp_seed);
    std::int64_t count = 0;
    for (std::int64_t y = 0; y < 2 * margin; ++y)
        for (std::int64_t x = 0; x < 2 * margin; ++x)
            if (inside_lesion(shape, static_cast<double>(x), static_cast<double>(y))) ++count;
    return count;
}

GeneratedDataset generate_dataset(const SynthConfig& cfg, const std::string& task,
                                  std::uint64_t seed, const std::string& out_dir) {
    cfg.validate();
    require(task == "B" || task == "C" || task == "HN", ErrorCategory::data,
            "unknown task: " + task);
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "slides");

    struct SplitPlan {
        std::string split;
        SplitSpec spec;
    };
    std::vector<SplitPlan> split_plans = {{"train", cfg.train}, {"val", cfg.val}, {"test", cfg.test}};
    if (task == "B" && cfg.with_rfc_split) split_plans.push_back({"rfc-train", cfg.rfc_train});

    int counter = 0;
    std::vector<std::vector<SlidePlan>> plans;
    for (const auto& sp : split_plans) {
        plans.push_back(plan_split(cfg, task, sp.split, sp.spec, seed, counter));
    }

    // flatten for parallel generation
    std::vector<SlidePlan*> all;
    for (auto& ps : plans)
        for (auto& p : ps) all.push_back(&p);
    std::vector<SlideOutput> outputs(all.size());
    ThreadPool::global().parallel_for(static_cast<std::int64_t>(all.size()), [&](std::int64_t i) {
        outputs[static_cast<std::size_t>(i)] = generate_slide(cfg, task, *all[static_cast<std::size_t>(i)]);
    });

    // write rasters and build manifests
    GeneratedDataset result;
    std::size_t flat = 0;
    for (std::size_t si = 0; si < plans.size(); ++si) {
        DatasetManifest m;
        m.name = task + "_" + split_plans[si].split;
        m.task = task;
        m.split = split_plans[si].split;
        for (auto& plan : plans[si]) {
            SlideOutput& out = outputs[flat++];
            require(out.label == plan.label, ErrorCategory::internal,
                    "generated label disagrees with plan for " + plan.id);
            SlideRecord rec;
            rec.id = plan.id;
            rec.raster_path = "slides/" + plan.id + ".sras";
            rec.tissue_path = "slides/" + plan.id + ".tissue.sras";
            rec.lesion_path = "slides/" + plan.id + ".lesion.sras";
            rec.label = out.label;
            rec.spacing_um = cfg.spacing_um;
            rec.center = "synthetic";
            write_raster((fs::path(out_dir) / rec.raster_path).string(), out.raster);
            write_tissue_mask((fs::path(out_dir) / rec.tissue_path).string(), out.tissue);
            write_lesion_mask((fs::path(out_dir) / rec.lesion_path).string(), out.lesion);
            m.slides.push_back(std::move(rec));
        }
        // group the staged split into cases of 5
        if (task == "B" && cfg.with_cases && m.split == "test") {
            require(m.slides.size() % 5 == 0, ErrorCategory::data,
                    "test split size must be a multiple of 5 for case grouping");
            for (std::size_t c = 0; c * 5 < m.slides.size(); ++c) {
                CaseRecord cr;
                char buf[16];
                std::snprintf(buf, sizeof(buf), "%03zu", c);
                cr.id = task + "_case_" + buf;
                std::vector<MetastasisClass> classes;
                for (std::size_t k = 0; k < 5; ++k) {
                    auto& slide = m.slides[c * 5 + k];
                    slide.case_id = cr.id;
                    cr.slide_ids.push_back(slide.id);
                    classes.push_back(label_to_class(slide.label));
                }
                cr.reference = pn_stage(classes);
                m.cases.push_back(std::move(cr));
            }
        }
        const std::string mpath =
            (fs::path(out_dir) / ("manifest_" + m.split + ".json")).string();
        save_manifest(mpath, m);
        result.manifest_paths.push_back(mpath);
    }
    return result;
}

}  // namespace lnmdet
