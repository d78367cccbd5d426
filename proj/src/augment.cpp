#include "lnmdet/augment.hpp"

#include <algorithm>
#include <cmath>

namespace lnmdet {

namespace {

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    const float d = mx - mn;
    v = mx;
    s = mx > 0.f ? d / mx : 0.f;
    if (d <= 0.f) {
        h = 0.f;
        return;
    }
    float hh;
    if (mx == r) {
        hh = (g - b) / d;
        if (hh < 0.f) hh += 6.f;
    } else if (mx == g) {
        hh = (b - r) / d + 2.f;
    } else {
        hh = (r - g) / d + 4.f;
    }
    h = hh / 6.f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    h = h - std::floor(h);
    const float hh = h * 6.f;
    const int sector = std::min(5, static_cast<int>(hh));
    const float f = hh - static_cast<float>(sector);
    const float p = v * (1.f - s);
    const float q = v * (1.f - s * f);
    const float t = v * (1.f - s * (1.f - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

Tensor<float> mirror_horizontal(const Tensor<float>& t) {
    const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor<float> out(t.shape);
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j)
                out.data[(ci * h + i) * w + j] = t.data[(ci * h + i) * w + (w - 1 - j)];
    return out;
}

Tensor<float> rot90(const Tensor<float>& t) {
    // quarter turn counter-clockwise: out[i][j] = in[j][W-1-i]
    const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor<float> out({c, w, h});
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t i = 0; i < w; ++i)
            for (std::int64_t j = 0; j < h; ++j)
                out.data[(ci * w + i) * h + j] = t.data[(ci * h + j) * w + (w - 1 - i)];
    return out;
}

Tensor<float> mirror_vertical(const Tensor<float>& t) {
    const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor<float> out(t.shape);
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t i = 0; i < h; ++i)
            std::copy(t.data.begin() + ((ci * h + (h - 1 - i)) * w),
                      t.data.begin() + ((ci * h + (h - 1 - i)) * w + w),
                      out.data.begin() + ((ci * h + i) * w));
    return out;
}

// reflect index into [0, n)
std::int64_t reflect(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

Tensor<float> resize_bilinear(const Tensor<float>& t, std::int64_t nh, std::int64_t nw) {
    const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor<float> out({c, nh, nw});
    const double sy = static_cast<double>(h) / static_cast<double>(nh);
    const double sx = static_cast<double>(w) / static_cast<double>(nw);
    for (std::int64_t ci = 0; ci < c; ++ci) {
        const float* src = t.ptr() + ci * h * w;
        float* dst = out.ptr() + ci * nh * nw;
        for (std::int64_t i = 0; i < nh; ++i) {
            const double fy = (static_cast<double>(i) + 0.5) * sy - 0.5;
            std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
            const double wy = fy - static_cast<double>(y0);
            const std::int64_t y1 = std::clamp(y0 + 1, std::int64_t(0), h - 1);
            y0 = std::clamp(y0, std::int64_t(0), h - 1);
            for (std::int64_t j = 0; j < nw; ++j) {
                const double fx = (static_cast<double>(j) + 0.5) * sx - 0.5;
                std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
                const double wx = fx - static_cast<double>(x0);
                const std::int64_t x1 = std::clamp(x0 + 1, std::int64_t(0), w - 1);
                x0 = std::clamp(x0, std::int64_t(0), w - 1);
                const double top = (1.0 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1];
                const double bot = (1.0 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1];
                dst[i * nw + j] = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

// resample to z * size, then restore the original size: center-crop after an
// upscale, reflect-pad after a downscale
Tensor<float> scale_keep_size(const Tensor<float>& t, double z) {
    const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    const std::int64_t nh = std::max<std::int64_t>(1, std::llround(static_cast<double>(h) * z));
    const std::int64_t nw = std::max<std::int64_t>(1, std::llround(static_cast<double>(w) * z));
    if (nh == h && nw == w) return t;
    Tensor<float> scaled = resize_bilinear(t, nh, nw);
    Tensor<float> out({c, h, w});
    const std::int64_t off_y = (nh - h) / 2;
    const std::int64_t off_x = (nw - w) / 2;
    for (std::int64_t ci = 0; ci < c; ++ci) {
        const float* src = scaled.ptr() + ci * nh * nw;
        float* dst = out.ptr() + ci * h * w;
        for (std::int64_t i = 0; i < h; ++i) {
            const std::int64_t si = reflect(i + off_y, nh);
            for (std::int64_t j = 0; j < w; ++j) {
                dst[i * w + j] = src[si * nw + reflect(j + off_x, nw)];
            }
        }
    }
    return out;
}

Tensor<float> gaussian_blur(const Tensor<float>& t, double sigma) {
    const std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    if (radius < 1) return t;
    std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
        kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
        sum += v;
    }
    for (auto& v : kernel) v = static_cast<float>(v / sum);

    const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor<float> tmp(t.shape), out(t.shape);
    for (std::int64_t ci = 0; ci < c; ++ci) {
        const float* src = t.ptr() + ci * h * w;
        float* mid = tmp.ptr() + ci * h * w;
        for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j) {
                float acc = 0.f;
                for (std::int64_t k = -radius; k <= radius; ++k)
                    acc += kernel[static_cast<std::size_t>(k + radius)] * src[i * w + reflect(j + k, w)];
                mid[i * w + j] = acc;
            }
        float* dst = out.ptr() + ci * h * w;
        for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j) {
                float acc = 0.f;
                for (std::int64_t k = -radius; k <= radius; ++k)
                    acc += kernel[static_cast<std::size_t>(k + radius)] * mid[reflect(i + k, h) * w + j];
                dst[i * w + j] = acc;
            }
    }
    return out;
}

void shift_hsv(Tensor<float>& t, float dh, float ds, float dv) {
    const std::int64_t plane = t.dim(1) * t.dim(2);
    float* r = t.ptr();
    float* g = t.ptr() + plane;
    float* b = t.ptr() + 2 * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
        float h, s, v;
        rgb_to_hsv(r[i], g[i], b[i], h, s, v);
        h += dh;
        s = std::clamp(s + ds, 0.f, 1.f);
        v = std::clamp(v + dv, 0.f, 1.f);
        hsv_to_rgb(h, s, v, r[i], g[i], b[i]);
    }
}

}  // namespace

void AugConfig::validate() const {
    AugConfig d;
    auto in_range = [](double lo, double hi, double dlo, double dhi) {
        return lo <= hi && lo >= dlo && hi <= dhi;
    };
    require(in_range(scale_min, scale_max, d.scale_min, d.scale_max), ErrorCategory::data,
            "scale range outside the allowed interval");
    require(in_range(hue_min, hue_max, d.hue_min, d.hue_max), ErrorCategory::data,
            "hue range outside the allowed interval");
    require(in_range(sat_min, sat_max, d.sat_min, d.sat_max), ErrorCategory::data,
            "saturation range outside the allowed interval");
    require(in_range(bright_min, bright_max, d.bright_min, d.bright_max), ErrorCategory::data,
            "brightness range outside the allowed interval");
    require(in_range(contrast_min, contrast_max, d.contrast_min, d.contrast_max), ErrorCategory::data,
            "contrast range outside the allowed interval");
    require(in_range(noise_min, noise_max, d.noise_min, d.noise_max), ErrorCategory::data,
            "noise range outside the allowed interval");
    require(in_range(blur_min, blur_max, d.blur_min, d.blur_max), ErrorCategory::data,
            "blur range outside the allowed interval");
}

AugConfig AugConfig::identity() {
    AugConfig cfg;
    cfg.mirror = false;
    cfg.rotate = false;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.hue_min = cfg.hue_max = 0.0;
    cfg.sat_min = cfg.sat_max = 0.0;
    cfg.bright_min = cfg.bright_max = 0.0;
    cfg.contrast_min = cfg.contrast_max = 0.0;
    cfg.noise_min = cfg.noise_max = 0.0;
    cfg.blur_min = cfg.blur_max = 0.0;
    return cfg;
}

Tensor<float> augment_patch(const Tensor<float>& patch, const AugConfig& cfg, Rng& rng) {
    require(patch.rank() == 3 && patch.dim(0) == 3, ErrorCategory::shape,
            "augment_patch expects a [3, H, W] patch");
    require(patch.dim(1) == patch.dim(2), ErrorCategory::shape, "augment_patch expects a square patch");
    cfg.validate();
    for (float v : patch.data) {
        require(v >= 0.f && v <= 1.f, ErrorCategory::data, "patch values must lie in [0, 1]");
    }

    Tensor<float> out = patch;

    // 1. mirroring
    if (cfg.mirror && rng.bernoulli(0.5)) out = mirror_horizontal(out);
    // 2. rotation
    if (cfg.rotate) {
        const int k = static_cast<int>(rng.uniform_index(4));
        for (int i = 0; i < k; ++i) out = rot90(out);
    }
    // 3. scaling
    if (cfg.scale_min != 1.0 || cfg.scale_max != 1.0) {
        out = scale_keep_size(out, rng.uniform(cfg.scale_min, cfg.scale_max));
    }
    // 4-6. hue, saturation, brightness; separate draws, fixed order
    {
        const float dh = cfg.hue_min == cfg.hue_max && cfg.hue_min == 0.0
                             ? 0.f
                             : static_cast<float>(rng.uniform(cfg.hue_min, cfg.hue_max));
        const float ds = cfg.sat_min == cfg.sat_max && cfg.sat_min == 0.0
                             ? 0.f
                             : static_cast<float>(rng.uniform(cfg.sat_min, cfg.sat_max));
        const float dv = cfg.bright_min == cfg.bright_max && cfg.bright_min == 0.0
                             ? 0.f
                             : static_cast<float>(rng.uniform(cfg.bright_min, cfg.bright_max));
        if (dh != 0.f || ds != 0.f || dv != 0.f) shift_hsv(out, dh, ds, dv);
    }
    // 7. contrast about the per-channel mean
    if (!(cfg.contrast_min == 0.0 && cfg.contrast_max == 0.0)) {
        const float c = static_cast<float>(rng.uniform(cfg.contrast_min, cfg.contrast_max));
        const std::int64_t plane = out.dim(1) * out.dim(2);
        for (std::int64_t ch = 0; ch < 3; ++ch) {
            float* p = out.ptr() + ch * plane;
            double mean = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) mean += p[i];
            const float m = static_cast<float>(mean / static_cast<double>(plane));
            for (std::int64_t i = 0; i < plane; ++i) p[i] = (p[i] - m) * (1.f + c) + m;
        }
    }
    // 8. additive Gaussian noise
    {
        const double sigma = cfg.noise_min == cfg.noise_max
                                 ? cfg.noise_min
                                 : rng.uniform(cfg.noise_min, cfg.noise_max);
        if (sigma > 0.0) {
            for (auto& v : out.data) v += static_cast<float>(rng.normal(0.0, sigma));
        }
    }
    // 9. Gaussian blur
    {
        const double sigma = cfg.blur_min == cfg.blur_max
                                 ? cfg.blur_min
                                 : rng.uniform(cfg.blur_min, cfg.blur_max);
        if (sigma > 0.0) out = gaussian_blur(out, sigma);
    }

    for (auto& v : out.data) v = std::clamp(v, 0.f, 1.f);
    return out;
}

Tensor<float> dihedral8(const Tensor<float>& t, int k) {
    require(k >= 0 && k < 8, ErrorCategory::data, "dihedral index must be in 0..7");
    require(t.rank() == 3, ErrorCategory::shape, "dihedral8 expects a [C, H, W] tensor");
    Tensor<float> out = t;
    if (k >= 4) out = mirror_vertical(out);
    for (int i = 0; i < k % 4; ++i) out = rot90(out);
    return out;
}

Tensor<float> inverse_dihedral8(const Tensor<float>& t, int k) {
    require(k >= 0 && k < 8, ErrorCategory::data, "dihedral index must be in 0..7");
    require(t.rank() == 3, ErrorCategory::shape, "dihedral8 expects a [C, H, W] tensor");
    Tensor<float> out = t;
    for (int i = 0; i < (4 - k % 4) % 4; ++i) out = rot90(out);
    if (k >= 4) out = mirror_vertical(out);
    return out;
}

}  // namespace lnmdet
