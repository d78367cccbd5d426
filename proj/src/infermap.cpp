#include "lnmdet/infermap.hpp"

#include <algorithm>
#include <cmath>

#include "lnmdet/io.hpp"

namespace lnmdet {

namespace {

std::int64_t reflect(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

Tensor<float> reflect_pad(const Tensor<float>& t, std::int64_t pad) {
    const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor<float> out({c, h + 2 * pad, w + 2 * pad});
    for (std::int64_t ci = 0; ci < c; ++ci) {
        const float* src = t.ptr() + ci * h * w;
        float* dst = out.ptr() + ci * (h + 2 * pad) * (w + 2 * pad);
        for (std::int64_t i = 0; i < h + 2 * pad; ++i) {
            const std::int64_t sy = reflect(i - pad, h);
            for (std::int64_t j = 0; j < w + 2 * pad; ++j) {
                dst[i * (w + 2 * pad) + j] = src[sy * w + reflect(j - pad, w)];
            }
        }
    }
    return out;
}

}  // namespace

Tensor<float> slide_to_tensor(const RgbRaster& raster) {
    const std::int64_t h = raster.height, w = raster.width;
    Tensor<float> t({3, h, w});
    for (std::size_t i = 0; i < raster.data.size(); ++i) {
        t.data[i] = static_cast<float>(raster.data[i]) * (1.0f / 255.0f);
    }
    return t;
}

namespace {

// One shift-and-stitch pass set over a padded raster; fills the map grid.
void run_passes(NetGraph<float>& graph, const NetConfig& cfg, const Tensor<float>& padded,
                std::int64_t slide_h, std::int64_t slide_w, std::int64_t map_stride,
                std::int64_t tile_cells, LikelihoodMap& map) {
    const std::int64_t net_stride = trace_shapes(cfg).total_stride();
    const std::int64_t input_size = cfg.input_size;
    const std::int64_t padded_w = padded.dim(2);

    for (std::int64_t dy = 0; dy < net_stride; dy += map_stride) {
        for (std::int64_t dx = 0; dx < net_stride; dx += map_stride) {
            // cells at slide pixels (dy + k*net_stride, dx + l*net_stride)
            const std::int64_t ny = (slide_h - dy + net_stride - 1) / net_stride;
            const std::int64_t nx = (slide_w - dx + net_stride - 1) / net_stride;
            if (ny <= 0 || nx <= 0) continue;
            const std::int64_t in_w = (nx - 1) * net_stride + input_size;
            for (std::int64_t band = 0; band < ny; band += tile_cells) {
                const std::int64_t bn = std::min(tile_cells, ny - band);
                const std::int64_t in_h = (bn - 1) * net_stride + input_size;
                Tensor<float> tile({1, 3, in_h, in_w});
                const std::int64_t y0 = dy + band * net_stride;
                for (std::int64_t c = 0; c < 3; ++c) {
                    const float* src = padded.ptr() + c * padded.dim(1) * padded_w;
                    float* dst = tile.ptr() + c * in_h * in_w;
                    for (std::int64_t i = 0; i < in_h; ++i) {
                        std::copy(src + (y0 + i) * padded_w + dx, src + (y0 + i) * padded_w + dx + in_w,
                                  dst + i * in_w);
                    }
                }
                Tape<float> tape;
                const Tensor<float>& out = forward(graph, tile, tape);
                require(out.dim(2) == bn && out.dim(3) == nx, ErrorCategory::internal,
                        "unexpected fully-convolutional output extent");
                for (std::int64_t i = 0; i < bn; ++i) {
                    for (std::int64_t j = 0; j < nx; ++j) {
                        const std::int64_t gy = (dy + (band + i) * net_stride) / map_stride;
                        const std::int64_t gx = (dx + j * net_stride) / map_stride;
                        map.prob[map.idx(gy, gx)] = out.at4(0, 1, i, j);
                    }
                }
            }
        }
    }
}

}  // namespace

LikelihoodMap infer_map(NetGraph<float>& graph, const NetConfig& cfg, const LoadedSlide& slide,
                        std::int64_t map_stride_px, std::int64_t tile_cells) {
    require(!graph.training, ErrorCategory::state, "inference needs a graph in inference mode");
    const std::int64_t net_stride = trace_shapes(cfg).total_stride();
    if (map_stride_px == 0) map_stride_px = net_stride;
    require(map_stride_px >= 1 && net_stride % map_stride_px == 0, ErrorCategory::data,
            "map stride must divide the network stride of " + std::to_string(net_stride));
    require(tile_cells >= 1, ErrorCategory::data, "tile size must be positive");

    const std::int64_t h = slide.raster.height, w = slide.raster.width;
    require(h >= 1 && w >= 1, ErrorCategory::data, "empty slide raster");

    LikelihoodMap map;
    map.stride_px = map_stride_px;
    map.spacing_um = slide.rec.spacing_um;
    map.slide_id = slide.rec.id;
    map.height = (h + map_stride_px - 1) / map_stride_px;
    map.width = (w + map_stride_px - 1) / map_stride_px;
    map.prob.assign(static_cast<std::size_t>(map.height * map.width), 0.f);
    map.valid.assign(static_cast<std::size_t>(map.height * map.width), 0);

    Tensor<float> raster = slide_to_tensor(slide.raster);
    Tensor<float> padded = reflect_pad(raster, receptive_half_width(cfg));
    run_passes(graph, cfg, padded, h, w, map_stride_px, tile_cells, map);

    for (std::int64_t gy = 0; gy < map.height; ++gy) {
        for (std::int64_t gx = 0; gx < map.width; ++gx) {
            const std::int64_t py = gy * map_stride_px, px = gx * map_stride_px;
            map.valid[map.idx(gy, gx)] =
                slide.tissue.data[static_cast<std::size_t>(py * w + px)] ? 1 : 0;
        }
    }
    return map;
}

LikelihoodMap tta_combine(const Tensor<float>& raster,
                          const std::function<LikelihoodMap(const Tensor<float>&)>& infer) {
    LikelihoodMap result;
    std::vector<double> log_sum;
    for (int k = 0; k < 8; ++k) {
        Tensor<float> oriented = dihedral8(raster, k);
        LikelihoodMap m = infer(oriented);
        // bring the grid back into the slide frame
        Tensor<float> grid({1, m.height, m.width});
        std::copy(m.prob.begin(), m.prob.end(), grid.data.begin());
        Tensor<float> back = inverse_dihedral8(grid, k);
        if (k == 0) {
            result = m;
            result.prob.assign(result.prob.size(), 0.f);
            log_sum.assign(result.prob.size(), 0.0);
            require(back.dim(1) == result.height && back.dim(2) == result.width,
                    ErrorCategory::internal, "orientation grid mismatch");
        } else {
            require(back.dim(1) == result.height && back.dim(2) == result.width,
                    ErrorCategory::shape, "TTA needs orientation-stable grid extents");
        }
        for (std::size_t i = 0; i < log_sum.size(); ++i) {
            const double p = std::clamp(static_cast<double>(back.data[i]), 1e-12, 1.0);
            log_sum[i] += std::log(p);
        }
    }
    for (std::size_t i = 0; i < log_sum.size(); ++i) {
        result.prob[i] = static_cast<float>(std::exp(log_sum[i] / 8.0));
    }
    return result;
}

LikelihoodMap infer_tta(NetGraph<float>& graph, const NetConfig& cfg, const LoadedSlide& slide,
                        std::int64_t map_stride_px, std::int64_t tile_cells) {
    Tensor<float> raster = slide_to_tensor(slide.raster);
    LikelihoodMap combined = tta_combine(raster, [&](const Tensor<float>& oriented) {
        LoadedSlide tmp;
        tmp.rec = slide.rec;
        tmp.raster.width = oriented.dim(2);
        tmp.raster.height = oriented.dim(1);
        tmp.raster.channels = 3;
        tmp.raster.spacing_um = slide.raster.spacing_um;
        tmp.raster.data.resize(oriented.data.size());
        for (std::size_t i = 0; i < oriented.data.size(); ++i) {
            // exact u8 round trip: orientations only move samples around
            tmp.raster.data[i] = static_cast<std::uint8_t>(
                std::clamp(oriented.data[i] * 255.0f + 0.5f, 0.0f, 255.0f));
        }
        tmp.tissue.width = tmp.raster.width;
        tmp.tissue.height = tmp.raster.height;
        tmp.tissue.channels = 1;
        tmp.tissue.data.assign(static_cast<std::size_t>(tmp.raster.width * tmp.raster.height), 1);
        return infer_map(graph, cfg, tmp, map_stride_px, tile_cells);
    });
    // mask in the original slide frame
    const std::int64_t w = slide.raster.width;
    for (std::int64_t gy = 0; gy < combined.height; ++gy) {
        for (std::int64_t gx = 0; gx < combined.width; ++gx) {
            const std::int64_t py = gy * combined.stride_px, px = gx * combined.stride_px;
            combined.valid[combined.idx(gy, gx)] =
                slide.tissue.data[static_cast<std::size_t>(py * w + px)] ? 1 : 0;
        }
    }
    combined.slide_id = slide.rec.id;
    return combined;
}

void save_map(const std::string& path, const LikelihoodMap& map) {
    BinWriter w(path);
    w.magic("LMAP");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(map.width));
    w.u32(static_cast<std::uint32_t>(map.height));
    w.u32(static_cast<std::uint32_t>(map.stride_px));
    w.f32(static_cast<float>(map.spacing_um));
    w.f32(static_cast<float>(map.origin_x_px));
    w.f32(static_cast<float>(map.origin_y_px));
    w.str(map.slide_id);
    w.bytes(map.prob.data(), map.prob.size() * 4);
    std::vector<std::uint8_t> bits((map.prob.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < map.valid.size(); ++i) {
        if (map.valid[i]) bits[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
    }
    w.bytes(bits.data(), bits.size());
    w.close();
}

LikelihoodMap load_map(const std::string& path) {
    BinReader r(path);
    r.expect_magic("LMAP", "likelihood map");
    const std::uint32_t version = r.u32();
    require(version == 1, ErrorCategory::parse, "unsupported map version");
    LikelihoodMap map;
    map.width = r.u32();
    map.height = r.u32();
    map.stride_px = r.u32();
    map.spacing_um = r.f32();
    map.origin_x_px = r.f32();
    map.origin_y_px = r.f32();
    map.slide_id = r.str();
    const std::size_t n = static_cast<std::size_t>(map.width * map.height);
    map.prob.resize(n);
    r.bytes(map.prob.data(), n * 4);
    std::vector<std::uint8_t> bits((n + 7) / 8);
    r.bytes(bits.data(), bits.size());
    map.valid.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        map.valid[i] = (bits[i >> 3] >> (i & 7)) & 1u;
    }
    return map;
}

void export_pgm(const std::string& path, const LikelihoodMap& map) {
    BinWriter w(path);
    const std::string header =
        "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
    w.bytes(header.data(), header.size());
    std::vector<std::uint8_t> row(static_cast<std::size_t>(map.width));
    for (std::int64_t y = 0; y < map.height; ++y) {
        for (std::int64_t x = 0; x < map.width; ++x) {
            const std::size_t i = map.idx(y, x);
            const float v = map.valid[i] ? map.prob[i] : 0.f;
            row[static_cast<std::size_t>(x)] =
                static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
        }
        w.bytes(row.data(), row.size());
    }
    w.close();
}

}  // namespace lnmdet
