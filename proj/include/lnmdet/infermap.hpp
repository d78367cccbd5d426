#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lnmdet/augment.hpp"
#include "lnmdet/netbuild.hpp"
#include "lnmdet/sampler.hpp"
#include "lnmdet/tensor.hpp"

namespace lnmdet {

// Strided grid of cancer probabilities over one slide. Cell (gy, gx) predicts
// the label of slide pixel (gy * stride, gx * stride); non-tissue cells are
// masked and excluded from maxima.
struct LikelihoodMap {
    std::int64_t width = 0;   // cells
    std::int64_t height = 0;  // cells
    std::int64_t stride_px = 16;
    double spacing_um = 0.5;
    double origin_x_px = 0.0;
    double origin_y_px = 0.0;
    std::string slide_id;
    std::vector<float> prob;          // height * width, row-major, in [0, 1]
    std::vector<std::uint8_t> valid;  // 1 = tissue cell

    double cell_um() const { return static_cast<double>(stride_px) * spacing_um; }
    double x_um(std::int64_t gx) const { return (origin_x_px + static_cast<double>(gx * stride_px)) * spacing_um; }
    double y_um(std::int64_t gy) const { return (origin_y_px + static_cast<double>(gy * stride_px)) * spacing_um; }
    std::size_t idx(std::int64_t gy, std::int64_t gx) const {
        return static_cast<std::size_t>(gy * width + gx);
    }
};

// Converts a slide raster to a [3, H, W] float tensor in [0, 1].
Tensor<float> slide_to_tensor(const RgbRaster& raster);

// Fully-convolutional inference at the requested map stride. map_stride_px
// must divide the network's native downsampling stride; the network runs once
// per sub-stride shift and the outputs interleave ("shift and stitch"). The
// native stride (one pass) is the default; 1 gives the dense per-pixel map.
// The slide border is reflect-padded by the receptive-field half-width so the
// map covers every pixel.
LikelihoodMap infer_map(NetGraph<float>& graph, const NetConfig& cfg, const LoadedSlide& slide,
                        std::int64_t map_stride_px = 0, std::int64_t tile_cells = 128);

// Geometric mean over the eight dihedral orientations, computed in log space
// with probabilities clamped to [1e-12, 1]. `infer` maps an oriented [3,H,W]
// raster tensor to its probability grid (used directly by tests; infer_tta
// wires it to infer_map).
LikelihoodMap tta_combine(const Tensor<float>& raster,
                          const std::function<LikelihoodMap(const Tensor<float>&)>& infer);

LikelihoodMap infer_tta(NetGraph<float>& graph, const NetConfig& cfg, const LoadedSlide& slide,
                        std::int64_t map_stride_px = 0, std::int64_t tile_cells = 128);

// 'LMAP' container: magic, version u32, width u32, height u32, stride u32,
// spacing f32, origin f32 x2, slide id str, f32 grid, packed valid bitmap.
void save_map(const std::string& path, const LikelihoodMap& map);
LikelihoodMap load_map(const std::string& path);

// 8-bit PGM preview: probability 0 -> 0, 1 -> 255, masked cells -> 0.
void export_pgm(const std::string& path, const LikelihoodMap& map);

}  // namespace lnmdet
