#pragma once

// 'SRAS' raster container, little-endian:
//   magic 'SRAS' | width u32 | height u32 | spacing f32 (um/px) | channels u8
//   planar row-major sample data
// Slide rasters store three 8-bit planes (R, G, B), tissue masks one 8-bit
// plane, lesion masks one 16-bit plane of lesion ids (0 = background). The
// sample depth is implied by the file's role in the manifest.

#include <cstdint>
#include <string>
#include <vector>

#include "lnmdet/common.hpp"

namespace lnmdet {

template <typename S>
struct Raster {
    std::int64_t width = 0;
    std::int64_t height = 0;
    float spacing_um = 0.5f;
    std::int64_t channels = 1;
    std::vector<S> data;  // planar row-major

    S at(std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((c * height + y) * width + x)];
    }
    S& at(std::int64_t c, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((c * height + y) * width + x)];
    }
};

using RgbRaster = Raster<std::uint8_t>;     // channels = 3
using TissueMask = Raster<std::uint8_t>;    // channels = 1, nonzero = tissue
using LesionMask = Raster<std::uint16_t>;   // channels = 1, lesion ids

void write_raster(const std::string& path, const RgbRaster& r);
void write_tissue_mask(const std::string& path, const TissueMask& m);
void write_lesion_mask(const std::string& path, const LesionMask& m);

RgbRaster read_raster(const std::string& path);
TissueMask read_tissue_mask(const std::string& path);
LesionMask read_lesion_mask(const std::string& path);

}  // namespace lnmdet
