#include "lnmdet/raster.hpp"

#include "lnmdet/io.hpp"

namespace lnmdet {

namespace {

template <typename S>
void write_impl(const std::string& path, const Raster<S>& r) {
    require(static_cast<std::int64_t>(r.data.size()) == r.channels * r.width * r.height,
            ErrorCategory::shape, "raster data does not match its dimensions");
    BinWriter w(path);
    w.magic("SRAS");
    w.u32(static_cast<std::uint32_t>(r.width));
    w.u32(static_cast<std::uint32_t>(r.height));
    w.f32(r.spacing_um);
    w.u8(static_cast<std::uint8_t>(r.channels));
    w.bytes(r.data.data(), r.data.size() * sizeof(S));
    w.close();
}

template <typename S>
Raster<S> read_impl(const std::string& path, std::int64_t want_channels) {
    BinReader r(path);
    r.expect_magic("SRAS", "raster");
    Raster<S> out;
    out.width = r.u32();
    out.height = r.u32();
    out.spacing_um = r.f32();
    out.channels = r.u8();
    require(out.channels == want_channels, ErrorCategory::parse,
            "unexpected channel count in " + path + ": got " + std::to_string(out.channels) +
                ", want " + std::to_string(want_channels));
    require(out.width > 0 && out.height > 0, ErrorCategory::parse, "empty raster: " + path);
    out.data.resize(static_cast<std::size_t>(out.channels * out.width * out.height));
    r.bytes(out.data.data(), out.data.size() * sizeof(S));
    return out;
}

}  // namespace

void write_raster(const std::string& path, const RgbRaster& r) {
    require(r.channels == 3, ErrorCategory::shape, "slide raster must have 3 channels");
    write_impl(path, r);
}

void write_tissue_mask(const std::string& path, const TissueMask& m) {
    require(m.channels == 1, ErrorCategory::shape, "tissue mask must have 1 channel");
    write_impl(path, m);
}

void write_lesion_mask(const std::string& path, const LesionMask& m) {
    require(m.channels == 1, ErrorCategory::shape, "lesion mask must have 1 channel");
    write_impl(path, m);
}

RgbRaster read_raster(const std::string& path) { return read_impl<std::uint8_t>(path, 3); }

TissueMask read_tissue_mask(const std::string& path) { return read_impl<std::uint8_t>(path, 1); }

LesionMask read_lesion_mask(const std::string& path) { return read_impl<std::uint16_t>(path, 1); }

}  // namespace lnmdet
