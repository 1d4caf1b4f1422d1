#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbct/volume.hpp"

namespace cbct {

// 8-bit grayscale PNG.
void write_png_gray8(const std::string& path, int64_t width, int64_t height,
                     const std::vector<uint8_t>& pixels);

enum class SlicePlane { kAxial, kCoronal, kSagittal };

// Extracts one slice and maps intensities through the window/level pair onto
// [0, 255]. window <= 0 selects the volume's full range.
std::vector<uint8_t> slice_gray8(const Volume& vol, SlicePlane plane, int64_t index,
                                 double window, double level, int64_t& out_w, int64_t& out_h);

// Writes axial/coronal/sagittal slices (central by default) as PNGs into dir.
void export_slices(const Volume& vol, const std::string& dir, double window, double level,
                   int64_t index = -1);

}  // namespace cbct
