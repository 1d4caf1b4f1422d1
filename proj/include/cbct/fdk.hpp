#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbct/projector.hpp"
#include "cbct/volume.hpp"

namespace cbct {

enum class RampWindow { kRamLak, kHann };

RampWindow ramp_window_from_string(const std::string& name);
std::string to_string(RampWindow w);

// Row filter for filtered backprojection. The frequency weights come from the
// sampled spatial-domain ramp (h[0] = 1/(4 du^2), h[odd n] = -1/(pi n du)^2,
// even taps zero), not from a naive |f| with a zeroed DC bin.
struct RampFilter {
    int64_t length = 0;  // padded FFT size, next power of two >= 2*cols
    std::vector<double> kernel;  // real frequency-domain weights, size `length`
    RampWindow window = RampWindow::kRamLak;
    double pitch = 1.0;

    // Discrete convolution with the ramp kernel (no du scaling), in place.
    void filter_row(double* row, int64_t cols) const;
};

RampFilter build_ramp(int64_t cols, RampWindow window, double pitch = 1.0);

// Feldkamp reconstruction: cosine pre-weighting, row-wise ramp filtering and
// distance-weighted voxel-driven backprojection with bilinear detector
// interpolation. Angular spacing comes from the actual (possibly subsampled)
// view set. `parallel=false` runs the serial backprojection kept for testing.
Volume fdk_reconstruct(const ProjectionSet& proj, int64_t out_d, int64_t out_h, int64_t out_w,
                       RampWindow window = RampWindow::kHann, bool parallel = true);

// Output grid taken from the projection geometry.
Volume fdk_reconstruct(const ProjectionSet& proj, RampWindow window = RampWindow::kHann,
                       bool parallel = true);

}  // namespace cbct
