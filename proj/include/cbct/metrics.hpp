#pragma once

#include <cstdint>
#include <vector>

#include "cbct/volume.hpp"

namespace cbct {

// PSNR/SSIM between a reference and a test volume. `identical` flags an
// exact match, where PSNR has no finite value.
struct MetricReport {
    double psnr_db = 0.0;
    bool identical = false;
    double ssim = 0.0;
    double data_range = 0.0;  // range actually used
    std::vector<double> psnr_per_slice;  // axial slices; +inf encoded as 1e9
    std::vector<double> ssim_per_slice;
};

// 10*log10(range^2 / MSE). range <= 0 selects max(ref)-min(ref).
struct PsnrResult {
    double value_db = 0.0;
    bool identical = false;
    double data_range = 0.0;
};
PsnrResult psnr(const Volume& ref, const Volume& test, double data_range = 0.0);

// Mean 2D SSIM over axial slices: 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, windows fully inside the slice. range <= 0 selects max-min of ref.
double ssim(const Volume& ref, const Volume& test, double data_range = 0.0);

MetricReport evaluate_metrics(const Volume& ref, const Volume& test, double data_range = 0.0);

}  // namespace cbct
