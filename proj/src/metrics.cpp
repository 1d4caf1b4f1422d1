#include "cbct/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cbct/errors.hpp"

namespace cbct {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

double auto_range(const Volume& ref) {
    auto [mn, mx] = std::minmax_element(ref.data.begin(), ref.data.end());
    return double(*mx) - double(*mn);
}

const std::vector<double>& gaussian_window() {
    static const std::vector<double> win = [] {
        std::vector<double> w(kWin * kWin);
        double sum = 0;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                const double dy = y - (kWin - 1) / 2.0;
                const double dx = x - (kWin - 1) / 2.0;
                const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
                w[y * kWin + x] = v;
                sum += v;
            }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return win;
}

// Mean SSIM of one slice over all fully-contained 11x11 windows.
double ssim_slice(const float* a, const float* b, int64_t h, int64_t w, double range) {
    const auto& win = gaussian_window();
    const double c1 = (kK1 * range) * (kK1 * range);
    const double c2 = (kK2 * range) * (kK2 * range);
    double total = 0;
    int64_t count = 0;
    for (int64_t y0 = 0; y0 + kWin <= h; ++y0)
        for (int64_t x0 = 0; x0 + kWin <= w; ++x0) {
            double mx = 0, my = 0;
            for (int yy = 0; yy < kWin; ++yy)
                for (int xx = 0; xx < kWin; ++xx) {
                    const double g = win[yy * kWin + xx];
                    mx += g * a[(y0 + yy) * w + x0 + xx];
                    my += g * b[(y0 + yy) * w + x0 + xx];
                }
            double vx = 0, vy = 0, cxy = 0;
            for (int yy = 0; yy < kWin; ++yy)
                for (int xx = 0; xx < kWin; ++xx) {
                    const double g = win[yy * kWin + xx];
                    const double da = a[(y0 + yy) * w + x0 + xx] - mx;
                    const double db = b[(y0 + yy) * w + x0 + xx] - my;
                    vx += g * da * da;
                    vy += g * db * db;
                    cxy += g * da * db;
                }
            const double num = (2 * mx * my + c1) * (2 * cxy + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    return total / double(count);
}

}  // namespace

PsnrResult psnr(const Volume& ref, const Volume& test, double data_range) {
    if (ref.d != test.d || ref.h != test.h || ref.w != test.w)
        throw ShapeError("psnr: volume shapes differ");
    PsnrResult r;
    r.data_range = data_range > 0 ? data_range : auto_range(ref);
    double mse = 0;
    for (int64_t i = 0; i < ref.size(); ++i) {
        const double d = double(ref.data[i]) - double(test.data[i]);
        mse += d * d;
    }
    mse /= double(ref.size());
    if (mse == 0.0) {
        r.identical = true;
        r.value_db = 1e9;
        return r;
    }
    r.value_db = 10.0 * std::log10(r.data_range * r.data_range / mse);
    return r;
}

double ssim(const Volume& ref, const Volume& test, double data_range) {
    if (ref.d != test.d || ref.h != test.h || ref.w != test.w)
        throw ShapeError("ssim: volume shapes differ");
    if (ref.h < kWin || ref.w < kWin)
        throw ParamError("ssim: axial slices must be at least 11x11");
    const double range = data_range > 0 ? data_range : auto_range(ref);
    double total = 0;
#pragma omp parallel for schedule(static) reduction(+ : total)
    for (int64_t z = 0; z < ref.d; ++z)
        total += ssim_slice(ref.data.data() + z * ref.h * ref.w,
                            test.data.data() + z * ref.h * ref.w, ref.h, ref.w, range);
    return total / double(ref.d);
}

MetricReport evaluate_metrics(const Volume& ref, const Volume& test, double data_range) {
    MetricReport rep;
    const PsnrResult p = psnr(ref, test, data_range);
    rep.psnr_db = p.value_db;
    rep.identical = p.identical;
    rep.data_range = p.data_range;
    rep.ssim = ssim(ref, test, rep.data_range);
    rep.psnr_per_slice.resize(ref.d);
    rep.ssim_per_slice.resize(ref.d);
    const int64_t slab = ref.h * ref.w;
    for (int64_t z = 0; z < ref.d; ++z) {
        double mse = 0;
        for (int64_t i = 0; i < slab; ++i) {
            const double d =
                double(ref.data[z * slab + i]) - double(test.data[z * slab + i]);
            mse += d * d;
        }
        mse /= double(slab);
        rep.psnr_per_slice[z] =
            mse == 0 ? 1e9 : 10.0 * std::log10(rep.data_range * rep.data_range / mse);
        rep.ssim_per_slice[z] = ssim_slice(ref.data.data() + z * slab, test.data.data() + z * slab,
                                           ref.h, ref.w, rep.data_range);
    }
    return rep;
}

}  // namespace cbct
