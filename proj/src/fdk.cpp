#include "cbct/fdk.hpp"

#include <cmath>

#include "cbct/errors.hpp"
#include "cbct/fft.hpp"

namespace cbct {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

RampWindow ramp_window_from_string(const std::string& name) {
    if (name == "ramlak" || name == "ram-lak") return RampWindow::kRamLak;
    if (name == "hann") return RampWindow::kHann;
    throw ParamError("unknown ramp window: " + name);
}

std::string to_string(RampWindow w) { return w == RampWindow::kHann ? "hann" : "ramlak"; }

RampFilter build_ramp(int64_t cols, RampWindow window, double pitch) {
    if (cols < 2) throw ParamError("build_ramp requires cols >= 2");
    if (pitch <= 0) throw ParamError("build_ramp requires positive pitch");
    RampFilter f;
    f.length = next_pow2(2 * cols);
    f.window = window;
    f.pitch = pitch;

    // Sampled band-limited ramp, wrap-around layout over the padded length.
    std::vector<std::complex<double>> h(f.length, 0.0);
    const double du2 = pitch * pitch;
    h[0] = 1.0 / (4.0 * du2);
    for (int64_t n = 1; n <= f.length / 2; ++n) {
        if (n % 2 == 1) {
            const double v = -1.0 / (kPi * kPi * double(n) * double(n) * du2);
            h[n] = v;
            h[f.length - n] = v;
        }
    }
    fft_pow2(h, false);
    f.kernel.resize(f.length);
    for (int64_t k = 0; k < f.length; ++k) {
        double weight = h[k].real();  // imaginary part vanishes by symmetry
        if (window == RampWindow::kHann) {
            const int64_t half = f.length / 2;
            const int64_t fk = k <= half ? k : f.length - k;
            weight *= 0.5 * (1.0 + std::cos(kPi * double(fk) / double(half)));
        }
        f.kernel[k] = weight;
    }
    return f;
}

void RampFilter::filter_row(double* row, int64_t cols) const {
    std::vector<std::complex<double>> buf(length, 0.0);
    for (int64_t i = 0; i < cols; ++i) buf[i] = row[i];
    fft_pow2(buf, false);
    for (int64_t i = 0; i < length; ++i) buf[i] *= kernel[i];
    fft_pow2(buf, true);
    for (int64_t i = 0; i < cols; ++i) row[i] = buf[i].real();
}

Volume fdk_reconstruct(const ProjectionSet& proj, RampWindow window, bool parallel) {
    return fdk_reconstruct(proj, proj.geometry.vol_d, proj.geometry.vol_h, proj.geometry.vol_w,
                           window, parallel);
}

Volume fdk_reconstruct(const ProjectionSet& proj, int64_t out_d, int64_t out_h, int64_t out_w,
                       RampWindow window, bool parallel) {
    const ConeBeamGeometry& g = proj.geometry;
    const int64_t nv = proj.n_views();
    if (nv < 2) throw GeometryError("fdk_reconstruct requires at least 2 views");
    const int64_t rows = g.detector_rows, cols = g.detector_cols;
    if (int64_t(proj.data.size()) != nv * rows * cols)
        throw GeometryError("projection data does not match its geometry");
    for (float v : proj.data)
        if (!std::isfinite(v)) throw ParamError("projection data contains non-finite values");

    const double sid = g.source_to_isocenter;
    const double du = g.virtual_pitch_u();  // detector rescaled to the isocenter plane
    const double dv = g.virtual_pitch_v();
    const double cu = 0.5 * double(cols - 1);
    const double cv = 0.5 * double(rows - 1);

    // 1) cosine pre-weighting + 2) row-wise ramp filtering, per view.
    const RampFilter ramp = build_ramp(cols, window, du);
    std::vector<double> filtered(size_t(nv) * rows * cols);
#pragma omp parallel for schedule(static) if (parallel)
    for (int64_t t = 0; t < nv * rows; ++t) {
        const int64_t view = t / rows;
        const int64_t r = t % rows;
        const float* src = proj.view(view) + r * cols;
        double* dst = filtered.data() + (view * rows + r) * cols;
        const double v_mm = (double(r) - cv) * dv;
        for (int64_t c = 0; c < cols; ++c) {
            const double u_mm = (double(c) - cu) * du;
            const double cosw = sid / std::sqrt(sid * sid + u_mm * u_mm + v_mm * v_mm);
            dst[c] = double(src[c]) * cosw;
        }
        ramp.filter_row(dst, cols);
    }

    // Angular spacing of the actual view set; full-circle fan coverage is
    // double, hence the 1/2 on the filtered values.
    const double dbeta = nv > 1 ? (proj.view_angles[1] - proj.view_angles[0])
                                : 2.0 * kPi;
    const double q_scale = 0.5 * du * dbeta;

    Volume out = Volume::centered(out_d, out_h, out_w, g.voxel_spacing);

    std::vector<double> cos_b(nv), sin_b(nv);
    for (int64_t v = 0; v < nv; ++v) {
        cos_b[v] = std::cos(proj.view_angles[v]);
        sin_b[v] = std::sin(proj.view_angles[v]);
    }

    // 3) voxel-driven backprojection; each voxel accumulates its own view sum,
    // so the result does not depend on the thread count.
#pragma omp parallel for schedule(static) if (parallel)
    for (int64_t dz = 0; dz < out_d; ++dz) {
        const double z = out.origin_z + double(dz) * out.spacing;
        for (int64_t dy = 0; dy < out_h; ++dy) {
            const double y = out.origin_y + double(dy) * out.spacing;
            for (int64_t dx = 0; dx < out_w; ++dx) {
                const double x = out.origin_x + double(dx) * out.spacing;
                double acc = 0.0;
                for (int64_t v = 0; v < nv; ++v) {
                    const double s_dist = sid - (x * cos_b[v] + y * sin_b[v]);
                    if (s_dist <= 1e-6) continue;
                    const double mag = sid / s_dist;
                    const double u_mm = (-x * sin_b[v] + y * cos_b[v]) * mag;
                    const double v_mm = z * mag;
                    const double ui = u_mm / du + cu;
                    const double vi = v_mm / dv + cv;
                    const int64_t u0 = int64_t(std::floor(ui));
                    const int64_t v0 = int64_t(std::floor(vi));
                    if (u0 < -1 || u0 >= cols || v0 < -1 || v0 >= rows) continue;
                    const double fu = ui - double(u0);
                    const double fv = vi - double(v0);
                    const double* plane = filtered.data() + v * rows * cols;
                    double interp = 0.0;
                    for (int iv = 0; iv < 2; ++iv) {
                        const int64_t rr = v0 + iv;
                        if (rr < 0 || rr >= rows) continue;
                        const double wv2 = iv ? fv : 1.0 - fv;
                        for (int iu = 0; iu < 2; ++iu) {
                            const int64_t cc = u0 + iu;
                            if (cc < 0 || cc >= cols) continue;
                            const double wu = iu ? fu : 1.0 - fu;
                            interp += wv2 * wu * plane[rr * cols + cc];
                        }
                    }
                    acc += mag * mag * interp;
                }
                out.at(dz, dy, dx) = float(acc * q_scale);
            }
        }
    }
    return out;
}

}  // namespace cbct
