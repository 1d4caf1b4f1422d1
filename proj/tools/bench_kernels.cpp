// Timing comparison of the OpenMP kernels against their serial reference
// implementations: 3D convolution (forward/backward), ray-driven forward
// projection and FDK reconstruction.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "cbct/fdk.hpp"
#include "cbct/kernels.hpp"
#include "cbct/phantom.hpp"
#include "cbct/projector.hpp"
#include "cbct/rng.hpp"

using namespace cbct;

namespace {

double time_of(int repeats, const std::function<void()>& fn) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
           repeats;
}

void report(const char* name, double gops, double serial_s, double parallel_s) {
    std::printf("%-28s serial %8.3f ms (%6.2f GMAC/s)   omp %8.3f ms (%6.2f GMAC/s)   speedup %.2fx\n",
                name, serial_s * 1e3, gops / serial_s * 1e-9, parallel_s * 1e3,
                gops / parallel_s * 1e-9, serial_s / parallel_s);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    Rng rng(1);

    {  // conv3d forward + gradients, 16ch 32^3, k3
        const auto dims = kernels::conv3d_dims(1, 16, 32, 32, 32, 16, 3, 3, 3, 1, 1);
        std::vector<float> in(dims.n * dims.cin * dims.d * dims.h * dims.w);
        std::vector<float> wgt(dims.cout * dims.cin * 27), bias(dims.cout);
        for (auto& v : in) v = float(rng.normal());
        for (auto& v : wgt) v = float(rng.normal());
        const int64_t out_n = dims.n * dims.cout * dims.od * dims.oh * dims.ow;
        std::vector<float> out(out_n), gin(in.size()), gw(wgt.size());
        const double macs = double(out_n) * dims.cin * 27;

        report("conv3d forward", macs,
               time_of(3, [&] { kernels::serial::conv3d_forward(in.data(), wgt.data(),
                                                                bias.data(), out.data(), dims); }),
               time_of(3, [&] { kernels::conv3d_forward(in.data(), wgt.data(), bias.data(),
                                                        out.data(), dims); }));
        report("conv3d grad-input", macs,
               time_of(3, [&] {
                   std::fill(gin.begin(), gin.end(), 0.f);
                   kernels::serial::conv3d_grad_input(out.data(), wgt.data(), gin.data(), dims);
               }),
               time_of(3, [&] {
                   std::fill(gin.begin(), gin.end(), 0.f);
                   kernels::conv3d_grad_input(out.data(), wgt.data(), gin.data(), dims);
               }));
        report("conv3d grad-weight", macs,
               time_of(3, [&] {
                   std::fill(gw.begin(), gw.end(), 0.f);
                   kernels::serial::conv3d_grad_weight(in.data(), out.data(), gw.data(), dims);
               }),
               time_of(3, [&] {
                   std::fill(gw.begin(), gw.end(), 0.f);
                   kernels::conv3d_grad_weight(in.data(), out.data(), gw.data(), dims);
               }));
    }

    {  // forward projection + FDK on the 64^3 desk geometry
        GeometryConfig gc;
        gc.n_views = 120;
        const auto geom = make_geometry(gc);
        const auto vol = generate_phantom(PhantomSpec::random(7, 24.0), 64, 64, 64, 1.0);
        const double proj_samples =
            double(geom.n_views()) * geom.detector_rows * geom.detector_cols * 128.0;
        report("forward projection", proj_samples,
               time_of(1, [&] { forward_project(vol, geom, false); }),
               time_of(1, [&] { forward_project(vol, geom, true); }));

        const auto proj = forward_project(vol, geom);
        const double bp_ops = double(64 * 64 * 64) * geom.n_views();
        report("fdk reconstruction", bp_ops,
               time_of(1, [&] { fdk_reconstruct(proj, RampWindow::kHann, false); }),
               time_of(1, [&] { fdk_reconstruct(proj, RampWindow::kHann, true); }));
    }
    return 0;
}
