#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "cbct/errors.hpp"

// Dense 3D convolution kernels. The OpenMP variants parallelize over disjoint
// output slabs with a fixed per-slab accumulation order, so results are
// bit-identical for any thread count. kernels::serial holds plain nested-loop
// reference implementations kept for correctness tests and the benchmark tool.
namespace cbct::kernels {

struct Conv3dDims {
    int64_t n, cin, d, h, w;       // input
    int64_t cout, kd, kh, kw;      // weight [cout][cin][kd][kh][kw]
    int64_t stride, pad;
    int64_t od, oh, ow;            // output
};

inline Conv3dDims conv3d_dims(int64_t n, int64_t cin, int64_t d, int64_t h, int64_t w,
                              int64_t cout, int64_t kd, int64_t kh, int64_t kw,
                              int64_t stride, int64_t pad) {
    if (stride < 1) throw ParamError("conv stride must be >= 1");
    if (pad < 0) throw ParamError("conv padding must be >= 0");
    Conv3dDims c{n, cin, d, h, w, cout, kd, kh, kw, stride, pad, 0, 0, 0};
    c.od = (d + 2 * pad - kd) / stride + 1;
    c.oh = (h + 2 * pad - kh) / stride + 1;
    c.ow = (w + 2 * pad - kw) / stride + 1;
    if (d + 2 * pad < kd) throw ShapeError("kernel depth " + std::to_string(kd) +
                                           " exceeds padded input depth " + std::to_string(d + 2 * pad));
    if (h + 2 * pad < kh) throw ShapeError("kernel height " + std::to_string(kh) +
                                           " exceeds padded input height " + std::to_string(h + 2 * pad));
    if (w + 2 * pad < kw) throw ShapeError("kernel width " + std::to_string(kw) +
                                           " exceeds padded input width " + std::to_string(w + 2 * pad));
    return c;
}

namespace detail {
// Output index range [lo, hi) for which i = o*stride + k - pad lies in [0, extent).
inline void valid_range(int64_t k, int64_t pad, int64_t stride, int64_t extent, int64_t out_extent,
                        int64_t& lo, int64_t& hi) {
    // o*stride >= pad - k   and   o*stride <= extent - 1 + pad - k
    const int64_t num = pad - k;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    const int64_t top = extent - 1 + pad - k;
    hi = top < 0 ? 0 : std::min(out_extent, top / stride + 1);
    if (hi < lo) hi = lo;
}
}  // namespace detail

// out[n][co] := bias[co] (or 0), then accumulates w[co][ci][kz][ky][kx] * shifted input.
// With accumulate=true the existing contents are kept (bias must be null).
template <typename T>
void conv3d_forward(const T* in, const T* wgt, const T* bias, T* out, const Conv3dDims& c,
                    bool accumulate = false) {
    const int64_t out_slab = c.od * c.oh * c.ow;
    const int64_t in_slab = c.d * c.h * c.w;
    const int64_t k_vol = c.kd * c.kh * c.kw;
    const int64_t tasks = c.n * c.cout;
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < tasks; ++t) {
        const int64_t nn = t / c.cout;
        const int64_t co = t % c.cout;
        T* op = out + t * out_slab;
        if (!accumulate) {
            const T bv = bias ? bias[co] : T(0);
            std::fill(op, op + out_slab, bv);
        }
        for (int64_t ci = 0; ci < c.cin; ++ci) {
            const T* ip = in + (nn * c.cin + ci) * in_slab;
            const T* wp = wgt + (co * c.cin + ci) * k_vol;
            for (int64_t kz = 0; kz < c.kd; ++kz) {
                int64_t zlo, zhi;
                detail::valid_range(kz, c.pad, c.stride, c.d, c.od, zlo, zhi);
                for (int64_t ky = 0; ky < c.kh; ++ky) {
                    int64_t ylo, yhi;
                    detail::valid_range(ky, c.pad, c.stride, c.h, c.oh, ylo, yhi);
                    for (int64_t kx = 0; kx < c.kw; ++kx) {
                        const T wv = wp[(kz * c.kh + ky) * c.kw + kx];
                        int64_t xlo, xhi;
                        detail::valid_range(kx, c.pad, c.stride, c.w, c.ow, xlo, xhi);
                        for (int64_t oz = zlo; oz < zhi; ++oz) {
                            const int64_t iz = oz * c.stride + kz - c.pad;
                            for (int64_t oy = ylo; oy < yhi; ++oy) {
                                const int64_t iy = oy * c.stride + ky - c.pad;
                                const T* irow = ip + (iz * c.h + iy) * c.w + (kx - c.pad);
                                T* orow = op + (oz * c.oh + oy) * c.ow;
                                if (c.stride == 1) {
                                    for (int64_t ox = xlo; ox < xhi; ++ox)
                                        orow[ox] += wv * irow[ox];
                                } else {
                                    for (int64_t ox = xlo; ox < xhi; ++ox)
                                        orow[ox] += wv * irow[ox * c.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// gin[n][ci] += sum over (co, k) of w * gout. Also serves as the
// transposed-convolution forward (gout := input, gin := output).
template <typename T>
void conv3d_grad_input(const T* gout, const T* wgt, T* gin, const Conv3dDims& c) {
    const int64_t out_slab = c.od * c.oh * c.ow;
    const int64_t in_slab = c.d * c.h * c.w;
    const int64_t k_vol = c.kd * c.kh * c.kw;
    const int64_t tasks = c.n * c.cin;
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < tasks; ++t) {
        const int64_t nn = t / c.cin;
        const int64_t ci = t % c.cin;
        T* gip = gin + t * in_slab;
        for (int64_t co = 0; co < c.cout; ++co) {
            const T* gop = gout + (nn * c.cout + co) * out_slab;
            const T* wp = wgt + (co * c.cin + ci) * k_vol;
            for (int64_t kz = 0; kz < c.kd; ++kz) {
                int64_t zlo, zhi;
                detail::valid_range(kz, c.pad, c.stride, c.d, c.od, zlo, zhi);
                for (int64_t ky = 0; ky < c.kh; ++ky) {
                    int64_t ylo, yhi;
                    detail::valid_range(ky, c.pad, c.stride, c.h, c.oh, ylo, yhi);
                    for (int64_t kx = 0; kx < c.kw; ++kx) {
                        const T wv = wp[(kz * c.kh + ky) * c.kw + kx];
                        int64_t xlo, xhi;
                        detail::valid_range(kx, c.pad, c.stride, c.w, c.ow, xlo, xhi);
                        for (int64_t oz = zlo; oz < zhi; ++oz) {
                            const int64_t iz = oz * c.stride + kz - c.pad;
                            for (int64_t oy = ylo; oy < yhi; ++oy) {
                                const int64_t iy = oy * c.stride + ky - c.pad;
                                const T* grow = gop + (oz * c.oh + oy) * c.ow;
                                T* girow = gip + (iz * c.h + iy) * c.w + (kx - c.pad);
                                if (c.stride == 1) {
                                    for (int64_t ox = xlo; ox < xhi; ++ox)
                                        girow[ox] += wv * grow[ox];
                                } else {
                                    for (int64_t ox = xlo; ox < xhi; ++ox)
                                        girow[ox * c.stride] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// gwgt[co][ci][k] += <gout[n][co], shifted in[n][ci]> summed over n.
template <typename T>
void conv3d_grad_weight(const T* in, const T* gout, T* gwgt, const Conv3dDims& c) {
    const int64_t out_slab = c.od * c.oh * c.ow;
    const int64_t in_slab = c.d * c.h * c.w;
    const int64_t k_vol = c.kd * c.kh * c.kw;
    const int64_t tasks = c.cout * c.cin;
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < tasks; ++t) {
        const int64_t co = t / c.cin;
        const int64_t ci = t % c.cin;
        T* wp = gwgt + t * k_vol;
        for (int64_t kz = 0; kz < c.kd; ++kz) {
            int64_t zlo, zhi;
            detail::valid_range(kz, c.pad, c.stride, c.d, c.od, zlo, zhi);
            for (int64_t ky = 0; ky < c.kh; ++ky) {
                int64_t ylo, yhi;
                detail::valid_range(ky, c.pad, c.stride, c.h, c.oh, ylo, yhi);
                for (int64_t kx = 0; kx < c.kw; ++kx) {
                    int64_t xlo, xhi;
                    detail::valid_range(kx, c.pad, c.stride, c.w, c.ow, xlo, xhi);
                    T acc = 0;
                    for (int64_t nn = 0; nn < c.n; ++nn) {
                        const T* gop = gout + (nn * c.cout + co) * out_slab;
                        const T* ip = in + (nn * c.cin + ci) * in_slab;
                        for (int64_t oz = zlo; oz < zhi; ++oz) {
                            const int64_t iz = oz * c.stride + kz - c.pad;
                            for (int64_t oy = ylo; oy < yhi; ++oy) {
                                const int64_t iy = oy * c.stride + ky - c.pad;
                                const T* grow = gop + (oz * c.oh + oy) * c.ow;
                                const T* irow = ip + (iz * c.h + iy) * c.w + (kx - c.pad);
                                if (c.stride == 1) {
                                    for (int64_t ox = xlo; ox < xhi; ++ox)
                                        acc += grow[ox] * irow[ox];
                                } else {
                                    for (int64_t ox = xlo; ox < xhi; ++ox)
                                        acc += grow[ox] * irow[ox * c.stride];
                                }
                            }
                        }
                    }
                    wp[(kz * c.kh + ky) * c.kw + kx] += acc;
                }
            }
        }
    }
}

template <typename T>
void conv3d_grad_bias(const T* gout, T* gbias, const Conv3dDims& c) {
    const int64_t out_slab = c.od * c.oh * c.ow;
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < c.cout; ++co) {
        T acc = 0;
        for (int64_t nn = 0; nn < c.n; ++nn) {
            const T* gop = gout + (nn * c.cout + co) * out_slab;
            for (int64_t i = 0; i < out_slab; ++i) acc += gop[i];
        }
        gbias[co] += acc;
    }
}

// Plain nested-loop references; one output element per innermost accumulation.
namespace serial {

template <typename T>
void conv3d_forward(const T* in, const T* wgt, const T* bias, T* out, const Conv3dDims& c) {
    const int64_t out_slab = c.od * c.oh * c.ow;
    const int64_t in_slab = c.d * c.h * c.w;
    const int64_t k_vol = c.kd * c.kh * c.kw;
    for (int64_t nn = 0; nn < c.n; ++nn)
        for (int64_t co = 0; co < c.cout; ++co)
            for (int64_t oz = 0; oz < c.od; ++oz)
                for (int64_t oy = 0; oy < c.oh; ++oy)
                    for (int64_t ox = 0; ox < c.ow; ++ox) {
                        T acc = bias ? bias[co] : T(0);
                        for (int64_t ci = 0; ci < c.cin; ++ci)
                            for (int64_t kz = 0; kz < c.kd; ++kz)
                                for (int64_t ky = 0; ky < c.kh; ++ky)
                                    for (int64_t kx = 0; kx < c.kw; ++kx) {
                                        const int64_t iz = oz * c.stride + kz - c.pad;
                                        const int64_t iy = oy * c.stride + ky - c.pad;
                                        const int64_t ix = ox * c.stride + kx - c.pad;
                                        if (iz < 0 || iz >= c.d || iy < 0 || iy >= c.h || ix < 0 ||
                                            ix >= c.w)
                                            continue;
                                        acc += wgt[((co * c.cin + ci) * k_vol) +
                                                   (kz * c.kh + ky) * c.kw + kx] *
                                               in[(nn * c.cin + ci) * in_slab +
                                                  (iz * c.h + iy) * c.w + ix];
                                    }
                        out[(nn * c.cout + co) * out_slab + (oz * c.oh + oy) * c.ow + ox] = acc;
                    }
}

// Scatter-add form of the adjoint; used as the transposed-conv oracle.
template <typename T>
void conv3d_grad_input(const T* gout, const T* wgt, T* gin, const Conv3dDims& c) {
    const int64_t out_slab = c.od * c.oh * c.ow;
    const int64_t in_slab = c.d * c.h * c.w;
    const int64_t k_vol = c.kd * c.kh * c.kw;
    for (int64_t nn = 0; nn < c.n; ++nn)
        for (int64_t co = 0; co < c.cout; ++co)
            for (int64_t oz = 0; oz < c.od; ++oz)
                for (int64_t oy = 0; oy < c.oh; ++oy)
                    for (int64_t ox = 0; ox < c.ow; ++ox) {
                        const T g = gout[(nn * c.cout + co) * out_slab + (oz * c.oh + oy) * c.ow + ox];
                        for (int64_t ci = 0; ci < c.cin; ++ci)
                            for (int64_t kz = 0; kz < c.kd; ++kz)
                                for (int64_t ky = 0; ky < c.kh; ++ky)
                                    for (int64_t kx = 0; kx < c.kw; ++kx) {
                                        const int64_t iz = oz * c.stride + kz - c.pad;
                                        const int64_t iy = oy * c.stride + ky - c.pad;
                                        const int64_t ix = ox * c.stride + kx - c.pad;
                                        if (iz < 0 || iz >= c.d || iy < 0 || iy >= c.h || ix < 0 ||
                                            ix >= c.w)
                                            continue;
                                        gin[(nn * c.cin + ci) * in_slab + (iz * c.h + iy) * c.w +
                                            ix] += g * wgt[((co * c.cin + ci) * k_vol) +
                                                           (kz * c.kh + ky) * c.kw + kx];
                                    }
                    }
}

template <typename T>
void conv3d_grad_weight(const T* in, const T* gout, T* gwgt, const Conv3dDims& c) {
    const int64_t out_slab = c.od * c.oh * c.ow;
    const int64_t in_slab = c.d * c.h * c.w;
    const int64_t k_vol = c.kd * c.kh * c.kw;
    for (int64_t co = 0; co < c.cout; ++co)
        for (int64_t ci = 0; ci < c.cin; ++ci)
            for (int64_t kz = 0; kz < c.kd; ++kz)
                for (int64_t ky = 0; ky < c.kh; ++ky)
                    for (int64_t kx = 0; kx < c.kw; ++kx) {
                        T acc = 0;
                        for (int64_t nn = 0; nn < c.n; ++nn)
                            for (int64_t oz = 0; oz < c.od; ++oz)
                                for (int64_t oy = 0; oy < c.oh; ++oy)
                                    for (int64_t ox = 0; ox < c.ow; ++ox) {
                                        const int64_t iz = oz * c.stride + kz - c.pad;
                                        const int64_t iy = oy * c.stride + ky - c.pad;
                                        const int64_t ix = ox * c.stride + kx - c.pad;
                                        if (iz < 0 || iz >= c.d || iy < 0 || iy >= c.h || ix < 0 ||
                                            ix >= c.w)
                                            continue;
                                        acc += gout[(nn * c.cout + co) * out_slab +
                                                    (oz * c.oh + oy) * c.ow + ox] *
                                               in[(nn * c.cin + ci) * in_slab +
                                                  (iz * c.h + iy) * c.w + ix];
                                    }
                        gwgt[((co * c.cin + ci) * k_vol) + (kz * c.kh + ky) * c.kw + kx] += acc;
                    }
}

}  // namespace serial

}  // namespace cbct::kernels
