#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cbct/kernels.hpp"
#include "cbct/tensor.hpp"

// Differentiable operations. Every op builds a graph node whose backward
// closure accumulates into the parents' grads, so repeated backward calls
// without zeroing add up.
namespace cbct::ad {

namespace detail {

template <typename T>
std::shared_ptr<Node<T>> make_node(std::vector<int64_t> shape, std::vector<T> value,
                                   std::vector<std::shared_ptr<Node<T>>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != sb.size())
        throw ShapeError(std::string(op) + ": rank mismatch " + std::to_string(sa.size()) + " vs " +
                         std::to_string(sb.size()));
    for (size_t i = 0; i < sa.size(); ++i)
        if (sa[i] != sb[i])
            throw ShapeError(std::string(op) + ": axis " + std::to_string(i) + " mismatch " +
                             std::to_string(sa[i]) + " vs " + std::to_string(sb[i]));
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    const int64_t n = a.size();
    std::vector<T> v(n);
    const T* pa = a.data().data();
    const T* pb = b.data().data();
#pragma omp parallel for schedule(static) if (n > 1 << 16)
    for (int64_t i = 0; i < n; ++i) v[i] = pa[i] + pb[i];
    auto node = detail::make_node<T>(a.shape(), std::move(v), {a.node(), b.node()});
    auto an = a.node(), bn = b.node();
    node->backward_op = [an, bn](Node<T>& self) {
        const int64_t n = self.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
        }
    };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    const int64_t n = a.size();
    std::vector<T> v(n);
    const T* pa = a.data().data();
    const T* pb = b.data().data();
#pragma omp parallel for schedule(static) if (n > 1 << 16)
    for (int64_t i = 0; i < n; ++i) v[i] = pa[i] - pb[i];
    auto node = detail::make_node<T>(a.shape(), std::move(v), {a.node(), b.node()});
    auto an = a.node(), bn = b.node();
    node->backward_op = [an, bn](Node<T>& self) {
        const int64_t n = self.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) bn->grad[i] -= self.grad[i];
        }
    };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    const int64_t n = a.size();
    std::vector<T> v(n);
    const T* pa = a.data().data();
    const T* pb = b.data().data();
#pragma omp parallel for schedule(static) if (n > 1 << 16)
    for (int64_t i = 0; i < n; ++i) v[i] = pa[i] * pb[i];
    auto node = detail::make_node<T>(a.shape(), std::move(v), {a.node(), b.node()});
    auto an = a.node(), bn = b.node();
    node->backward_op = [an, bn](Node<T>& self) {
        const int64_t n = self.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i] * an->value[i];
        }
    };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double s) {
    const int64_t n = x.size();
    std::vector<T> v(n);
    const T* px = x.data().data();
    for (int64_t i = 0; i < n; ++i) v[i] = T(px[i] * s);
    auto node = detail::make_node<T>(x.shape(), std::move(v), {x.node()});
    auto xn = x.node();
    node->backward_op = [xn, s](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const int64_t n = self.size();
        for (int64_t i = 0; i < n; ++i) xn->grad[i] += T(self.grad[i] * s);
    };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    const int64_t n = x.size();
    T acc = 0;
    for (const T v : x.data()) acc += v;
    auto node = detail::make_node<T>({1}, {acc}, {x.node()});
    auto xn = x.node();
    node->backward_op = [xn, n](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const T g = self.grad[0];
        for (int64_t i = 0; i < n; ++i) xn->grad[i] += g;
    };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    const int64_t n = x.size();
    T acc = 0;
    for (const T v : x.data()) acc += v;
    auto node = detail::make_node<T>({1}, {T(acc / T(n))}, {x.node()});
    auto xn = x.node();
    node->backward_op = [xn, n](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const T g = self.grad[0] / T(n);
        for (int64_t i = 0; i < n; ++i) xn->grad[i] += g;
    };
    return Tensor<T>(node);
}

// Mean squared error over all elements, fused into one node.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mse");
    const int64_t n = a.size();
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    double acc = 0;
#pragma omp parallel for schedule(static) reduction(+ : acc) if (n > 1 << 16)
    for (int64_t i = 0; i < n; ++i) {
        const double d = double(pa[i]) - double(pb[i]);
        acc += d * d;
    }
    auto node = detail::make_node<T>({1}, {T(acc / double(n))}, {a.node(), b.node()});
    auto an = a.node(), bn = b.node();
    node->backward_op = [an, bn, n](Node<T>& self) {
        const T g = T(2) * self.grad[0] / T(n);
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += g * (an->value[i] - bn->value[i]);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) bn->grad[i] -= g * (an->value[i] - bn->value[i]);
        }
    };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope) {
    if (slope < 0.0 || slope >= 1.0) throw ParamError("leaky_relu slope must be in [0,1)");
    const int64_t n = x.size();
    std::vector<T> v(n);
    const T* px = x.data().data();
    const T s = T(slope);
#pragma omp parallel for schedule(static) if (n > 1 << 16)
    for (int64_t i = 0; i < n; ++i) v[i] = px[i] >= T(0) ? px[i] : s * px[i];
    auto node = detail::make_node<T>(x.shape(), std::move(v), {x.node()});
    auto xn = x.node();
    node->backward_op = [xn, s](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const int64_t n = self.size();
        for (int64_t i = 0; i < n; ++i)
            xn->grad[i] += xn->value[i] >= T(0) ? self.grad[i] : s * self.grad[i];
    };
    return Tensor<T>(node);
}

// x: [N,Cin,D,H,W], w: [Cout,Cin,kd,kh,kw], b: [Cout] or undefined tensor.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride,
                 int64_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 5) throw ShapeError("conv3d: input rank must be 5, axis count is " +
                                         std::to_string(xs.size()));
    if (ws.size() != 5) throw ShapeError("conv3d: weight rank must be 5");
    if (ws[1] != xs[1])
        throw ShapeError("conv3d: channel axis 1 mismatch, input " + std::to_string(xs[1]) +
                         " vs weight " + std::to_string(ws[1]));
    if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != ws[0]))
        throw ShapeError("conv3d: bias must be [Cout]");
    const auto dims = kernels::conv3d_dims(xs[0], xs[1], xs[2], xs[3], xs[4], ws[0], ws[2], ws[3],
                                           ws[4], stride, pad);
    std::vector<T> out(dims.n * dims.cout * dims.od * dims.oh * dims.ow);
    kernels::conv3d_forward(x.data().data(), w.data().data(),
                            b.defined() ? b.data().data() : nullptr, out.data(), dims);
    std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
    if (b.defined()) parents.push_back(b.node());
    auto node = detail::make_node<T>({dims.n, dims.cout, dims.od, dims.oh, dims.ow},
                                     std::move(out), std::move(parents));
    auto xn = x.node(), wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    node->backward_op = [xn, wn, bn, dims](Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            kernels::conv3d_grad_input(self.grad.data(), wn->value.data(), xn->grad.data(), dims);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            kernels::conv3d_grad_weight(xn->value.data(), self.grad.data(), wn->grad.data(), dims);
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            kernels::conv3d_grad_bias(self.grad.data(), bn->grad.data(), dims);
        }
    };
    return Tensor<T>(node);
}

// Adjoint of conv3d. x: [N,Ca,D,H,W], w: [Ca,Cb,kd,kh,kw] -> [N,Cb,D',H',W']
// with D' = (D-1)*stride - 2*pad + kd.
template <typename T>
Tensor<T> conv_transpose3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int64_t stride, int64_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 5) throw ShapeError("conv_transpose3d: input rank must be 5");
    if (ws.size() != 5) throw ShapeError("conv_transpose3d: weight rank must be 5");
    if (ws[0] != xs[1])
        throw ShapeError("conv_transpose3d: channel axis 1 mismatch, input " +
                         std::to_string(xs[1]) + " vs weight " + std::to_string(ws[0]));
    if (stride < 1) throw ParamError("conv_transpose3d stride must be >= 1");
    const int64_t od = (xs[2] - 1) * stride - 2 * pad + ws[2];
    const int64_t oh = (xs[3] - 1) * stride - 2 * pad + ws[3];
    const int64_t ow = (xs[4] - 1) * stride - 2 * pad + ws[4];
    if (od <= 0 || oh <= 0 || ow <= 0)
        throw ShapeError("conv_transpose3d: non-positive output extent");
    if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != ws[1]))
        throw ShapeError("conv_transpose3d: bias must be [Cout]");
    // Viewed as the paired conv: input role = our output, output role = our input.
    const auto dims = kernels::conv3d_dims(xs[0], ws[1], od, oh, ow, ws[0], ws[2], ws[3], ws[4],
                                           stride, pad);
    std::vector<T> out(xs[0] * ws[1] * od * oh * ow, T(0));
    kernels::conv3d_grad_input(x.data().data(), w.data().data(), out.data(), dims);
    if (b.defined()) {
        const int64_t slab = od * oh * ow;
        for (int64_t nn = 0; nn < xs[0]; ++nn)
            for (int64_t cb = 0; cb < ws[1]; ++cb) {
                T* p = out.data() + (nn * ws[1] + cb) * slab;
                const T bv = b.data()[cb];
                for (int64_t i = 0; i < slab; ++i) p[i] += bv;
            }
    }
    std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
    if (b.defined()) parents.push_back(b.node());
    auto node = detail::make_node<T>({xs[0], ws[1], od, oh, ow}, std::move(out),
                                     std::move(parents));
    auto xn = x.node(), wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    node->backward_op = [xn, wn, bn, dims](Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            // d/dx of A^T x is A applied to the output grad; accumulate.
            kernels::conv3d_forward(self.grad.data(), wn->value.data(),
                                    static_cast<const T*>(nullptr), xn->grad.data(), dims, true);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            kernels::conv3d_grad_weight(self.grad.data(), xn->value.data(), wn->grad.data(), dims);
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            const int64_t slab = self.shape[2] * self.shape[3] * self.shape[4];
            const int64_t cb_count = self.shape[1];
            for (int64_t nn = 0; nn < self.shape[0]; ++nn)
                for (int64_t cb = 0; cb < cb_count; ++cb) {
                    const T* g = self.grad.data() + (nn * cb_count + cb) * slab;
                    T acc = 0;
                    for (int64_t i = 0; i < slab; ++i) acc += g[i];
                    bn->grad[cb] += acc;
                }
        }
    };
    return Tensor<T>(node);
}

// Per-(sample, channel) normalization to zero mean, unit variance, then affine.
template <typename T>
Tensor<T> instance_norm3d(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                          double eps) {
    if (eps <= 0.0) throw ParamError("instance_norm3d eps must be > 0");
    const auto& xs = x.shape();
    if (xs.size() != 5) throw ShapeError("instance_norm3d: input rank must be 5");
    const int64_t N = xs[0], C = xs[1], S = xs[2] * xs[3] * xs[4];
    if (S <= 1) throw ShapeError("instance_norm3d: spatial volume must exceed 1 voxel");
    if (gain.size() != C || bias.size() != C)
        throw ShapeError("instance_norm3d: gain/bias must be [C]");
    std::vector<T> out(N * C * S);
    std::vector<T> mean_buf(N * C), invstd_buf(N * C);
    const T* px = x.data().data();
    const T* pg = gain.data().data();
    const T* pb = bias.data().data();
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < N * C; ++t) {
        const T* row = px + t * S;
        double m = 0;
        for (int64_t i = 0; i < S; ++i) m += row[i];
        m /= double(S);
        double var = 0;
        for (int64_t i = 0; i < S; ++i) {
            const double d = double(row[i]) - m;
            var += d * d;
        }
        var /= double(S);
        const double invstd = 1.0 / std::sqrt(var + eps);
        mean_buf[t] = T(m);
        invstd_buf[t] = T(invstd);
        const T g = pg[t % C], b = pb[t % C];
        T* orow = out.data() + t * S;
        for (int64_t i = 0; i < S; ++i) orow[i] = T((double(row[i]) - m) * invstd) * g + b;
    }
    auto node = detail::make_node<T>(xs, std::move(out), {x.node(), gain.node(), bias.node()});
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    node->backward_op = [xn, gn, bn, mean_buf, invstd_buf, N, C, S](Node<T>& self) {
        const bool need_x = xn->requires_grad;
        const bool need_g = gn->requires_grad;
        const bool need_b = bn->requires_grad;
        if (need_x) xn->ensure_grad();
        if (need_g) gn->ensure_grad();
        if (need_b) bn->ensure_grad();
        for (int64_t t = 0; t < N * C; ++t) {
            const int64_t c = t % C;
            const T* xrow = xn->value.data() + t * S;
            const T* dy = self.grad.data() + t * S;
            const T m = mean_buf[t], is = invstd_buf[t];
            const T g = gn->value[c];
            double sum_dy = 0, sum_dy_xhat = 0, sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (int64_t i = 0; i < S; ++i) {
                const double xhat = double(xrow[i] - m) * double(is);
                sum_dy += dy[i];
                sum_dy_xhat += double(dy[i]) * xhat;
                const double dxhat = double(dy[i]) * double(g);
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
            }
            if (need_g) gn->grad[c] += T(sum_dy_xhat);
            if (need_b) bn->grad[c] += T(sum_dy);
            if (need_x) {
                T* dx = xn->grad.data() + t * S;
                const double inv_s = 1.0 / double(S);
                for (int64_t i = 0; i < S; ++i) {
                    const double xhat = double(xrow[i] - m) * double(is);
                    const double dxhat = double(dy[i]) * double(g);
                    dx[i] += T(double(is) * (dxhat - sum_dxhat * inv_s - xhat * sum_dxhat_xhat * inv_s));
                }
            }
        }
    };
    return Tensor<T>(node);
}

// Mean cross entropy with softmax over the class axis (axis 1 for rank >= 2,
// axis 0 for rank 1). Labels run sample-major then spatial.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
    const auto& ls = logits.shape();
    int64_t outer = 1, K = 0, inner = 1;
    if (ls.size() == 1) {
        K = ls[0];
    } else {
        outer = ls[0];
        K = ls[1];
        for (size_t i = 2; i < ls.size(); ++i) inner *= ls[i];
    }
    const int64_t P = outer * inner;
    if (int64_t(labels.size()) != P)
        throw ShapeError("softmax_cross_entropy: expected " + std::to_string(P) + " labels, got " +
                         std::to_string(labels.size()));
    for (int64_t y : labels)
        if (y < 0 || y >= K)
            throw ParamError("softmax_cross_entropy: label " + std::to_string(y) +
                             " outside [0," + std::to_string(K) + ")");
    const T* pl = logits.data().data();
    double loss = 0;
#pragma omp parallel for schedule(static) reduction(+ : loss) if (P > 4096)
    for (int64_t p = 0; p < P; ++p) {
        const int64_t n = p / inner, s = p % inner;
        const T* base = pl + (n * K) * inner + s;
        double mx = -1e300;
        for (int64_t k = 0; k < K; ++k) mx = std::max(mx, double(base[k * inner]));
        double se = 0;
        for (int64_t k = 0; k < K; ++k) se += std::exp(double(base[k * inner]) - mx);
        const double lse = mx + std::log(se);
        loss += lse - double(base[labels[p] * inner]);
    }
    auto node = detail::make_node<T>({1}, {T(loss / double(P))}, {logits.node()});
    auto ln = logits.node();
    node->backward_op = [ln, labels, outer, K, inner](Node<T>& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const int64_t P = outer * inner;
        const T g = self.grad[0] / T(P);
        for (int64_t p = 0; p < P; ++p) {
            const int64_t n = p / inner, s = p % inner;
            const T* base = ln->value.data() + (n * K) * inner + s;
            T* gbase = ln->grad.data() + (n * K) * inner + s;
            double mx = -1e300;
            for (int64_t k = 0; k < K; ++k) mx = std::max(mx, double(base[k * inner]));
            double se = 0;
            for (int64_t k = 0; k < K; ++k) se += std::exp(double(base[k * inner]) - mx);
            for (int64_t k = 0; k < K; ++k) {
                const double soft = std::exp(double(base[k * inner]) - mx) / se;
                gbase[k * inner] += g * T(soft - (k == labels[p] ? 1.0 : 0.0));
            }
        }
    };
    return Tensor<T>(node);
}

// Mean binary cross entropy against a constant target, on raw logits.
template <typename T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, double target) {
    const int64_t n = logits.size();
    const T* pl = logits.data().data();
    double loss = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double x = pl[i];
        const double sp = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        loss += sp - target * x;
    }
    auto node = detail::make_node<T>({1}, {T(loss / double(n))}, {logits.node()});
    auto ln = logits.node();
    node->backward_op = [ln, target, n](Node<T>& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const T g = self.grad[0] / T(n);
        for (int64_t i = 0; i < n; ++i) {
            const double x = ln->value[i];
            const double sig = 1.0 / (1.0 + std::exp(-x));
            ln->grad[i] += g * T(sig - target);
        }
    };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != 5 || sb.size() != 5) throw ShapeError("concat_channels: rank must be 5");
    for (size_t i : {size_t(0), size_t(2), size_t(3), size_t(4)})
        if (sa[i] != sb[i])
            throw ShapeError("concat_channels: axis " + std::to_string(i) + " mismatch");
    const int64_t N = sa[0], Ca = sa[1], Cb = sb[1], S = sa[2] * sa[3] * sa[4];
    std::vector<T> out(N * (Ca + Cb) * S);
    for (int64_t nn = 0; nn < N; ++nn) {
        std::copy(a.data().begin() + nn * Ca * S, a.data().begin() + (nn + 1) * Ca * S,
                  out.begin() + nn * (Ca + Cb) * S);
        std::copy(b.data().begin() + nn * Cb * S, b.data().begin() + (nn + 1) * Cb * S,
                  out.begin() + nn * (Ca + Cb) * S + Ca * S);
    }
    auto node = detail::make_node<T>({N, Ca + Cb, sa[2], sa[3], sa[4]}, std::move(out),
                                     {a.node(), b.node()});
    auto an = a.node(), bn = b.node();
    node->backward_op = [an, bn, N, Ca, Cb, S](Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t nn = 0; nn < N; ++nn)
                for (int64_t i = 0; i < Ca * S; ++i)
                    an->grad[nn * Ca * S + i] += self.grad[nn * (Ca + Cb) * S + i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t nn = 0; nn < N; ++nn)
                for (int64_t i = 0; i < Cb * S; ++i)
                    bn->grad[nn * Cb * S + i] += self.grad[nn * (Ca + Cb) * S + Ca * S + i];
        }
    };
    return Tensor<T>(node);
}

// out[n,:,v] = codes[indices[n*S+v], :]; differentiable w.r.t. the code table.
template <typename T>
Tensor<T> codebook_lookup(const Tensor<T>& codes, const std::vector<int32_t>& indices,
                          const std::vector<int64_t>& spatial, int64_t batch) {
    const auto& cs = codes.shape();
    if (cs.size() != 2) throw ShapeError("codebook_lookup: codes must be [K,c]");
    const int64_t K = cs[0], C = cs[1];
    int64_t S = 1;
    for (int64_t s : spatial) S *= s;
    if (int64_t(indices.size()) != batch * S)
        throw ShapeError("codebook_lookup: index count mismatch");
    for (int32_t idx : indices)
        if (idx < 0 || idx >= K) throw ParamError("codebook_lookup: index out of range");
    std::vector<T> out(batch * C * S);
    for (int64_t nn = 0; nn < batch; ++nn)
        for (int64_t v = 0; v < S; ++v) {
            const T* row = codes.data().data() + int64_t(indices[nn * S + v]) * C;
            for (int64_t ch = 0; ch < C; ++ch) out[(nn * C + ch) * S + v] = row[ch];
        }
    std::vector<int64_t> shape{batch, C};
    shape.insert(shape.end(), spatial.begin(), spatial.end());
    auto node = detail::make_node<T>(std::move(shape), std::move(out), {codes.node()});
    auto cn = codes.node();
    node->backward_op = [cn, indices, C, S, batch](Node<T>& self) {
        if (!cn->requires_grad) return;
        cn->ensure_grad();
        for (int64_t nn = 0; nn < batch; ++nn)
            for (int64_t v = 0; v < S; ++v) {
                T* row = cn->grad.data() + int64_t(indices[nn * S + v]) * C;
                for (int64_t ch = 0; ch < C; ++ch) row[ch] += self.grad[(nn * C + ch) * S + v];
            }
    };
    return Tensor<T>(node);
}

// Forward takes the replacement values; backward copies the gradient to src
// unchanged (straight-through).
template <typename T>
Tensor<T> straight_through(const Tensor<T>& src, std::vector<T> values) {
    if (int64_t(values.size()) != src.size())
        throw ShapeError("straight_through: replacement size mismatch");
    auto node = detail::make_node<T>(src.shape(), std::move(values), {src.node()});
    auto sn = src.node();
    node->backward_op = [sn](Node<T>& self) {
        if (!sn->requires_grad) return;
        sn->ensure_grad();
        const int64_t n = self.size();
        for (int64_t i = 0; i < n; ++i) sn->grad[i] += self.grad[i];
    };
    return Tensor<T>(node);
}

// Value copy cut loose from the graph (stop-gradient).
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
    return Tensor<T>::from_data(x.shape(), x.data());
}

// Same data under a new shape; gradient passes through one-to-one.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const std::vector<int64_t>& shape) {
    if (Tensor<T>::count(shape) != x.size())
        throw ShapeError("reshape: element count mismatch");
    auto node = detail::make_node<T>(shape, x.data(), {x.node()});
    auto xn = x.node();
    node->backward_op = [xn](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const int64_t n = self.size();
        for (int64_t i = 0; i < n; ++i) xn->grad[i] += self.grad[i];
    };
    return Tensor<T>(node);
}

// Extracts the hyperplane at `index` along `axis`, keeping that axis with
// extent 1. Backward scatters the gradient back into the source plane.
template <typename T>
Tensor<T> plane_slice(const Tensor<T>& x, size_t axis, int64_t index) {
    const auto& s = x.shape();
    if (axis >= s.size()) throw ShapeError("plane_slice: axis out of range");
    if (index < 0 || index >= s[axis]) throw ShapeError("plane_slice: index out of range");
    int64_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const int64_t extent = s[axis];
    std::vector<T> v(outer * inner);
    const T* px = x.data().data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy_n(px + (o * extent + index) * inner, inner, v.data() + o * inner);
    std::vector<int64_t> out_shape = s;
    out_shape[axis] = 1;
    auto node = detail::make_node<T>(std::move(out_shape), std::move(v), {x.node()});
    auto xn = x.node();
    node->backward_op = [xn, outer, inner, extent, index](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
            const T* g = self.grad.data() + o * inner;
            T* dst = xn->grad.data() + (o * extent + index) * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
        }
    };
    return Tensor<T>(node);
}

}  // namespace cbct::ad
