#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <deque>
#include <unordered_map>

#include "msggan/autograd/variable.hpp"

namespace msggan {

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T, typename F>
Tensor<T> map_unary(const Tensor<T>& x, F f) {
    Tensor<T> out(x.shape());
    const T* a = x.data();
    T* o = out.data();
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = f(a[i]);
    return out;
}

template <typename T, typename F>
Tensor<T> map_binary(const Tensor<T>& x, const Tensor<T>& y, F f) {
    if (!x.same_shape(y))
        throw ConfigError("elementwise op shape mismatch " + shape_str(x.shape()) + " vs " +
                          shape_str(y.shape()));
    Tensor<T> out(x.shape());
    const T* a = x.data();
    const T* b = y.data();
    T* o = out.data();
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = f(a[i], b[i]);
    return out;
}

inline std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

// Right-align `small` against rank r by prepending 1s.
inline Shape pad_shape(const Shape& small, std::size_t r) {
    Shape p(r, 1);
    std::copy(small.begin(), small.end(), p.begin() + (r - small.size()));
    return p;
}

template <typename T>
Tensor<T> matmul_k(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ConfigError("matmul shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    Eigen::Map<const MatRM<T>> A(a.data(), m, k), B(b.data(), k, n);
    Eigen::Map<MatRM<T>> C(out.data(), m, n);
    C.noalias() = A * B;
    return out;
}

// Shared left operand against a batch of right operands. One GEMM per
// sample, so per-sample results are bit-identical regardless of batch
// position or batch size (exact permutation equivariance downstream).
template <typename T>
Tensor<T> matmul_brhs_k(const Tensor<T>& a, const Tensor<T>& x) {
    if (a.rank() != 2 || x.rank() != 3 || a.dim(1) != x.dim(1))
        throw ConfigError("matmul_brhs shapes " + shape_str(a.shape()) + " x " +
                          shape_str(x.shape()));
    const std::size_t B = x.dim(0), m = a.dim(0), k = a.dim(1), n = x.dim(2);
    Tensor<T> out({B, m, n});
    Eigen::Map<const MatRM<T>> A(a.data(), m, k);
    for (std::size_t b = 0; b < B; ++b) {
        Eigen::Map<const MatRM<T>> X(x.data() + b * k * n, k, n);
        Eigen::Map<MatRM<T>> C(out.data() + b * m * n, m, n);
        C.noalias() = A * X;
    }
    return out;
}

template <typename T>
Tensor<T> bmm_k(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ConfigError("bmm shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    Tensor<T> out({bs, m, n});
    for (std::size_t i = 0; i < bs; ++i) {
        Eigen::Map<const MatRM<T>> A(a.data() + i * m * k, m, k), B(b.data() + i * k * n, k, n);
        Eigen::Map<MatRM<T>> C(out.data() + i * m * n, m, n);
        C.noalias() = A * B;
    }
    return out;
}

template <typename T>
Tensor<T> permute_k(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
    const Shape& xs = x.shape();
    const std::size_t r = xs.size();
    if (perm.size() != r) throw ConfigError("permute rank mismatch");
    Shape os(r);
    for (std::size_t i = 0; i < r; ++i) os[i] = xs[perm[i]];
    Tensor<T> out(os);
    const auto sx = strides_of(xs);
    std::vector<std::size_t> step(r);
    for (std::size_t i = 0; i < r; ++i) step[i] = sx[perm[i]];
    const T* xd = x.data();
    T* od = out.data();
    if (r >= 1 && perm[r - 1] == r - 1) {
        // innermost dim preserved: copy contiguous rows
        const std::size_t row = os[r - 1];
        const std::size_t outer = x.numel() / std::max<std::size_t>(row, 1);
        std::vector<std::size_t> coord(r - 1, 0);
        for (std::size_t o = 0; o < outer; ++o) {
            std::size_t off = 0;
            for (std::size_t i = 0; i + 1 < r; ++i) off += coord[i] * step[i];
            std::memcpy(od + o * row, xd + off, row * sizeof(T));
            for (std::size_t i = r - 1; i-- > 0;) {
                if (++coord[i] < os[i]) break;
                coord[i] = 0;
            }
        }
    } else {
        std::vector<std::size_t> coord(r, 0);
        for (std::size_t lin = 0; lin < out.numel(); ++lin) {
            std::size_t off = 0;
            for (std::size_t i = 0; i < r; ++i) off += coord[i] * step[i];
            od[lin] = xd[off];
            for (std::size_t i = r; i-- > 0;) {
                if (++coord[i] < os[i]) break;
                coord[i] = 0;
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> broadcast_k(const Tensor<T>& x, const Shape& target) {
    const std::size_t r = target.size();
    const Shape xp = pad_shape(x.shape(), r);
    for (std::size_t i = 0; i < r; ++i)
        if (xp[i] != target[i] && xp[i] != 1)
            throw ConfigError("broadcast " + shape_str(x.shape()) + " -> " + shape_str(target));
    Tensor<T> out(target);
    const auto sxp = strides_of(xp);
    const T* xd = x.data();
    T* od = out.data();
    std::vector<std::size_t> coord(r, 0);
    for (std::size_t lin = 0; lin < out.numel(); ++lin) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < r; ++i)
            if (xp[i] != 1) off += coord[i] * sxp[i];
        od[lin] = xd[off];
        for (std::size_t i = r; i-- > 0;) {
            if (++coord[i] < target[i]) break;
            coord[i] = 0;
        }
    }
    return out;
}

template <typename T>
Tensor<T> sum_to_k(const Tensor<T>& x, const Shape& target) {
    const std::size_t r = x.rank();
    if (target.size() > r) throw ConfigError("sum_to rank grows");
    const Shape tp = pad_shape(target, r);
    for (std::size_t i = 0; i < r; ++i)
        if (tp[i] != x.shape()[i] && tp[i] != 1)
            throw ConfigError("sum_to " + shape_str(x.shape()) + " -> " + shape_str(target));
    Tensor<T> out(target);
    out.fill(T{0});
    const auto stp = strides_of(tp);
    const T* xd = x.data();
    T* od = out.data();
    std::vector<std::size_t> coord(r, 0);
    for (std::size_t lin = 0; lin < x.numel(); ++lin) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < r; ++i)
            if (tp[i] != 1) off += coord[i] * stp[i];
        od[off] += xd[lin];
        for (std::size_t i = r; i-- > 0;) {
            if (++coord[i] < x.shape()[i]) break;
            coord[i] = 0;
        }
    }
    return out;
}

struct ConvGeom {
    std::size_t kh, kw, stride, pad;
    std::size_t out_h(std::size_t h) const { return (h + 2 * pad - kh) / stride + 1; }
    std::size_t out_w(std::size_t w) const { return (w + 2 * pad - kw) / stride + 1; }
};

template <typename T>
Tensor<T> im2col_k(const Tensor<T>& x, const ConvGeom& g) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OH = g.out_h(H), OW = g.out_w(W), L = OH * OW;
    Tensor<T> out({B, C * g.kh * g.kw, L});
    const T* xd = x.data();
    T* od = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const std::size_t row = ((c * g.kh + ky) * g.kw + kx);
                    T* orow = od + (b * C * g.kh * g.kw + row) * L;
                    const T* xim = xd + (b * C + c) * H * W;
                    for (std::size_t oy = 0; oy < OH; ++oy) {
                        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                        if (iy < 0 || iy >= static_cast<long>(H)) {
                            std::memset(orow + oy * OW, 0, OW * sizeof(T));
                            continue;
                        }
                        for (std::size_t ox = 0; ox < OW; ++ox) {
                            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                            orow[oy * OW + ox] =
                                (ix < 0 || ix >= static_cast<long>(W)) ? T{0} : xim[iy * W + ix];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> col2im_k(const Tensor<T>& cols, const Shape& xshape, const ConvGeom& g) {
    const std::size_t B = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
    const std::size_t OH = g.out_h(H), OW = g.out_w(W), L = OH * OW;
    Tensor<T> out(xshape);
    const T* cd = cols.data();
    T* od = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const std::size_t row = ((c * g.kh + ky) * g.kw + kx);
                    const T* crow = cd + (b * C * g.kh * g.kw + row) * L;
                    T* xim = od + (b * C + c) * H * W;
                    for (std::size_t oy = 0; oy < OH; ++oy) {
                        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t ox = 0; ox < OW; ++ox) {
                            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            xim[iy * W + ix] += crow[oy * OW + ox];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> avg_pool2_k(const Tensor<T>& x) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2) throw ConfigError("avg_pool2 needs even spatial dims");
    Tensor<T> out({B, C, H / 2, W / 2});
    const T* xd = x.data();
    T* od = out.data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* xi = xd + bc * H * W;
        T* oi = od + bc * (H / 2) * (W / 2);
        for (std::size_t y = 0; y < H / 2; ++y)
            for (std::size_t x2 = 0; x2 < W / 2; ++x2)
                oi[y * (W / 2) + x2] =
                    (xi[(2 * y) * W + 2 * x2] + xi[(2 * y) * W + 2 * x2 + 1] +
                     xi[(2 * y + 1) * W + 2 * x2] + xi[(2 * y + 1) * W + 2 * x2 + 1]) /
                    T{4};
    }
    return out;
}

template <typename T>
Tensor<T> upsample2_k(const Tensor<T>& x) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out({B, C, H * 2, W * 2});
    const T* xd = x.data();
    T* od = out.data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* xi = xd + bc * H * W;
        T* oi = od + bc * 4 * H * W;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x2 = 0; x2 < W; ++x2) {
                const T v = xi[y * W + x2];
                oi[(2 * y) * 2 * W + 2 * x2] = v;
                oi[(2 * y) * 2 * W + 2 * x2 + 1] = v;
                oi[(2 * y + 1) * 2 * W + 2 * x2] = v;
                oi[(2 * y + 1) * 2 * W + 2 * x2 + 1] = v;
            }
    }
    return out;
}

template <typename T>
Tensor<T> concat_k(const std::vector<Tensor<T>>& xs, std::size_t dim) {
    const Shape& s0 = xs.front().shape();
    Shape os = s0;
    std::size_t total = 0;
    for (const auto& x : xs) total += x.dim(dim);
    os[dim] = total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < dim; ++i) outer *= s0[i];
    for (std::size_t i = dim + 1; i < s0.size(); ++i) inner *= s0[i];
    Tensor<T> out(os);
    T* od = out.data();
    const std::size_t out_row = total * inner;
    std::size_t offset = 0;
    for (const auto& x : xs) {
        const std::size_t blk = x.dim(dim) * inner;
        const T* xd = x.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(od + o * out_row + offset, xd + o * blk, blk * sizeof(T));
        offset += blk;
    }
    return out;
}

template <typename T>
Tensor<T> slice_k(const Tensor<T>& x, std::size_t dim, std::size_t start, std::size_t len) {
    const Shape& xs = x.shape();
    Shape os = xs;
    os[dim] = len;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < dim; ++i) outer *= xs[i];
    for (std::size_t i = dim + 1; i < xs.size(); ++i) inner *= xs[i];
    Tensor<T> out(os);
    const T* xd = x.data();
    T* od = out.data();
    const std::size_t in_row = xs[dim] * inner, out_row = len * inner;
    for (std::size_t o = 0; o < outer; ++o)
        std::memcpy(od + o * out_row, xd + o * in_row + start * inner, out_row * sizeof(T));
    return out;
}

template <typename T>
Tensor<T> reduce_max_keepdim_k(const Tensor<T>& x, std::size_t dim) {
    Shape os = x.shape();
    os[dim] = 1;
    Tensor<T> out(os);
    const std::size_t r = x.rank();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < dim; ++i) outer *= x.shape()[i];
    for (std::size_t i = dim + 1; i < r; ++i) inner *= x.shape()[i];
    const std::size_t d = x.shape()[dim];
    const T* xd = x.data();
    T* od = out.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            T m = xd[o * d * inner + in];
            for (std::size_t j = 1; j < d; ++j)
                m = std::max(m, xd[(o * d + j) * inner + in]);
            od[o * inner + in] = m;
        }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Every backward is built from these (or from composites of
// these), so gradients of gradients work.
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> add(const Variable<T>& a, const Variable<T>& b);

template <typename T>
Variable<T> constant_like(const Variable<T>& v, T fill) {
    return Variable<T>::constant(Tensor<T>::full(v.shape(), fill));
}

template <typename T>
Variable<T> add_same(const Variable<T>& a, const Variable<T>& b) {
    auto value = detail::map_binary(a.value(), b.value(), [](T x, T y) { return x + y; });
    typename Node<T>::BackwardFn pass = [](const Variable<T>& g, const std::vector<Variable<T>>&) {
        return g;
    };
    return make_op<T>(std::move(value), {a, b}, {pass, pass});
}

template <typename T>
Variable<T> mul_same(const Variable<T>& a, const Variable<T>& b) {
    auto value = detail::map_binary(a.value(), b.value(), [](T x, T y) { return x * y; });
    return make_op<T>(
        std::move(value), {a, b},
        {[](const Variable<T>& g, const std::vector<Variable<T>>& in) { return mul_same(g, in[1]); },
         [](const Variable<T>& g, const std::vector<Variable<T>>& in) { return mul_same(g, in[0]); }});
}

template <typename T>
Variable<T> neg(const Variable<T>& a) {
    auto value = detail::map_unary(a.value(), [](T x) { return -x; });
    return make_op<T>(std::move(value), {a},
                      {[](const Variable<T>& g, const std::vector<Variable<T>>&) { return neg(g); }});
}

template <typename T>
Variable<T> scalar_mul(const Variable<T>& a, T c) {
    auto value = detail::map_unary(a.value(), [c](T x) { return x * c; });
    return make_op<T>(std::move(value), {a},
                      {[c](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return scalar_mul(g, c);
                      }});
}

template <typename T>
Variable<T> scalar_add(const Variable<T>& a, T c) {
    auto value = detail::map_unary(a.value(), [c](T x) { return x + c; });
    typename Node<T>::BackwardFn pass = [](const Variable<T>& g, const std::vector<Variable<T>>&) {
        return g;
    };
    return make_op<T>(std::move(value), {a}, {pass});
}

template <typename T>
Variable<T> matmul(const Variable<T>& a, const Variable<T>& b);

template <typename T>
Variable<T> permute(const Variable<T>& a, std::vector<std::size_t> perm) {
    auto value = detail::permute_k(a.value(), perm);
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return make_op<T>(std::move(value), {a},
                      {[inv](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return permute(g, inv);
                      }});
}

template <typename T>
Variable<T> matmul(const Variable<T>& a, const Variable<T>& b) {
    auto value = detail::matmul_k(a.value(), b.value());
    return make_op<T>(
        std::move(value), {a, b},
        {[](const Variable<T>& g, const std::vector<Variable<T>>& in) {
             return matmul(g, permute(in[1], {1, 0}));
         },
         [](const Variable<T>& g, const std::vector<Variable<T>>& in) {
             return matmul(permute(in[0], {1, 0}), g);
         }});
}

template <typename T>
Variable<T> bmm(const Variable<T>& a, const Variable<T>& b) {
    auto value = detail::bmm_k(a.value(), b.value());
    return make_op<T>(
        std::move(value), {a, b},
        {[](const Variable<T>& g, const std::vector<Variable<T>>& in) {
             return bmm(g, permute(in[1], {0, 2, 1}));
         },
         [](const Variable<T>& g, const std::vector<Variable<T>>& in) {
             return bmm(permute(in[0], {0, 2, 1}), g);
         }});
}

// a [M,K] shared across the batch, x [B,K,N] -> [B,M,N].
template <typename T>
Variable<T> matmul_brhs(const Variable<T>& a, const Variable<T>& x) {
    auto value = detail::matmul_brhs_k(a.value(), x.value());
    return make_op<T>(
        std::move(value), {a, x},
        {[](const Variable<T>& g, const std::vector<Variable<T>>& in) {
             const Shape& as = in[0].shape();
             auto per_sample = bmm(g, permute(in[1], {0, 2, 1}));  // [B,M,K]
             return reshape(sum_to(per_sample, {1, as[0], as[1]}), as);
         },
         [](const Variable<T>& g, const std::vector<Variable<T>>& in) {
             return matmul_brhs(permute(in[0], {1, 0}), g);
         }});
}

template <typename T>
Variable<T> reshape(const Variable<T>& a, Shape shape) {
    Shape orig = a.shape();
    auto value = a.value().reshape(std::move(shape));
    return make_op<T>(std::move(value), {a},
                      {[orig](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return reshape(g, orig);
                      }});
}

template <typename T>
Variable<T> broadcast_to(const Variable<T>& a, Shape target) {
    if (a.shape() == target) return a;
    auto value = detail::broadcast_k(a.value(), target);
    Shape orig = a.shape();
    return make_op<T>(std::move(value), {a},
                      {[orig](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return sum_to(g, orig);
                      }});
}

template <typename T>
Variable<T> sum_to(const Variable<T>& a, Shape target) {
    if (a.shape() == target) return a;
    auto value = detail::sum_to_k(a.value(), target);
    Shape orig = a.shape();
    return make_op<T>(std::move(value), {a},
                      {[orig](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return broadcast_to(g, orig);
                      }});
}

template <typename T>
Variable<T> im2col(const Variable<T>& x, detail::ConvGeom geom) {
    auto value = detail::im2col_k(x.value(), geom);
    Shape xshape = x.shape();
    return make_op<T>(std::move(value), {x},
                      {[xshape, geom](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return col2im(g, xshape, geom);
                      }});
}

template <typename T>
Variable<T> col2im(const Variable<T>& cols, Shape xshape, detail::ConvGeom geom) {
    auto value = detail::col2im_k(cols.value(), xshape, geom);
    return make_op<T>(std::move(value), {cols},
                      {[geom](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return im2col(g, geom);
                      }});
}

template <typename T>
Variable<T> exp_v(const Variable<T>& a) {
    auto value = detail::map_unary(a.value(), [](T x) { return std::exp(x); });
    return make_op<T>(std::move(value), {a},
                      {[](const Variable<T>& g, const std::vector<Variable<T>>& in) {
                          return mul_same(g, exp_v(in[0]));
                      }});
}

template <typename T>
Variable<T> log_v(const Variable<T>& a) {
    auto value = detail::map_unary(a.value(), [](T x) { return std::log(x); });
    return make_op<T>(std::move(value), {a},
                      {[](const Variable<T>& g, const std::vector<Variable<T>>& in) {
                          return mul_same(g, reciprocal(in[0]));
                      }});
}

template <typename T>
Variable<T> sqrt_v(const Variable<T>& a) {
    auto value = detail::map_unary(a.value(), [](T x) { return std::sqrt(x); });
    return make_op<T>(std::move(value), {a},
                      {[](const Variable<T>& g, const std::vector<Variable<T>>& in) {
                          return mul_same(g, scalar_mul(reciprocal(sqrt_v(in[0])), T{0.5}));
                      }});
}

template <typename T>
Variable<T> reciprocal(const Variable<T>& a) {
    auto value = detail::map_unary(a.value(), [](T x) { return T{1} / x; });
    return make_op<T>(std::move(value), {a},
                      {[](const Variable<T>& g, const std::vector<Variable<T>>& in) {
                          auto r = reciprocal(in[0]);
                          return neg(mul_same(g, mul_same(r, r)));
                      }});
}

template <typename T>
Variable<T> tanh_v(const Variable<T>& a) {
    auto value = detail::map_unary(a.value(), [](T x) { return std::tanh(x); });
    return make_op<T>(std::move(value), {a},
                      {[](const Variable<T>& g, const std::vector<Variable<T>>& in) {
                          auto t = tanh_v(in[0]);
                          return mul_same(g, scalar_add(neg(mul_same(t, t)), T{1}));
                      }});
}

// max(slope*x, x); slope 0 is plain relu. Subgradient at the kink is `slope`
// for x == 0 taken from the mask test x > 0, i.e. our pinned max(0,.)
// convention uses 0 there when slope is 0.
template <typename T>
Variable<T> leaky_relu(const Variable<T>& a, T slope) {
    auto value = detail::map_unary(a.value(), [slope](T x) { return x > T{0} ? x : slope * x; });
    Tensor<T> mask = detail::map_unary(a.value(), [slope](T x) { return x > T{0} ? T{1} : slope; });
    return make_op<T>(std::move(value), {a},
                      {[mask](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return mul_same(g, Variable<T>::constant(mask));
                      }});
}

template <typename T>
Variable<T> relu(const Variable<T>& a) {
    return leaky_relu(a, T{0});
}

template <typename T>
Variable<T> slice(const Variable<T>& a, std::size_t dim, std::size_t start, std::size_t len);

template <typename T>
Variable<T> concat(const std::vector<Variable<T>>& xs, std::size_t dim) {
    std::vector<Tensor<T>> vals;
    vals.reserve(xs.size());
    for (const auto& x : xs) vals.push_back(x.value());
    auto value = detail::concat_k(vals, dim);
    std::vector<typename Node<T>::BackwardFn> fns;
    std::size_t offset = 0;
    for (const auto& x : xs) {
        const std::size_t len = x.shape()[dim];
        fns.push_back([dim, offset, len](const Variable<T>& g, const std::vector<Variable<T>>&) {
            return slice(g, dim, offset, len);
        });
        offset += len;
    }
    return make_op<T>(std::move(value), xs, std::move(fns));
}

template <typename T>
Variable<T> slice(const Variable<T>& a, std::size_t dim, std::size_t start, std::size_t len) {
    auto value = detail::slice_k(a.value(), dim, start, len);
    Shape orig = a.shape();
    return make_op<T>(
        std::move(value), {a},
        {[dim, start, len, orig](const Variable<T>& g, const std::vector<Variable<T>>&) {
            std::vector<Variable<T>> parts;
            if (start > 0) {
                Shape s = orig;
                s[dim] = start;
                parts.push_back(Variable<T>::constant(Tensor<T>::zeros(s)));
            }
            parts.push_back(g);
            if (start + len < orig[dim]) {
                Shape s = orig;
                s[dim] = orig[dim] - start - len;
                parts.push_back(Variable<T>::constant(Tensor<T>::zeros(s)));
            }
            return concat(parts, dim);
        }});
}

template <typename T>
Variable<T> avg_pool2(const Variable<T>& a) {
    auto value = detail::avg_pool2_k(a.value());
    return make_op<T>(std::move(value), {a},
                      {[](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return scalar_mul(upsample2(g), T{0.25});
                      }});
}

template <typename T>
Variable<T> upsample2(const Variable<T>& a) {
    auto value = detail::upsample2_k(a.value());
    return make_op<T>(std::move(value), {a},
                      {[](const Variable<T>& g, const std::vector<Variable<T>>&) {
                          return scalar_mul(avg_pool2(g), T{4});
                      }});
}

// ---------------------------------------------------------------------------
// Composites.
// ---------------------------------------------------------------------------

template <typename T>
Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    const Shape ap = detail::pad_shape(a, r), bp = detail::pad_shape(b, r);
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        if (ap[i] != bp[i] && ap[i] != 1 && bp[i] != 1)
            throw ConfigError("broadcast mismatch " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(ap[i], bp[i]);
    }
    return out;
}

template <typename T>
Variable<T> add(const Variable<T>& a, const Variable<T>& b) {
    if (a.shape() == b.shape()) return add_same(a, b);
    Shape t = broadcast_shape<T>(a.shape(), b.shape());
    return add_same(broadcast_to(a, t), broadcast_to(b, t));
}

template <typename T>
Variable<T> mul(const Variable<T>& a, const Variable<T>& b) {
    if (a.shape() == b.shape()) return mul_same(a, b);
    Shape t = broadcast_shape<T>(a.shape(), b.shape());
    return mul_same(broadcast_to(a, t), broadcast_to(b, t));
}

template <typename T>
Variable<T> sub(const Variable<T>& a, const Variable<T>& b) {
    return add(a, neg(b));
}

template <typename T>
Variable<T> divide(const Variable<T>& a, const Variable<T>& b) {
    return mul(a, reciprocal(b));
}

template <typename T>
Variable<T> square(const Variable<T>& a) {
    return mul_same(a, a);
}

template <typename T>
Variable<T> sum_all(const Variable<T>& a) {
    return sum_to(a, Shape{1});
}

template <typename T>
Variable<T> mean_all(const Variable<T>& a) {
    return scalar_mul(sum_all(a), T{1} / static_cast<T>(a.numel()));
}

template <typename T>
Variable<T> mean_dims(const Variable<T>& a, Shape keepdim_target) {
    const std::size_t n = a.numel() / numel_of(keepdim_target);
    return scalar_mul(sum_to(a, std::move(keepdim_target)), T{1} / static_cast<T>(n));
}

template <typename T>
Variable<T> softmax(const Variable<T>& a, std::size_t dim) {
    auto shift = Variable<T>::constant(detail::reduce_max_keepdim_k(a.value(), dim));
    auto e = exp_v(sub(a, shift));
    Shape keep = a.shape();
    keep[dim] = 1;
    auto denom = sum_to(e, keep);
    return mul(e, reciprocal(denom));
}

// conv2d via im2col + one GEMM. x [B,C,H,W], w [OC,IC,kh,kw], bias [OC] or
// undefined for bias-free.
template <typename T>
Variable<T> conv2d(const Variable<T>& x, const Variable<T>& w, const Variable<T>& bias,
                   std::size_t stride, std::size_t pad) {
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t OC = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (w.shape()[1] != C)
        throw ConfigError("conv2d channels " + shape_str(x.shape()) + " vs kernel " +
                          shape_str(w.shape()));
    detail::ConvGeom g{kh, kw, stride, pad};
    const std::size_t OH = g.out_h(H), OW = g.out_w(W), L = OH * OW;
    auto cols = im2col(x, g);                      // [B, CKK, L]
    auto wm = reshape(w, {OC, C * kh * kw});
    auto y = reshape(matmul_brhs(wm, cols), {B, OC, OH, OW});
    if (bias.defined()) y = add(y, reshape(bias, {1, OC, 1, 1}));
    return y;
}

// x [B,F], w [O,F], bias [O] (optional).
template <typename T>
Variable<T> dense(const Variable<T>& x, const Variable<T>& w, const Variable<T>& bias) {
    const std::size_t B = x.shape()[0], F = x.shape()[1], O = w.shape()[0];
    auto y = reshape(matmul_brhs(w, reshape(x, {B, F, 1})), {B, O});
    if (bias.defined()) y = add(y, reshape(bias, {1, O}));
    return y;
}

// ---------------------------------------------------------------------------
// Engine.
// ---------------------------------------------------------------------------

// Vector-Jacobian products for every grad-requiring node reachable from
// `out`. Deterministic given the graph: FIFO over consumer counts.
template <typename T>
std::unordered_map<const Node<T>*, Variable<T>> vjp(const Variable<T>& out, Variable<T> seed) {
    std::unordered_map<const Node<T>*, Variable<T>> grads;
    if (!out.requires_grad()) return grads;
    if (!seed.defined()) seed = Variable<T>::constant(Tensor<T>::ones(out.shape()));

    std::unordered_map<const Node<T>*, int> consumers;
    std::vector<Node<T>*> stack{out.node_ptr()};
    std::unordered_map<const Node<T>*, bool> seen{{out.node_ptr(), true}};
    while (!stack.empty()) {
        Node<T>* n = stack.back();
        stack.pop_back();
        for (auto& e : n->edges) {
            Node<T>* p = e.parent.get();
            consumers[p] += 1;
            if (!seen[p]) {
                seen[p] = true;
                stack.push_back(p);
            }
        }
    }

    grads[out.node_ptr()] = std::move(seed);
    std::deque<Node<T>*> ready{out.node_ptr()};
    while (!ready.empty()) {
        Node<T>* n = ready.front();
        ready.pop_front();
        const Variable<T> g = grads[n];
        for (auto& e : n->edges) {
            Node<T>* p = e.parent.get();
            Variable<T> contrib = e.fn(g, n->inputs);
            auto it = grads.find(p);
            if (it == grads.end())
                grads.emplace(p, std::move(contrib));
            else
                it->second = add_same(it->second, contrib);
            if (--consumers[p] == 0) ready.push_back(p);
        }
    }
    return grads;
}

// Gradients of a scalar with respect to selected variables; graph-connected
// results, so they can be differentiated again. Inputs not reached get zeros.
template <typename T>
std::vector<Variable<T>> grad(const Variable<T>& out, const std::vector<Variable<T>>& inputs) {
    if (out.numel() != 1) throw ConfigError("grad: output must be scalar");
    auto grads = vjp(out, Variable<T>());
    std::vector<Variable<T>> result;
    result.reserve(inputs.size());
    for (const auto& in : inputs) {
        auto it = grads.find(in.node_ptr());
        if (it == grads.end())
            result.push_back(Variable<T>::constant(Tensor<T>::zeros(in.shape())));
        else
            result.push_back(it->second);
    }
    return result;
}

// Scalar backward: accumulate into the grad buffer of every reachable leaf.
template <typename T>
void backward(const Variable<T>& loss) {
    if (loss.numel() != 1) throw ConfigError("backward: loss must be scalar");
    auto grads = vjp(loss, Variable<T>());
    for (auto& [node_c, g] : grads) {
        Node<T>* node = const_cast<Node<T>*>(node_c);
        if (!node->edges.empty() || !node->requires_grad) continue;
        if (!node->grad.defined()) node->grad = Tensor<T>::zeros(node->value.shape());
        T* dst = node->grad.data();
        const T* src = g.value().data();
        for (std::size_t i = 0; i < node->grad.numel(); ++i) dst[i] += src[i];
    }
}

}  // namespace msggan
