#pragma once

#include <optional>
#include <string>

#include "msggan/autograd/ops.hpp"
#include "msggan/core/rng.hpp"

namespace msggan {

// ---------------------------------------------------------------------------
// Self-attention. Four 1x1 projections f,g,h (C -> C/k) and v (C/k -> C)
// plus a scalar gate gamma initialized at zero, so a freshly built attention
// layer is the identity map.
// ---------------------------------------------------------------------------

template <typename T>
struct AttentionParams {
    Variable<T> w_f, w_g, w_h;  // [Cr, C]
    Variable<T> w_v;            // [C, Cr]
    Variable<T> gamma;          // [1]
    std::size_t channels = 0;
    std::size_t k = 8;
    std::size_t reduced = 0;
};

// Channel reduction: max(1, floor(C / k)) so k = 8 stays usable at
// low-channel blocks.
inline std::size_t attention_reduced_channels(std::size_t channels, std::size_t k) {
    if (k == 0) throw ConfigError("attention: k must be positive");
    return std::max<std::size_t>(1, channels / k);
}

template <typename T>
AttentionParams<T> make_attention_params(std::size_t channels, std::size_t k, Rng& rng) {
    AttentionParams<T> p;
    p.channels = channels;
    p.k = k;
    p.reduced = attention_reduced_channels(channels, k);
    auto init = [&rng](std::size_t rows, std::size_t cols) {
        Tensor<T> w({rows, cols});
        const T std = std::sqrt(T{1} / static_cast<T>(cols));
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal()) * std;
        return Variable<T>::leaf(std::move(w));
    };
    p.w_f = init(p.reduced, channels);
    p.w_g = init(p.reduced, channels);
    p.w_h = init(p.reduced, channels);
    p.w_v = init(channels, p.reduced);
    p.gamma = Variable<T>::leaf(Tensor<T>::zeros({1}));
    return p;
}

namespace detail {

// Applies a channel projection W [Co, Ci] to x viewed as [B, Ci, N],
// returning [B, Co, N]. This is exactly a 1x1 convolution.
template <typename T>
Variable<T> project_channels(const Variable<T>& x_bcn, const Variable<T>& w) {
    return matmul_brhs(w, x_bcn);
}

}  // namespace detail

// Attention map A [B, N, N] with A(i, j) = beta_{j,i}: scores
// s_ij = f(x_i)^T g(x_j), softmax over i for each column j, so every column
// of A is a distribution over source locations.
template <typename T>
Variable<T> attention_weights(const Variable<T>& x, const AttentionParams<T>& p) {
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t N = H * W;
    auto xs = reshape(x, {B, C, N});
    auto f = detail::project_channels(xs, p.w_f);  // [B, Cr, N]
    auto g = detail::project_channels(xs, p.w_g);
    auto scores = bmm(permute(f, {0, 2, 1}), g);   // [B, N, N], s(i, j)
    return softmax(scores, 1);
}

template <typename T>
Variable<T> self_attention_forward(const Variable<T>& x, const AttentionParams<T>& p) {
    if (x.shape().size() != 4) throw ConfigError("self_attention_forward: expected [B,C,H,W]");
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (C != p.channels)
        throw ConfigError("self_attention_forward: input has " + std::to_string(C) +
                          " channels, params built for " + std::to_string(p.channels));
    require_finite(x.value(), "self_attention_forward input");
    const std::size_t N = H * W;
    auto xs = reshape(x, {B, C, N});
    auto attn = attention_weights(x, p);                     // [B, N, N]
    auto h = detail::project_channels(xs, p.w_h);            // [B, Cr, N]
    auto o_red = bmm(h, attn);                               // (h A)_{c,j} = sum_i beta_{j,i} h(x_i)
    auto o = detail::project_channels(o_red, p.w_v);         // [B, C, N]
    auto y = add(xs, mul(reshape(p.gamma, {1, 1, 1}), o));
    return reshape(y, {B, C, H, W});
}

// ---------------------------------------------------------------------------
// PixNorm: divide each spatial location's channel vector by its RMS.
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> pixel_norm(const Variable<T>& x, T eps = T{1e-8}) {
    if (eps <= T{0}) throw ConfigError("pixel_norm: eps must be positive");
    require_finite(x.value(), "pixel_norm input");
    const Shape& s = x.shape();
    auto ms = mean_dims(square(x), {s[0], 1, s[2], s[3]});
    return mul(x, reciprocal(sqrt_v(scalar_add(ms, eps))));
}

// ---------------------------------------------------------------------------
// Minibatch stddev: append one channel holding the mean over (c,h,w) of the
// per-position population standard deviation across the batch.
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> minibatch_stddev(const Variable<T>& x, T eps = T{1e-8}) {
    require_finite(x.value(), "minibatch_stddev input");
    const Shape& s = x.shape();
    const std::size_t B = s[0];
    auto mu = mean_dims(x, {1, s[1], s[2], s[3]});
    auto var = mean_dims(square(sub(x, mu)), {1, s[1], s[2], s[3]});
    auto sd = sqrt_v(scalar_add(var, eps));
    auto stat = reshape(mean_all(sd), {1, 1, 1, 1});
    auto channel = broadcast_to(stat, {B, 1, s[2], s[3]});
    return concat<T>({x, channel}, 1);
}

// ---------------------------------------------------------------------------
// Spectral normalization by power iteration. The left singular vector
// estimate u persists across steps; sigma is computed from u,v held constant
// so the gradient flows through the weight only.
// ---------------------------------------------------------------------------

template <typename T>
struct SpectralNormState {
    Tensor<T> u;  // [out], unit length
    int n_power_iterations = 1;
};

template <typename T>
SpectralNormState<T> make_spectral_norm_state(std::size_t out_dim, Rng& rng,
                                              int n_power_iterations = 1) {
    SpectralNormState<T> s;
    s.n_power_iterations = n_power_iterations;
    s.u = Tensor<T>({out_dim});
    T norm = T{0};
    for (std::size_t i = 0; i < out_dim; ++i) {
        s.u[i] = static_cast<T>(rng.normal());
        norm += s.u[i] * s.u[i];
    }
    norm = std::sqrt(norm);
    if (norm < T{1e-12}) {
        s.u.fill(T{0});
        s.u[0] = T{1};
    } else {
        for (std::size_t i = 0; i < out_dim; ++i) s.u[i] /= norm;
    }
    return s;
}

// w must be 2-D [out, in]; returns w / sigma. update_state runs
// n_power_iterations and stores the new u (training mode); otherwise the
// stored u is used read-only (evaluation mode).
template <typename T>
Variable<T> spectral_normalize(const Variable<T>& w, SpectralNormState<T>& state,
                               bool update_state = true) {
    if (w.shape().size() != 2) throw ConfigError("spectral_normalize: expected 2-D weight");
    const std::size_t out = w.shape()[0], in = w.shape()[1];
    if (state.u.numel() != out) throw ConfigError("spectral_normalize: state size mismatch");

    using Mat = detail::MatRM<T>;
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    Eigen::Map<const Mat> W(w.value().data(), out, in);
    Eigen::Map<Vec> u_state(state.u.data(), out);

    Vec u = u_state;
    Vec v(in);
    const int iters = update_state ? std::max(state.n_power_iterations, 1) : 1;
    for (int it = 0; it < iters; ++it) {
        v = W.transpose() * u;
        T vn = v.norm();
        if (vn < T{1e-12}) throw NumericError("spectral_normalize: zero matrix");
        v /= vn;
        u = W * v;
        T un = u.norm();
        if (un < T{1e-12}) throw NumericError("spectral_normalize: zero matrix");
        u /= un;
    }
    if (update_state) u_state = u;

    Tensor<T> ut({1, out});
    std::memcpy(ut.data(), u.data(), out * sizeof(T));
    Tensor<T> vt({in, 1});
    std::memcpy(vt.data(), v.data(), in * sizeof(T));
    auto sigma = matmul(matmul(Variable<T>::constant(ut), w), Variable<T>::constant(vt));
    if (std::abs(sigma.value()[0]) < T{1e-12})
        throw NumericError("spectral_normalize: singular value estimate underflow");
    return mul(w, reciprocal(sigma));
}

// ---------------------------------------------------------------------------
// Conv / dense wrappers shared by the generator and discriminator.
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> init_weight(Shape shape, std::size_t fan_in, Rng& rng, bool equalized) {
    Tensor<T> w(std::move(shape));
    const T std = equalized ? T{1} : std::sqrt(T{2} / static_cast<T>(fan_in));
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal()) * std;
    return Variable<T>::leaf(std::move(w));
}

template <typename T>
struct Conv2dLayer {
    Variable<T> weight;  // [OC, IC, k, k]
    Variable<T> bias;    // [OC]
    std::size_t stride = 1, pad = 1;
    bool equalized = false;
    std::optional<SpectralNormState<T>> sn;

    static Conv2dLayer make(std::size_t in_ch, std::size_t out_ch, std::size_t ksize,
                            std::size_t stride, std::size_t pad, Rng& rng, bool spectral,
                            bool equalized, Rng* sn_rng = nullptr) {
        Conv2dLayer l;
        const std::size_t fan_in = in_ch * ksize * ksize;
        l.weight = init_weight<T>({out_ch, in_ch, ksize, ksize}, fan_in, rng, equalized);
        l.bias = Variable<T>::leaf(Tensor<T>::zeros({out_ch}));
        l.stride = stride;
        l.pad = pad;
        l.equalized = equalized;
        if (spectral) l.sn = make_spectral_norm_state<T>(out_ch, sn_rng ? *sn_rng : rng);
        return l;
    }

    Variable<T> operator()(const Variable<T>& x, bool train) {
        Variable<T> w = weight;
        if (equalized) {
            const std::size_t fan_in = w.shape()[1] * w.shape()[2] * w.shape()[3];
            w = scalar_mul(w, std::sqrt(T{2} / static_cast<T>(fan_in)));
        }
        if (sn) {
            const Shape ws = w.shape();
            auto w2 = reshape(w, {ws[0], ws[1] * ws[2] * ws[3]});
            w = reshape(spectral_normalize(w2, *sn, train), ws);
        }
        return conv2d(x, w, bias, stride, pad);
    }
};

template <typename T>
struct DenseLayer {
    Variable<T> weight;  // [O, F]
    Variable<T> bias;    // [O]
    bool equalized = false;
    std::optional<SpectralNormState<T>> sn;

    static DenseLayer make(std::size_t in_f, std::size_t out_f, Rng& rng, bool spectral,
                           bool equalized, Rng* sn_rng = nullptr) {
        DenseLayer l;
        l.weight = init_weight<T>({out_f, in_f}, in_f, rng, equalized);
        l.bias = Variable<T>::leaf(Tensor<T>::zeros({out_f}));
        l.equalized = equalized;
        if (spectral) l.sn = make_spectral_norm_state<T>(out_f, sn_rng ? *sn_rng : rng);
        return l;
    }

    Variable<T> operator()(const Variable<T>& x, bool train) {
        Variable<T> w = weight;
        if (equalized) w = scalar_mul(w, std::sqrt(T{2} / static_cast<T>(w.shape()[1])));
        if (sn) w = spectral_normalize(w, *sn, train);
        return dense(x, w, bias);
    }
};

constexpr double kLeakySlope = 0.2;

template <typename T>
Variable<T> lrelu(const Variable<T>& x) {
    return leaky_relu(x, static_cast<T>(kLeakySlope));
}

}  // namespace msggan
