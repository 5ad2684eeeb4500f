#pragma once

#include <cstdint>

#include "msggan/core/rng.hpp"
#include "msggan/nn/pyramid.hpp"

namespace msggan {

namespace detail {

template <typename T>
void require_scores(const Variable<T>& c, const char* who) {
    if (!c.defined() || c.numel() == 0)
        throw ConfigError(std::string(who) + ": empty score batch");
}

}  // namespace detail

// Relativistic average transforms: D~(x_r) = C(x_r) - E[C(x_g)] and
// D~(x_g) = C(x_g) - E[C(x_r)].

// L_D = E_r[max(0, 1 - D~(x_r))] + E_g[max(0, 1 + D~(x_g))]
template <typename T>
Variable<T> relativistic_hinge_d(const Variable<T>& c_real, const Variable<T>& c_fake) {
    detail::require_scores(c_real, "relativistic_hinge_d");
    detail::require_scores(c_fake, "relativistic_hinge_d");
    auto d_real = sub(c_real, mean_all(c_fake));
    auto d_fake = sub(c_fake, mean_all(c_real));
    return add_same(mean_all(relu(scalar_add(neg(d_real), T{1}))),
                    mean_all(relu(scalar_add(d_fake, T{1}))));
}

// L_G = E_g[max(0, 1 - D~(x_g))] + E_r[max(0, 1 + D~(x_r))]; by construction
// L_G(a, b) == L_D(b, a) term for term.
template <typename T>
Variable<T> relativistic_hinge_g(const Variable<T>& c_real, const Variable<T>& c_fake) {
    detail::require_scores(c_real, "relativistic_hinge_g");
    detail::require_scores(c_fake, "relativistic_hinge_g");
    auto d_fake = sub(c_fake, mean_all(c_real));
    auto d_real = sub(c_real, mean_all(c_fake));
    return add_same(mean_all(relu(scalar_add(neg(d_fake), T{1}))),
                    mean_all(relu(scalar_add(d_real, T{1}))));
}

template <typename T>
Variable<T> wgan_g(const Variable<T>& c_fake) {
    detail::require_scores(c_fake, "wgan_g");
    return neg(mean_all(c_fake));
}

// Critic loss: mean(c_fake) - mean(c_real) + lambda * penalty_term, where
// penalty_term comes from gradient_penalty below.
template <typename T>
Variable<T> wgan_gp_d(const Variable<T>& c_real, const Variable<T>& c_fake,
                      const Variable<T>& penalty_term, T lambda = T{10}) {
    detail::require_scores(c_real, "wgan_gp_d");
    detail::require_scores(c_fake, "wgan_gp_d");
    if (lambda < T{0}) throw ConfigError("wgan_gp_d: lambda must be >= 0");
    auto w = sub(mean_all(c_fake), mean_all(c_real));
    if (!penalty_term.defined() || lambda == T{0}) return reshape(w, {1});
    return add_same(reshape(w, {1}), scalar_mul(reshape(penalty_term, {1}), lambda));
}

// E[(||grad of the critic score at pyramid interpolates||_2 - 1)^2] with one
// shared uniform coefficient per sample across all levels. The result stays
// graph-connected to the critic parameters, so it can be differentiated again
// by the training step.
template <typename T, typename Critic>
Variable<T> gradient_penalty(Critic&& critic, const Pyramid<T>& real, const Pyramid<T>& fake,
                             std::uint64_t seed) {
    if (real.levels.size() != fake.levels.size() || real.levels.empty())
        throw ConfigError("gradient_penalty: pyramid level mismatch");
    const std::size_t B = real.batch();
    if (B == 0 || fake.batch() != B) throw ConfigError("gradient_penalty: batch mismatch");

    Rng rng(seed);
    std::vector<T> alpha(B);
    for (std::size_t b = 0; b < B; ++b) alpha[b] = static_cast<T>(rng.uniform());

    Pyramid<T> interp;
    std::vector<Variable<T>> leaves;
    for (std::size_t l = 0; l < real.levels.size(); ++l) {
        const Tensor<T>& r = real.levels[l].value();
        const Tensor<T>& f = fake.levels[l].value();
        if (!r.same_shape(f)) throw ConfigError("gradient_penalty: level shape mismatch");
        Tensor<T> mix(r.shape());
        const std::size_t per = r.numel() / B;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < per; ++i)
                mix[b * per + i] = alpha[b] * r[b * per + i] + (T{1} - alpha[b]) * f[b * per + i];
        auto leaf = Variable<T>::leaf(std::move(mix));
        leaves.push_back(leaf);
        interp.levels.push_back(leaf);
    }

    auto scores = critic(interp);
    auto grads = grad(sum_all(scores), leaves);

    Variable<T> sq_norm;  // [B, 1]
    for (std::size_t l = 0; l < grads.size(); ++l) {
        const std::size_t per = numel_of(grads[l].shape()) / B;
        auto flat = reshape(grads[l], {B, per});
        auto part = sum_to(square(flat), {B, 1});
        sq_norm = sq_norm.defined() ? add_same(sq_norm, part) : part;
    }
    auto norm = sqrt_v(scalar_add(sq_norm, T{1e-12}));
    return mean_all(square(scalar_add(norm, T{-1})));
}

}  // namespace msggan
