#include "msggan/nn/losses.hpp"
#include "support.hpp"

using namespace msggan;
using namespace testsupport;

namespace {

// Dyadic score batches keep all means and shifts exact in floating point.
Tensor<double> dyadic_scores(std::size_t n, Rng& rng) {
    Tensor<double> t({n});
    for (std::size_t i = 0; i < n; ++i)
        t[i] = static_cast<double>(static_cast<long>(rng.uniform_int(129)) - 64) / 4.0;
    return t;
}

}  // namespace

TEST_CASE("relativistic hinge: constant equal batches give exactly 2") {
    auto cr = Variable<double>::constant(Tensor<double>::full({8}, 3.0));
    auto cf = Variable<double>::constant(Tensor<double>::full({8}, 3.0));
    CHECK(relativistic_hinge_d(cr, cf).value()[0] == 2.0);
    CHECK(relativistic_hinge_g(cr, cf).value()[0] == 2.0);

    // different batch sizes are allowed
    auto cf2 = Variable<double>::constant(Tensor<double>::full({5}, 3.0));
    CHECK(relativistic_hinge_d(cr, cf2).value()[0] == 2.0);
}

TEST_CASE("relativistic hinge: saturation cases give exactly 0") {
    auto c3 = Variable<double>::constant(Tensor<double>::full({6}, 3.0));
    auto c1 = Variable<double>::constant(Tensor<double>::full({6}, 1.0));
    CHECK(relativistic_hinge_d(c3, c1).value()[0] == 0.0);  // D~(r)=2, D~(g)=-2
    CHECK(relativistic_hinge_g(c1, c3).value()[0] == 0.0);  // D~(g)=2, D~(r)=-2
}

TEST_CASE("relativistic hinge: shift invariance is exact on dyadic scores") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = dyadic_scores(16, rng);
        auto b = dyadic_scores(16, rng);
        Tensor<double> a_shift = a.clone(), b_shift = b.clone();
        const double delta = 2.75;
        for (std::size_t i = 0; i < 16; ++i) {
            a_shift[i] += delta;
            b_shift[i] += delta;
        }
        const double before =
            relativistic_hinge_d(Variable<double>::constant(a), Variable<double>::constant(b))
                .value()[0];
        const double after = relativistic_hinge_d(Variable<double>::constant(a_shift),
                                                  Variable<double>::constant(b_shift))
                                 .value()[0];
        CHECK(before == after);
    }
}

TEST_CASE("relativistic hinge: exchange identity L_G(a,b) == L_D(b,a) over 1000 batches") {
    Rng rng(32);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(12);
        const std::size_t m = 1 + rng.uniform_int(12);
        Tensor<double> a = random_tensor({n}, rng, 2.0);
        Tensor<double> b = random_tensor({m}, rng, 2.0);
        auto va = Variable<double>::constant(a);
        auto vb = Variable<double>::constant(b);
        CHECK(relativistic_hinge_g(va, vb).value()[0] ==
              relativistic_hinge_d(vb, va).value()[0]);
    }
}

TEST_CASE("relativistic hinge: non-negative for all inputs") {
    Rng rng(33);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = Variable<double>::constant(random_tensor({7}, rng, 5.0));
        auto b = Variable<double>::constant(random_tensor({9}, rng, 5.0));
        CHECK(relativistic_hinge_d(a, b).value()[0] >= 0.0);
        CHECK(relativistic_hinge_g(a, b).value()[0] >= 0.0);
    }
}

TEST_CASE("relativistic hinge: gradient matches finite differences away from kinks") {
    Rng rng(34);
    int done = 0;
    while (done < 5) {
        auto cr = Variable<double>::leaf(random_tensor({6}, rng, 2.0));
        auto cf = Variable<double>::leaf(random_tensor({6}, rng, 2.0));
        // resample configurations too close to a hinge kink
        double mr = 0, mf = 0;
        for (std::size_t i = 0; i < 6; ++i) {
            mr += cr.value()[i] / 6.0;
            mf += cf.value()[i] / 6.0;
        }
        bool near_kink = false;
        for (std::size_t i = 0; i < 6; ++i) {
            if (std::abs(1.0 - (cr.value()[i] - mf)) < 1e-2) near_kink = true;
            if (std::abs(1.0 + (cf.value()[i] - mr)) < 1e-2) near_kink = true;
        }
        if (near_kink) continue;
        ++done;
        CHECK(gradcheck([](const std::vector<Variable<double>>& v) {
                  return relativistic_hinge_d(v[0], v[1]);
              }, {cr, cf}, 1e-5) < 1e-4);
    }
}

TEST_CASE("relativistic hinge: empty batch is a configuration error") {
    auto ok = Variable<double>::constant(Tensor<double>::full({3}, 1.0));
    auto empty = Variable<double>::constant(Tensor<double>({0}));
    CHECK_THROWS_AS(relativistic_hinge_d(ok, empty), ConfigError);
    CHECK_THROWS_AS(relativistic_hinge_g(empty, ok), ConfigError);
    CHECK_THROWS_AS(wgan_g(empty), ConfigError);
}

TEST_CASE("wgan_g: value and offset linearity") {
    auto z = Variable<double>::constant(Tensor<double>::zeros({4}));
    CHECK(wgan_g(z).value()[0] == 0.0);
    auto five = Variable<double>::constant(Tensor<double>::full({4}, 5.0));
    CHECK(wgan_g(five).value()[0] == -5.0);
    Rng rng(35);
    auto c = dyadic_scores(8, rng);
    Tensor<double> shifted = c.clone();
    for (std::size_t i = 0; i < 8; ++i) shifted[i] += 1.5;
    CHECK(wgan_g(Variable<double>::constant(shifted)).value()[0] ==
          wgan_g(Variable<double>::constant(c)).value()[0] - 1.5);
}

TEST_CASE("wgan_gp_d: wasserstein term and lambda wiring") {
    auto cr = Variable<double>::constant(Tensor<double>::full({4}, 2.0));
    auto cf = Variable<double>::constant(Tensor<double>::full({4}, 2.0));
    auto pen = Variable<double>::constant(Tensor<double>::full({1}, 0.25));
    CHECK(wgan_gp_d(cr, cf, pen, 10.0).value()[0] == Catch::Approx(2.5));  // lambda * penalty
    auto cf2 = Variable<double>::constant(Tensor<double>::full({4}, 5.0));
    CHECK(wgan_gp_d(cr, cf2, pen, 0.0).value()[0] == Catch::Approx(3.0));  // pure difference
    CHECK_THROWS_AS(wgan_gp_d(cr, cf, pen, -1.0), ConfigError);
}

TEST_CASE("gradient_penalty: exactly 1-Lipschitz linear critic gives ~0") {
    Rng rng(36);
    const std::size_t B = 4;
    Pyramid<double> real, fake;
    std::vector<Tensor<double>> w_levels;
    double norm_sq = 0.0;
    for (std::size_t res : {2, 4}) {
        real.levels.push_back(
            Variable<double>::constant(random_tensor({B, 1, res, res}, rng, 0.3)));
        fake.levels.push_back(
            Variable<double>::constant(random_tensor({B, 1, res, res}, rng, 0.3)));
        Tensor<double> w = random_tensor({1, 1, res, res}, rng);
        for (std::size_t i = 0; i < w.numel(); ++i) norm_sq += w[i] * w[i];
        w_levels.push_back(w);
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& w : w_levels)
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] *= inv;

    auto critic = [&w_levels, B](const Pyramid<double>& p) {
        Variable<double> score;
        for (std::size_t l = 0; l < p.levels.size(); ++l) {
            auto prod = mul(p.levels[l], Variable<double>::constant(w_levels[l]));
            const std::size_t per = numel_of(prod.shape()) / B;
            auto part = sum_to(reshape(prod, {B, per}), {B, 1});
            score = score.defined() ? add_same(score, part) : part;
        }
        return reshape(score, {B});
    };

    auto pen = gradient_penalty<double>(critic, real, fake, 99);
    CHECK(std::abs(pen.value()[0]) < 1e-6);
}

TEST_CASE("gradient_penalty: nonzero for a non-Lipschitz critic and differentiable") {
    Rng rng(37);
    const std::size_t B = 3;
    Pyramid<double> real, fake;
    for (std::size_t res : {2, 4}) {
        real.levels.push_back(
            Variable<double>::constant(random_tensor({B, 1, res, res}, rng, 0.3)));
        fake.levels.push_back(
            Variable<double>::constant(random_tensor({B, 1, res, res}, rng, 0.3)));
    }
    auto w = Variable<double>::leaf(random_tensor({1, 1, 2, 2}, rng, 2.0));
    auto critic = [&w, B](const Pyramid<double>& p) {
        auto prod = mul(square(p.levels[0]), w);  // quadratic critic
        auto part = sum_to(reshape(prod, {B, 4}), {B, 1});
        auto fine = sum_to(square(reshape(p.levels[1], {B, 16})), {B, 1});
        return reshape(add_same(part, fine), {B});
    };
    auto pen = gradient_penalty<double>(critic, real, fake, 7);
    CHECK(pen.value()[0] > 0.0);

    // the penalty is differentiable with respect to critic parameters
    auto g = grad(pen, {w});
    double gn = 0;
    for (std::size_t i = 0; i < 4; ++i) gn += std::abs(g[0].value()[i]);
    CHECK(gn > 0.0);

    // and that parameter gradient matches finite differences (second order)
    auto f = [&](const std::vector<Variable<double>>& v) {
        auto critic2 = [&v, B](const Pyramid<double>& p) {
            auto prod = mul(square(p.levels[0]), v[0]);
            auto part = sum_to(reshape(prod, {B, 4}), {B, 1});
            auto fine = sum_to(square(reshape(p.levels[1], {B, 16})), {B, 1});
            return reshape(add_same(part, fine), {B});
        };
        return gradient_penalty<double>(critic2, real, fake, 7);
    };
    CHECK(gradcheck(f, {w}, 1e-5) < 1e-4);
}

TEST_CASE("gradient_penalty: determinism under seed") {
    Rng rng(38);
    const std::size_t B = 2;
    Pyramid<double> real, fake;
    real.levels.push_back(Variable<double>::constant(random_tensor({B, 1, 2, 2}, rng, 0.3)));
    fake.levels.push_back(Variable<double>::constant(random_tensor({B, 1, 2, 2}, rng, 0.3)));
    auto critic = [B](const Pyramid<double>& p) {
        return reshape(sum_to(square(reshape(p.levels[0], {B, 4})), {B, 1}), {B});
    };
    CHECK(gradient_penalty<double>(critic, real, fake, 5).value()[0] ==
          gradient_penalty<double>(critic, real, fake, 5).value()[0]);
    CHECK(gradient_penalty<double>(critic, real, fake, 5).value()[0] !=
          gradient_penalty<double>(critic, real, fake, 6).value()[0]);
}
