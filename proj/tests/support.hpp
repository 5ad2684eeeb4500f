#pragma once

#include <catch2/catch_amalgamated.hpp>
#include <functional>
#include <vector>

#include "msggan/autograd/ops.hpp"
#include "msggan/core/rng.hpp"

namespace testsupport {

using msggan::Rng;
using msggan::Shape;
using msggan::Tensor;
using msggan::Variable;

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

inline Tensor<float> random_tensor_f(Shape shape, Rng& rng, float scale = 1.0f) {
    Tensor<float> t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal()) * scale;
    return t;
}

// Central finite differences against the analytic gradient for a scalar loss
// built from leaf variables. Returns the max relative error across all
// elements of all checked leaves.
inline double gradcheck(const std::function<Variable<double>(const std::vector<Variable<double>>&)>& f,
                        std::vector<Variable<double>> leaves, double h = 1e-4) {
    auto loss = f(leaves);
    auto grads = msggan::grad(loss, leaves);
    double worst = 0.0;
    for (std::size_t p = 0; p < leaves.size(); ++p) {
        Tensor<double>& v = leaves[p].value();
        for (std::size_t i = 0; i < v.numel(); ++i) {
            const double keep = v[i];
            v[i] = keep + h;
            const double up = f(leaves).value()[0];
            v[i] = keep - h;
            const double down = f(leaves).value()[0];
            v[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads[p].value()[i];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline float max_abs_diff_f(const Tensor<float>& a, const Tensor<float>& b) {
    float m = 0.0f;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testsupport
