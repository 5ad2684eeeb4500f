#pragma once

#include <vector>

#include "msggan/autograd/ops.hpp"

namespace msggan {

// Ordered multi-scale image stack, coarsest first. Produced by the generator
// (one level per scale head) and consumed by the discriminator; real batches
// enter through pyramid_from_real.
template <typename T>
struct Pyramid {
    std::vector<Variable<T>> levels;

    std::size_t batch() const { return levels.empty() ? 0 : levels.front().shape()[0]; }
    std::size_t finest_resolution() const {
        return levels.empty() ? 0 : levels.back().shape()[2];
    }

    Pyramid detach() const {
        Pyramid out;
        out.levels.reserve(levels.size());
        for (const auto& l : levels) out.levels.push_back(l.detach());
        return out;
    }
};

template <typename T>
void validate_pyramid(const Pyramid<T>& p, bool check_range = true) {
    if (p.levels.empty()) throw ConfigError("pyramid: no levels");
    const std::size_t B = p.levels.front().shape()[0];
    std::size_t expect = p.levels.front().shape()[2];
    for (const auto& l : p.levels) {
        const Shape& s = l.shape();
        if (s.size() != 4 || s[1] != 1) throw ConfigError("pyramid: levels must be [B,1,H,W]");
        if (s[0] != B) throw ConfigError("pyramid: inconsistent batch size");
        if (s[2] != expect || s[3] != expect)
            throw ConfigError("pyramid: resolutions must double, got " + shape_str(s));
        expect *= 2;
        if (check_range) {
            const Tensor<T>& t = l.value();
            for (std::size_t i = 0; i < t.numel(); ++i)
                if (t[i] < T{-1} || t[i] > T{1})
                    throw NumericError("pyramid: pixel outside [-1,1]");
        }
    }
}

}  // namespace msggan
