#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msggan/nn/layers.hpp"
#include "msggan/nn/pyramid.hpp"

namespace msggan {

inline void validate_scale_progression(const std::vector<std::size_t>& scales) {
    if (scales.empty() || scales.front() != 4)
        throw ConfigError("scales must start at 4");
    for (std::size_t i = 1; i < scales.size(); ++i)
        if (scales[i] != scales[i - 1] * 2)
            throw ConfigError("scales must strictly double, got " +
                              std::to_string(scales[i - 1]) + " -> " + std::to_string(scales[i]));
}

template <typename T>
struct GeneratorConfig {
    std::size_t latent_dim = 512;
    std::vector<std::size_t> scales = {4, 8, 16, 32, 64};
    std::vector<std::size_t> channels = {256, 256, 128, 64, 32};  // per scale, coarsest first
    bool use_pixel_norm = true;
    bool use_spectral_norm = false;
    bool use_attention = false;
    bool use_equalized_lr = false;
    std::vector<std::size_t> attention_scales = {};  // empty = every scale
    std::size_t attention_k = 8;

    std::vector<std::size_t> effective_attention_scales() const {
        if (!use_attention) return {};
        return attention_scales.empty() ? scales : attention_scales;
    }

    bool attention_at(std::size_t scale) const {
        for (std::size_t s : effective_attention_scales())
            if (s == scale) return true;
        return false;
    }

    void validate() const {
        validate_scale_progression(scales);
        if (channels.size() != scales.size())
            throw ConfigError("channels_per_scale length must match scales");
        if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
        for (std::size_t c : channels)
            if (c == 0) throw ConfigError("channel widths must be positive");
        for (std::size_t s : attention_scales) {
            bool found = false;
            for (std::size_t t : scales) found = found || (s == t);
            if (!found) throw ConfigError("attention scale " + std::to_string(s) + " not in scales");
        }
    }
};

template <typename T>
Variable<T> sample_latent(std::size_t batch, std::size_t latent_dim, Rng& rng) {
    Tensor<T> z({batch, latent_dim});
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] = static_cast<T>(rng.normal());
    return Variable<T>::constant(std::move(z));
}

// Multi-scale generator: a dense 4x4 entry block, then one upsampling conv
// block per scale, each with its own 1-channel tanh head feeding the pyramid.
template <typename T>
class Generator {
public:
    Generator() = default;

    Generator(GeneratorConfig<T> cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        // Separate streams so non-attention draws are identical whether or
        // not attention (or spectral norm) is enabled.
        Rng main(seed);
        Rng attn(Rng::mix(seed, 1));
        Rng sn(Rng::mix(seed, 2));

        const std::size_t c0 = cfg_.channels[0];
        fc_ = DenseLayer<T>::make(cfg_.latent_dim, c0 * 16, main, cfg_.use_spectral_norm,
                                  cfg_.use_equalized_lr, &sn);
        std::size_t in_ch = c0;
        for (std::size_t i = 0; i < cfg_.scales.size(); ++i) {
            const std::size_t ch = cfg_.channels[i];
            Block b;
            b.scale = cfg_.scales[i];
            b.conv_a = Conv2dLayer<T>::make(in_ch, ch, 3, 1, 1, main, cfg_.use_spectral_norm,
                                            cfg_.use_equalized_lr, &sn);
            b.conv_b = Conv2dLayer<T>::make(ch, ch, 3, 1, 1, main, cfg_.use_spectral_norm,
                                            cfg_.use_equalized_lr, &sn);
            b.head = Conv2dLayer<T>::make(ch, 1, 1, 1, 0, main, cfg_.use_spectral_norm,
                                          cfg_.use_equalized_lr, &sn);
            if (cfg_.attention_at(b.scale))
                b.attn = make_attention_params<T>(ch, cfg_.attention_k, attn);
            blocks_.push_back(std::move(b));
            in_ch = ch;
        }
    }

    const GeneratorConfig<T>& config() const { return cfg_; }
    std::size_t num_heads() const { return blocks_.size(); }

    Pyramid<T> generate(const Variable<T>& z, bool train = false) {
        if (z.shape().size() != 2 || z.shape()[1] != cfg_.latent_dim)
            throw ConfigError("generate: latent shape " + shape_str(z.shape()) +
                              " does not match latent_dim " + std::to_string(cfg_.latent_dim));
        require_finite(z.value(), "generate latent");
        const std::size_t B = z.shape()[0];
        auto x = reshape(fc_(z, train), {B, cfg_.channels[0], 4, 4});
        Pyramid<T> pyr;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            Block& b = blocks_[i];
            if (i > 0) x = upsample2(x);
            x = lrelu(b.conv_a(x, train));
            if (cfg_.use_pixel_norm) x = pixel_norm(x);
            x = lrelu(b.conv_b(x, train));
            if (cfg_.use_pixel_norm) x = pixel_norm(x);
            if (b.attn) x = self_attention_forward(x, *b.attn);
            pyr.levels.push_back(tanh_v(b.head(x, train)));
        }
        return pyr;
    }

    std::vector<std::pair<std::string, Variable<T>>> named_parameters() {
        std::vector<std::pair<std::string, Variable<T>>> out;
        out.emplace_back("fc.weight", fc_.weight);
        out.emplace_back("fc.bias", fc_.bias);
        for (auto& b : blocks_) {
            const std::string p = "s" + std::to_string(b.scale) + ".";
            out.emplace_back(p + "conv_a.weight", b.conv_a.weight);
            out.emplace_back(p + "conv_a.bias", b.conv_a.bias);
            out.emplace_back(p + "conv_b.weight", b.conv_b.weight);
            out.emplace_back(p + "conv_b.bias", b.conv_b.bias);
            out.emplace_back(p + "head.weight", b.head.weight);
            out.emplace_back(p + "head.bias", b.head.bias);
            if (b.attn) {
                out.emplace_back(p + "attn.w_f", b.attn->w_f);
                out.emplace_back(p + "attn.w_g", b.attn->w_g);
                out.emplace_back(p + "attn.w_h", b.attn->w_h);
                out.emplace_back(p + "attn.w_v", b.attn->w_v);
                out.emplace_back(p + "attn.gamma", b.attn->gamma);
            }
        }
        return out;
    }

    std::vector<std::pair<std::string, SpectralNormState<T>*>> sn_states() {
        std::vector<std::pair<std::string, SpectralNormState<T>*>> out;
        if (fc_.sn) out.emplace_back("fc.sn_u", &*fc_.sn);
        for (auto& b : blocks_) {
            const std::string p = "s" + std::to_string(b.scale) + ".";
            if (b.conv_a.sn) out.emplace_back(p + "conv_a.sn_u", &*b.conv_a.sn);
            if (b.conv_b.sn) out.emplace_back(p + "conv_b.sn_u", &*b.conv_b.sn);
            if (b.head.sn) out.emplace_back(p + "head.sn_u", &*b.head.sn);
        }
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto& [name, v] : named_parameters()) n += v.numel();
        return n;
    }

    // Runs extra power iterations on the frozen weights; the stored u lags
    // behind while the optimizer moves the weights, so measurements of the
    // normalization quality happen after the state has converged.
    void converge_spectral_norm(int iters) {
        auto settle = [iters](Conv2dLayer<T>& c) {
            if (!c.sn) return;
            const Shape ws = c.weight.shape();
            auto w2 = reshape(c.weight, {ws[0], numel_of(ws) / ws[0]});
            for (int i = 0; i < iters; ++i) (void)spectral_normalize(w2, *c.sn, true);
        };
        if (fc_.sn)
            for (int i = 0; i < iters; ++i) (void)spectral_normalize(fc_.weight, *fc_.sn, true);
        for (auto& b : blocks_) {
            settle(b.conv_a);
            settle(b.conv_b);
            settle(b.head);
        }
    }

    // Spectral-normalized weight matrices exactly as a forward pass would use
    // them (2-D reshape, stored state, no state update).
    std::vector<std::pair<std::string, Tensor<T>>> normalized_weights() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        auto push_conv = [&out](const std::string& name, Conv2dLayer<T>& c) {
            if (!c.sn) return;
            const Shape ws = c.weight.shape();
            auto w2 = reshape(c.weight, {ws[0], numel_of(ws) / ws[0]});
            out.emplace_back(name, spectral_normalize(w2, *c.sn, false).value().clone());
        };
        if (fc_.sn)
            out.emplace_back("fc",
                             spectral_normalize(fc_.weight, *fc_.sn, false).value().clone());
        for (auto& b : blocks_) {
            const std::string p = "s" + std::to_string(b.scale) + ".";
            push_conv(p + "conv_a", b.conv_a);
            push_conv(p + "conv_b", b.conv_b);
            push_conv(p + "head", b.head);
        }
        return out;
    }

    // Parameters grouped by the block (scale) that owns them; the fc entry
    // block counts as part of the coarsest block. Used by the multi-scale
    // gradient-flow checks.
    std::vector<std::pair<std::size_t, std::vector<Variable<T>>>> parameters_by_scale() {
        std::vector<std::pair<std::size_t, std::vector<Variable<T>>>> out;
        for (auto& b : blocks_) {
            std::vector<Variable<T>> vs = {b.conv_a.weight, b.conv_a.bias, b.conv_b.weight,
                                           b.conv_b.bias,   b.head.weight, b.head.bias};
            if (b.attn) {
                vs.push_back(b.attn->w_f);
                vs.push_back(b.attn->w_g);
                vs.push_back(b.attn->w_h);
                vs.push_back(b.attn->w_v);
                vs.push_back(b.attn->gamma);
            }
            if (b.scale == 4) {
                vs.push_back(fc_.weight);
                vs.push_back(fc_.bias);
            }
            out.emplace_back(b.scale, std::move(vs));
        }
        return out;
    }

private:
    struct Block {
        std::size_t scale = 0;
        Conv2dLayer<T> conv_a, conv_b, head;
        std::optional<AttentionParams<T>> attn;
    };

    GeneratorConfig<T> cfg_;
    DenseLayer<T> fc_;
    std::vector<Block> blocks_;
};

template <typename T>
Generator<T> build_generator(const GeneratorConfig<T>& cfg, std::uint64_t seed) {
    return Generator<T>(cfg, seed);
}

template <typename T>
Pyramid<T> generate(Generator<T>& model, const Variable<T>& z, bool train = false) {
    return model.generate(z, train);
}

}  // namespace msggan
