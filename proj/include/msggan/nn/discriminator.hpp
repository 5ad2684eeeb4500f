#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msggan/nn/generator.hpp"

namespace msggan {

template <typename T>
struct DiscriminatorConfig {
    std::vector<std::size_t> scales = {4, 8, 16, 32, 64};
    std::vector<std::size_t> channels = {256, 256, 128, 64, 32};  // per scale, coarsest first
    bool use_spectral_norm = false;
    bool use_attention = false;
    bool use_minibatch_stddev = true;
    bool use_equalized_lr = false;
    std::vector<std::size_t> attention_scales = {};
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
        for (std::size_t c : channels)
            if (c == 0) throw ConfigError("channel widths must be positive");
        for (std::size_t s : attention_scales) {
            bool found = false;
            for (std::size_t t : scales) found = found || (s == t);
            if (!found) throw ConfigError("attention scale " + std::to_string(s) + " not in scales");
        }
    }
};

// Downsamples a [-1,1] batch at the finest scale to every coarser scale by
// 2x2 average pooling; finest level is the input itself, coarsest first.
template <typename T>
Pyramid<T> pyramid_from_real(const Variable<T>& finest, const std::vector<std::size_t>& scales) {
    validate_scale_progression(scales);
    const Shape& s = finest.shape();
    if (s.size() != 4 || s[1] != 1 || s[2] != scales.back() || s[3] != scales.back())
        throw ConfigError("pyramid_from_real: expected [B,1," + std::to_string(scales.back()) +
                          "," + std::to_string(scales.back()) + "], got " + shape_str(s));
    std::vector<Variable<T>> levels(scales.size());
    levels.back() = finest;
    for (std::size_t i = scales.size() - 1; i-- > 0;) levels[i] = avg_pool2(levels[i + 1]);
    Pyramid<T> pyr;
    pyr.levels = std::move(levels);
    return pyr;
}

// Multi-scale critic: one conv block per scale from finest to coarsest, each
// coarser pyramid level concatenated into the block at its resolution, with
// the minibatch-stddev channel and the scoring stack in the 4x4 block.
template <typename T>
class Discriminator {
public:
    Discriminator() = default;

    Discriminator(DiscriminatorConfig<T> cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng main(seed);
        Rng attn(Rng::mix(seed, 1));
        Rng sn(Rng::mix(seed, 2));

        const auto& sc = cfg_.scales;
        const auto& ch = cfg_.channels;
        const std::size_t n = sc.size();
        // Blocks at scales finest .. 8 (all but the final 4x4 block).
        for (std::size_t i = n; i-- > 1;) {
            Block b;
            b.scale = sc[i];
            const bool finest = (i == n - 1);
            const std::size_t in_ch = finest ? 1 : ch[i + 1] + 1;
            b.conv_a = Conv2dLayer<T>::make(in_ch, ch[i], 3, 1, 1, main, cfg_.use_spectral_norm,
                                            cfg_.use_equalized_lr, &sn);
            b.conv_b = Conv2dLayer<T>::make(ch[i], ch[i], 3, 1, 1, main, cfg_.use_spectral_norm,
                                            cfg_.use_equalized_lr, &sn);
            if (cfg_.attention_at(b.scale))
                b.attn = make_attention_params<T>(ch[i], cfg_.attention_k, attn);
            blocks_.push_back(std::move(b));
        }
        // Final 4x4 block: [concat image] -> mbstd -> conv3x3 -> conv4x4 -> dense.
        const std::size_t base_in = (n == 1) ? 1 : ch[1] + 1;
        const std::size_t final_in = base_in + (cfg_.use_minibatch_stddev ? 1 : 0);
        final_conv3_ = Conv2dLayer<T>::make(final_in, ch[0], 3, 1, 1, main, cfg_.use_spectral_norm,
                                            cfg_.use_equalized_lr, &sn);
        final_conv4_ = Conv2dLayer<T>::make(ch[0], ch[0], 4, 1, 0, main, cfg_.use_spectral_norm,
                                            cfg_.use_equalized_lr, &sn);
        final_fc_ = DenseLayer<T>::make(ch[0], 1, main, cfg_.use_spectral_norm,
                                        cfg_.use_equalized_lr, &sn);
        if (cfg_.attention_at(4))
            final_attn_ = make_attention_params<T>(ch[0], cfg_.attention_k, attn);
    }

    const DiscriminatorConfig<T>& config() const { return cfg_; }

    Variable<T> criticize(const Pyramid<T>& pyr, bool train = false) {
        const auto& sc = cfg_.scales;
        if (pyr.levels.size() != sc.size())
            throw ConfigError("criticize: pyramid has " + std::to_string(pyr.levels.size()) +
                              " levels, config expects " + std::to_string(sc.size()));
        for (std::size_t i = 0; i < sc.size(); ++i) {
            const Shape& s = pyr.levels[i].shape();
            if (s.size() != 4 || s[1] != 1 || s[2] != sc[i] || s[3] != sc[i])
                throw ConfigError("criticize: level " + std::to_string(i) + " has shape " +
                                  shape_str(s) + ", expected scale " + std::to_string(sc[i]));
        }
        const std::size_t B = pyr.batch();

        Variable<T> x;
        for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
            Block& b = blocks_[bi];
            const std::size_t level = sc.size() - 1 - bi;
            x = x.defined() ? concat<T>({x, pyr.levels[level]}, 1) : pyr.levels[level];
            x = lrelu(b.conv_a(x, train));
            x = lrelu(b.conv_b(x, train));
            if (b.attn) x = self_attention_forward(x, *b.attn);
            x = avg_pool2(x);
        }
        x = x.defined() ? concat<T>({x, pyr.levels[0]}, 1) : pyr.levels[0];
        if (cfg_.use_minibatch_stddev) x = minibatch_stddev(x);
        x = lrelu(final_conv3_(x, train));
        if (final_attn_) x = self_attention_forward(x, *final_attn_);
        x = lrelu(final_conv4_(x, train));  // 4x4 valid -> [B, C, 1, 1]
        auto flat = reshape(x, {B, x.shape()[1]});
        return reshape(final_fc_(flat, train), {B});
    }

    std::vector<std::pair<std::string, Variable<T>>> named_parameters() {
        std::vector<std::pair<std::string, Variable<T>>> out;
        for (auto& b : blocks_) {
            const std::string p = "s" + std::to_string(b.scale) + ".";
            out.emplace_back(p + "conv_a.weight", b.conv_a.weight);
            out.emplace_back(p + "conv_a.bias", b.conv_a.bias);
            out.emplace_back(p + "conv_b.weight", b.conv_b.weight);
            out.emplace_back(p + "conv_b.bias", b.conv_b.bias);
            if (b.attn) {
                out.emplace_back(p + "attn.w_f", b.attn->w_f);
                out.emplace_back(p + "attn.w_g", b.attn->w_g);
                out.emplace_back(p + "attn.w_h", b.attn->w_h);
                out.emplace_back(p + "attn.w_v", b.attn->w_v);
                out.emplace_back(p + "attn.gamma", b.attn->gamma);
            }
        }
        out.emplace_back("s4.conv3.weight", final_conv3_.weight);
        out.emplace_back("s4.conv3.bias", final_conv3_.bias);
        if (final_attn_) {
            out.emplace_back("s4.attn.w_f", final_attn_->w_f);
            out.emplace_back("s4.attn.w_g", final_attn_->w_g);
            out.emplace_back("s4.attn.w_h", final_attn_->w_h);
            out.emplace_back("s4.attn.w_v", final_attn_->w_v);
            out.emplace_back("s4.attn.gamma", final_attn_->gamma);
        }
        out.emplace_back("s4.conv4.weight", final_conv4_.weight);
        out.emplace_back("s4.conv4.bias", final_conv4_.bias);
        out.emplace_back("s4.fc.weight", final_fc_.weight);
        out.emplace_back("s4.fc.bias", final_fc_.bias);
        return out;
    }

    std::vector<std::pair<std::string, SpectralNormState<T>*>> sn_states() {
        std::vector<std::pair<std::string, SpectralNormState<T>*>> out;
        for (auto& b : blocks_) {
            const std::string p = "s" + std::to_string(b.scale) + ".";
            if (b.conv_a.sn) out.emplace_back(p + "conv_a.sn_u", &*b.conv_a.sn);
            if (b.conv_b.sn) out.emplace_back(p + "conv_b.sn_u", &*b.conv_b.sn);
        }
        if (final_conv3_.sn) out.emplace_back("s4.conv3.sn_u", &*final_conv3_.sn);
        if (final_conv4_.sn) out.emplace_back("s4.conv4.sn_u", &*final_conv4_.sn);
        if (final_fc_.sn) out.emplace_back("s4.fc.sn_u", &*final_fc_.sn);
        return out;
    }

    // Extra power iterations on frozen weights; see Generator.
    void converge_spectral_norm(int iters) {
        auto settle = [iters](Conv2dLayer<T>& c) {
            if (!c.sn) return;
            const Shape ws = c.weight.shape();
            auto w2 = reshape(c.weight, {ws[0], numel_of(ws) / ws[0]});
            for (int i = 0; i < iters; ++i) (void)spectral_normalize(w2, *c.sn, true);
        };
        for (auto& b : blocks_) {
            settle(b.conv_a);
            settle(b.conv_b);
        }
        settle(final_conv3_);
        settle(final_conv4_);
        if (final_fc_.sn)
            for (int i = 0; i < iters; ++i)
                (void)spectral_normalize(final_fc_.weight, *final_fc_.sn, true);
    }

    // The set of spectral-normalized weight matrices as currently used in a
    // forward pass (2-D reshaped, normalized with the stored state). For the
    // singular-value acceptance check.
    std::vector<std::pair<std::string, Tensor<T>>> normalized_weights() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        auto push = [&out](const std::string& name, Conv2dLayer<T>& c) {
            if (!c.sn) return;
            const Shape ws = c.weight.shape();
            auto w2 = reshape(c.weight, {ws[0], numel_of(ws) / ws[0]});
            out.emplace_back(name, spectral_normalize(w2, *c.sn, false).value().clone());
        };
        for (auto& b : blocks_) {
            const std::string p = "s" + std::to_string(b.scale) + ".";
            push(p + "conv_a", b.conv_a);
            push(p + "conv_b", b.conv_b);
        }
        push("s4.conv3", final_conv3_);
        push("s4.conv4", final_conv4_);
        if (final_fc_.sn)
            out.emplace_back("s4.fc",
                             spectral_normalize(final_fc_.weight, *final_fc_.sn, false)
                                 .value()
                                 .clone());
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto& [name, v] : named_parameters()) n += v.numel();
        return n;
    }

private:
    struct Block {
        std::size_t scale = 0;
        Conv2dLayer<T> conv_a, conv_b;
        std::optional<AttentionParams<T>> attn;
    };

    DiscriminatorConfig<T> cfg_;
    std::vector<Block> blocks_;  // finest first
    Conv2dLayer<T> final_conv3_, final_conv4_;
    DenseLayer<T> final_fc_;
    std::optional<AttentionParams<T>> final_attn_;
};

template <typename T>
Discriminator<T> build_discriminator(const DiscriminatorConfig<T>& cfg, std::uint64_t seed) {
    return Discriminator<T>(cfg, seed);
}

template <typename T>
Variable<T> criticize(Discriminator<T>& model, const Pyramid<T>& pyr, bool train = false) {
    return model.criticize(pyr, train);
}

}  // namespace msggan
