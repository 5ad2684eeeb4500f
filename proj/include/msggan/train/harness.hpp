#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "msggan/data/dataset.hpp"
#include "msggan/metrics/metrics.hpp"
#include "msggan/nn/discriminator.hpp"
#include "msggan/nn/losses.hpp"
#include "msggan/nn/optim.hpp"
#include "msggan/train/checkpoint.hpp"

namespace msggan {

enum class LossKind { rl_hinge, wgan_gp };
enum class OptKind { adam, rmsprop };

inline std::string to_string(LossKind k) { return k == LossKind::rl_hinge ? "rl_hinge" : "wgan_gp"; }
inline std::string to_string(OptKind k) { return k == OptKind::adam ? "adam" : "rmsprop"; }

inline LossKind loss_from_string(const std::string& s) {
    if (s == "rl_hinge" || s == "RLHinge" || s == "rlhinge") return LossKind::rl_hinge;
    if (s == "wgan_gp" || s == "WGAN-GP" || s == "wgangp") return LossKind::wgan_gp;
    throw ConfigError("unknown loss '" + s + "' (expected rl_hinge|wgan_gp)");
}

inline OptKind opt_from_string(const std::string& s) {
    if (s == "adam" || s == "Adam") return OptKind::adam;
    if (s == "rmsprop" || s == "RMSprop") return OptKind::rmsprop;
    throw ConfigError("unknown optimizer '" + s + "' (expected adam|rmsprop)");
}

struct RunConfig {
    GeneratorConfig<float> gen;
    DiscriminatorConfig<float> disc;
    LossKind loss = LossKind::rl_hinge;
    OptKind optimizer = OptKind::adam;
    double learning_rate = 1e-4;  // one value for both models
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.99;
    double rmsprop_decay = 0.99;
    double opt_eps = 1e-8;
    double gp_lambda = 10.0;
    std::size_t epochs = 500;
    std::size_t max_steps = 0;  // 0: run the full epochs
    std::size_t batch_size = 16;
    bool flip_augment = false;
    std::uint64_t seed = 0;
    std::size_t eval_every = 0;  // steps; 0: once per epoch
    std::string out_dir;
    std::string extractor = "identity";
    std::size_t n_pairs = 0;       // 0: floor(N/2)
    std::size_t eval_samples = 0;  // 0: corpus count
    bool paper_grid = false;       // restrict learning_rate to the studied set

    void validate() const {
        gen.validate();
        disc.validate();
        if (gen.scales != disc.scales)
            throw ConfigError("generator and discriminator scales must match");
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
        if (gp_lambda < 0) throw ConfigError("gp_lambda must be >= 0");
        if (out_dir.empty()) throw ConfigError("out_dir must be set");
        if (paper_grid) {
            const double grid[4] = {0.003, 0.0003, 0.0002, 0.0001};
            bool ok = false;
            for (double g : grid) ok = ok || std::abs(learning_rate - g) < 1e-12;
            if (!ok)
                throw ConfigError("paper-grid runs require learning_rate in "
                                  "{0.003, 0.0003, 0.0002, 0.0001}");
        }
    }
};

inline nlohmann::json config_to_json(const RunConfig& c) {
    return {{"gen",
             {{"latent_dim", c.gen.latent_dim},
              {"scales", c.gen.scales},
              {"channels", c.gen.channels},
              {"use_pixel_norm", c.gen.use_pixel_norm},
              {"use_spectral_norm", c.gen.use_spectral_norm},
              {"use_attention", c.gen.use_attention},
              {"use_equalized_lr", c.gen.use_equalized_lr},
              {"attention_scales", c.gen.attention_scales},
              {"attention_k", c.gen.attention_k}}},
            {"disc",
             {{"scales", c.disc.scales},
              {"channels", c.disc.channels},
              {"use_spectral_norm", c.disc.use_spectral_norm},
              {"use_attention", c.disc.use_attention},
              {"use_minibatch_stddev", c.disc.use_minibatch_stddev},
              {"use_equalized_lr", c.disc.use_equalized_lr},
              {"attention_scales", c.disc.attention_scales},
              {"attention_k", c.disc.attention_k}}},
            {"loss", to_string(c.loss)},
            {"optimizer", to_string(c.optimizer)},
            {"learning_rate", c.learning_rate},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"rmsprop_decay", c.rmsprop_decay},
            {"opt_eps", c.opt_eps},
            {"gp_lambda", c.gp_lambda},
            {"epochs", c.epochs},
            {"max_steps", c.max_steps},
            {"batch_size", c.batch_size},
            {"flip_augment", c.flip_augment},
            {"seed", c.seed},
            {"eval_every", c.eval_every},
            {"out_dir", c.out_dir},
            {"extractor", c.extractor},
            {"n_pairs", c.n_pairs},
            {"eval_samples", c.eval_samples},
            {"paper_grid", c.paper_grid}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    const auto& g = j.at("gen");
    c.gen.latent_dim = g.at("latent_dim").get<std::size_t>();
    c.gen.scales = g.at("scales").get<std::vector<std::size_t>>();
    c.gen.channels = g.at("channels").get<std::vector<std::size_t>>();
    c.gen.use_pixel_norm = g.at("use_pixel_norm").get<bool>();
    c.gen.use_spectral_norm = g.at("use_spectral_norm").get<bool>();
    c.gen.use_attention = g.at("use_attention").get<bool>();
    c.gen.use_equalized_lr = g.at("use_equalized_lr").get<bool>();
    c.gen.attention_scales = g.at("attention_scales").get<std::vector<std::size_t>>();
    c.gen.attention_k = g.at("attention_k").get<std::size_t>();
    const auto& d = j.at("disc");
    c.disc.scales = d.at("scales").get<std::vector<std::size_t>>();
    c.disc.channels = d.at("channels").get<std::vector<std::size_t>>();
    c.disc.use_spectral_norm = d.at("use_spectral_norm").get<bool>();
    c.disc.use_attention = d.at("use_attention").get<bool>();
    c.disc.use_minibatch_stddev = d.at("use_minibatch_stddev").get<bool>();
    c.disc.use_equalized_lr = d.at("use_equalized_lr").get<bool>();
    c.disc.attention_scales = d.at("attention_scales").get<std::vector<std::size_t>>();
    c.disc.attention_k = d.at("attention_k").get<std::size_t>();
    c.loss = loss_from_string(j.at("loss").get<std::string>());
    c.optimizer = opt_from_string(j.at("optimizer").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.rmsprop_decay = j.at("rmsprop_decay").get<double>();
    c.opt_eps = j.at("opt_eps").get<double>();
    c.gp_lambda = j.at("gp_lambda").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.max_steps = j.at("max_steps").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.flip_augment = j.at("flip_augment").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_every = j.at("eval_every").get<std::size_t>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.extractor = j.at("extractor").get<std::string>();
    c.n_pairs = j.at("n_pairs").get<std::size_t>();
    c.eval_samples = j.at("eval_samples").get<std::size_t>();
    c.paper_grid = j.at("paper_grid").get<bool>();
    return c;
}

struct RunRecord {
    nlohmann::json config_echo;
    std::vector<std::pair<std::size_t, std::pair<double, double>>> losses;  // step -> (L_D, L_G)
    std::vector<std::pair<std::size_t, MetricReport>> metrics;
    double wall_seconds = 0;
    std::string final_checkpoint;
    std::uint64_t d_steps = 0;
    std::uint64_t g_steps = 0;

    nlohmann::json to_json() const {
        nlohmann::json jl = nlohmann::json::array();
        for (const auto& [step, ld_lg] : losses)
            jl.push_back({{"step", step}, {"loss_d", ld_lg.first}, {"loss_g", ld_lg.second}});
        nlohmann::json jm = nlohmann::json::array();
        for (const auto& [step, rep] : metrics)
            jm.push_back({{"step", step}, {"report", rep.to_json()}});
        return {{"config", config_echo},     {"losses", jl},
                {"metrics", jm},             {"wall_seconds", wall_seconds},
                {"final_checkpoint", final_checkpoint}, {"d_steps", d_steps},
                {"g_steps", g_steps}};
    }
};

// ---------------------------------------------------------------------------
// Metric-plane helpers.
// ---------------------------------------------------------------------------

inline std::vector<MetricImage> metric_images_from_batch(const ImageBatch<float>& batch) {
    const std::size_t h = batch.data.dim(2), w = batch.data.dim(3);
    std::vector<MetricImage> out;
    out.reserve(batch.batch());
    for (std::size_t b = 0; b < batch.batch(); ++b) {
        MetricImage img(h, w);
        const float* src = batch.data.data() + b * h * w;
        for (std::size_t i = 0; i < h * w; ++i) {
            const double v = batch.range == RangeTag::unit
                                 ? static_cast<double>(src[i])
                                 : (static_cast<double>(src[i]) + 1.0) / 2.0;
            img(static_cast<long>(i / w), static_cast<long>(i % w)) = v;
        }
        out.push_back(std::move(img));
    }
    return out;
}

inline std::vector<MetricImage> load_metric_images(const DatasetManifest& corpus,
                                                   std::size_t target) {
    std::vector<MetricImage> out;
    out.reserve(corpus.count());
    std::vector<std::size_t> idx(64);
    for (std::size_t start = 0; start < corpus.count(); start += 64) {
        const std::size_t n = std::min<std::size_t>(64, corpus.count() - start);
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
        auto batch = load_and_preprocess<float>(corpus, idx, target, RangeTag::unit);
        auto imgs = metric_images_from_batch(batch);
        for (auto& im : imgs) out.push_back(std::move(im));
    }
    return out;
}

template <typename G>
std::vector<MetricImage> sample_metric_images(G& gen, std::size_t n, std::uint64_t seed,
                                              std::size_t batch = 64) {
    Rng rng(seed);
    std::vector<MetricImage> out;
    out.reserve(n);
    while (out.size() < n) {
        const std::size_t b = std::min(batch, n - out.size());
        auto z = sample_latent<float>(b, gen.config().latent_dim, rng);
        auto pyr = gen.generate(z, false);
        ImageBatch<float> ib{pyr.levels.back().value(), RangeTag::symmetric};
        auto imgs = metric_images_from_batch(ib);
        for (auto& im : imgs) out.push_back(std::move(im));
    }
    return out;
}

// MS-SSIM config appropriate for a resolution: the canonical 3-scale 11x11
// protocol at 64, fewer scales when the resolution cannot hold them.
inline MsSsimConfig msssim_for_resolution(std::size_t res) {
    MsSsimConfig cfg;
    int m = 0;
    while (m < 3 && static_cast<std::size_t>(cfg.window) << m <= res) ++m;
    cfg.num_scales = std::max(1, m);
    cfg.weights = msssim_weights(cfg.num_scales);
    if (cfg.min_resolution() > res)
        throw ConfigError("resolution " + std::to_string(res) + " below the MS-SSIM window");
    return cfg;
}

inline MetricReport evaluate_images(const std::vector<MetricImage>& real,
                                    const std::vector<MetricImage>& gen, std::uint64_t seed,
                                    const FeatureExtractor& extractor, std::size_t n_pairs) {
    if (real.empty() || gen.empty()) throw ConfigError("evaluate_images: empty image set");
    const auto cfg = msssim_for_resolution(static_cast<std::size_t>(real.front().rows()));
    MetricReport rep;
    rep.seed = seed;
    rep.n_real = real.size();
    rep.n_gen = gen.size();
    // one pair-sampling stream for both sets: identical sets tie exactly
    rep.ms_ssim_real = ms_ssim_dataset(real, n_pairs, Rng::mix(seed, 1), cfg);
    rep.ms_ssim_gen = ms_ssim_dataset(gen, n_pairs, Rng::mix(seed, 1), cfg);
    rep.fid = fid(extract_features(real, extractor), extract_features(gen, extractor));
    rep.mode_collapse = detect_mode_collapse(rep.ms_ssim_real, rep.ms_ssim_gen);
    return rep;
}

// ---------------------------------------------------------------------------
// Checkpoint packing.
// ---------------------------------------------------------------------------

namespace detail {

template <typename Opt>
void pack_optimizer(Checkpoint& ck, const std::string& prefix, Opt& opt) {
    for (auto& [name, t] : opt.state_tensors())
        ck.tensors.emplace_back(prefix + "." + name, t->clone());
    ck.meta[prefix + "_t"] = opt.step_count();
}

template <typename Opt>
void unpack_optimizer(const Checkpoint& ck, const std::string& prefix, Opt& opt) {
    for (auto& [name, t] : opt.state_tensors()) {
        const Tensor<float>* src = ck.find(prefix + "." + name);
        if (!src || src->numel() != t->numel())
            throw ConfigError("checkpoint missing optimizer state " + prefix + "." + name);
        std::memcpy(t->data(), src->data(), t->numel() * sizeof(float));
    }
    opt.set_step_count(ck.meta.at(prefix + "_t").get<std::uint64_t>());
}

}  // namespace detail

inline void pack_model_tensors(Checkpoint& ck, const std::string& prefix, Generator<float>& g) {
    for (auto& [name, v] : g.named_parameters())
        ck.tensors.emplace_back(prefix + "." + name, v.value().clone());
    for (auto& [name, s] : g.sn_states())
        ck.tensors.emplace_back(prefix + ".sn." + name, s->u.clone());
}

inline void pack_model_tensors(Checkpoint& ck, const std::string& prefix,
                               Discriminator<float>& d) {
    for (auto& [name, v] : d.named_parameters())
        ck.tensors.emplace_back(prefix + "." + name, v.value().clone());
    for (auto& [name, s] : d.sn_states())
        ck.tensors.emplace_back(prefix + ".sn." + name, s->u.clone());
}

template <typename Model>
void unpack_model_tensors(const Checkpoint& ck, const std::string& prefix, Model& m) {
    for (auto& [name, v] : m.named_parameters()) {
        const Tensor<float>* src = ck.find(prefix + "." + name);
        if (!src || src->numel() != v.numel())
            throw ConfigError("checkpoint missing tensor " + prefix + "." + name);
        std::memcpy(v.value().data(), src->data(), v.numel() * sizeof(float));
    }
    for (auto& [name, s] : m.sn_states()) {
        const Tensor<float>* src = ck.find(prefix + ".sn." + name);
        if (!src || src->numel() != s->u.numel())
            throw ConfigError("checkpoint missing state " + prefix + ".sn." + name);
        std::memcpy(s->u.data(), src->data(), s->u.numel() * sizeof(float));
    }
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

namespace detail {

inline std::unique_ptr<Optimizer<float>> make_optimizer(const RunConfig& cfg,
                                                        std::vector<Variable<float>> params) {
    const float lr = static_cast<float>(cfg.learning_rate);
    if (cfg.optimizer == OptKind::adam)
        return std::make_unique<Adam<float>>(std::move(params), lr,
                                             static_cast<float>(cfg.adam_beta1),
                                             static_cast<float>(cfg.adam_beta2),
                                             static_cast<float>(cfg.opt_eps));
    return std::make_unique<RMSprop<float>>(std::move(params), lr,
                                            static_cast<float>(cfg.rmsprop_decay),
                                            static_cast<float>(cfg.opt_eps));
}

inline std::vector<Variable<float>> param_list(
    std::vector<std::pair<std::string, Variable<float>>> named) {
    std::vector<Variable<float>> out;
    out.reserve(named.size());
    for (auto& [n, v] : named) out.push_back(v);
    return out;
}

inline double grad_norm(std::vector<std::pair<std::string, Variable<float>>> named) {
    double s = 0;
    for (auto& [n, v] : named)
        if (v.has_grad())
            for (std::size_t i = 0; i < v.grad().numel(); ++i)
                s += static_cast<double>(v.grad()[i]) * static_cast<double>(v.grad()[i]);
    return std::sqrt(s);
}

}  // namespace detail

using ProgressFn = std::function<void(std::size_t step, std::size_t total, double loss_d,
                                      double loss_g)>;

// Alternating 1:1 training. Deterministic under (config, seed) on one
// platform; aborts with a diagnostic snapshot if a loss goes non-finite.
inline RunRecord train(const RunConfig& cfg, const DatasetManifest& corpus,
                       const std::string& resume_from = "",
                       const ProgressFn& progress = {}) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const auto t_start = std::chrono::steady_clock::now();

    Generator<float> gen(cfg.gen, Rng::mix(cfg.seed, 10));
    Discriminator<float> disc(cfg.disc, Rng::mix(cfg.seed, 11));
    auto opt_g = detail::make_optimizer(cfg, detail::param_list(gen.named_parameters()));
    auto opt_d = detail::make_optimizer(cfg, detail::param_list(disc.named_parameters()));

    const std::size_t finest = cfg.gen.scales.back();
    EpochIterator data(corpus, cfg.batch_size, cfg.seed, cfg.flip_augment, finest,
                       RangeTag::symmetric);
    Rng z_rng(Rng::mix(cfg.seed, 12));

    const std::size_t bpe = data.batches_per_epoch();
    // max_steps overrides the epoch count when set (sub- or super-epoch runs)
    const std::size_t total_steps = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * bpe;
    const std::size_t eval_cadence = cfg.eval_every > 0 ? cfg.eval_every : bpe;

    std::size_t start_step = 0;
    if (!resume_from.empty()) {
        Checkpoint ck = Checkpoint::load(resume_from);
        unpack_model_tensors(ck, "g", gen);
        unpack_model_tensors(ck, "d", disc);
        detail::unpack_optimizer(ck, "optg", *opt_g);
        detail::unpack_optimizer(ck, "optd", *opt_d);
        z_rng.load_state(ck.meta.at("z_rng").get<std::string>());
        start_step = ck.meta.at("step").get<std::size_t>();
        if (start_step > 0) data.seek(start_step / bpe, start_step % bpe);
    }

    RunRecord rec;
    rec.config_echo = config_to_json(cfg);

    // real metric images and their MS-SSIM are fixed for the whole run
    std::vector<MetricImage> real_metric;
    double real_msssim = -1;
    auto metric_extractor = [&]() { return make_extractor(cfg.extractor, finest, finest); };

    auto save_ck = [&](std::size_t step, const fs::path& path) {
        Checkpoint ck;
        ck.meta = {{"format", "msggan-checkpoint"},
                   {"step", step},
                   {"config", config_to_json(cfg)},
                   {"z_rng", z_rng.save_state()},
                   {"d_steps", opt_d->step_count()},
                   {"g_steps", opt_g->step_count()}};
        pack_model_tensors(ck, "g", gen);
        pack_model_tensors(ck, "d", disc);
        detail::pack_optimizer(ck, "optg", *opt_g);
        detail::pack_optimizer(ck, "optd", *opt_d);
        ck.save(path);
    };

    auto run_eval = [&](std::size_t step) {
        auto extractor = metric_extractor();
        if (real_metric.empty()) {
            real_metric = load_metric_images(corpus, finest);
            real_msssim = ms_ssim_dataset(real_metric, cfg.n_pairs, Rng::mix(cfg.seed, 31),
                                          msssim_for_resolution(finest));
        }
        const std::size_t n_gen = cfg.eval_samples > 0 ? cfg.eval_samples : corpus.count();
        auto gen_imgs = sample_metric_images(gen, n_gen, Rng::mix(cfg.seed, 30) + step);
        MetricReport rep;
        rep.seed = cfg.seed;
        rep.n_real = real_metric.size();
        rep.n_gen = gen_imgs.size();
        rep.ms_ssim_real = real_msssim;
        rep.ms_ssim_gen = ms_ssim_dataset(gen_imgs, cfg.n_pairs, Rng::mix(cfg.seed, 31),
                                          msssim_for_resolution(finest));
        rep.fid = fid(extract_features(real_metric, *extractor),
                      extract_features(gen_imgs, *extractor));
        rep.mode_collapse = detect_mode_collapse(rep.ms_ssim_real, rep.ms_ssim_gen);
        rec.metrics.emplace_back(step, rep);

        // 8x8 inspection grid from the finest heads
        Rng grid_rng(Rng::mix(cfg.seed, 33) + step);
        auto z = sample_latent<float>(64, cfg.gen.latent_dim, grid_rng);
        ImageBatch<float> grid{gen.generate(z, false).levels.back().value(),
                               RangeTag::symmetric};
        write_montage_png(grid, 8, 8, fs::path(cfg.out_dir) / ("grid_" + std::to_string(step) +
                                                               ".png"));
    };

    auto abort_run = [&](std::size_t step, double ld, double lg,
                         const std::string& cause) -> void {
        nlohmann::json snap = {{"step", step},
                               {"loss_d", ld},
                               {"loss_g", lg},
                               {"cause", cause},
                               {"grad_norm_d", detail::grad_norm(disc.named_parameters())},
                               {"grad_norm_g", detail::grad_norm(gen.named_parameters())}};
        std::ofstream(fs::path(cfg.out_dir) / "abort.json") << snap.dump(2) << "\n";
        throw NumericError("non-finite loss at step " + std::to_string(step) +
                           "; diagnostic snapshot: " + snap.dump());
    };

    for (std::size_t step = start_step; step < total_steps; ++step) {
        double ld = std::numeric_limits<double>::quiet_NaN();
        double lg = std::numeric_limits<double>::quiet_NaN();
        try {
            ImageBatch<float> real = data.next();
            auto real_pyr =
                pyramid_from_real(Variable<float>::constant(real.data), cfg.gen.scales);

            // --- D step: real pyramid vs detached fakes ---
            auto z1 = sample_latent<float>(cfg.batch_size, cfg.gen.latent_dim, z_rng);
            auto fake_detached = gen.generate(z1, true).detach();
            auto c_real = disc.criticize(real_pyr, true);
            auto c_fake = disc.criticize(fake_detached, true);
            Variable<float> loss_d;
            if (cfg.loss == LossKind::rl_hinge) {
                loss_d = relativistic_hinge_d(c_real, c_fake);
            } else {
                auto critic = [&disc](const Pyramid<float>& p) {
                    return disc.criticize(p, true);
                };
                auto penalty = gradient_penalty<float>(critic, real_pyr, fake_detached,
                                                       Rng::mix(cfg.seed, 13) + step);
                loss_d = wgan_gp_d(c_real, c_fake, penalty, static_cast<float>(cfg.gp_lambda));
            }
            ld = static_cast<double>(loss_d.value()[0]);
            if (!std::isfinite(ld)) abort_run(step, ld, lg, "non-finite discriminator loss");
            opt_d->zero_grad();
            backward(loss_d);
            opt_d->step();

            // --- G step: fresh fakes through the updated critic ---
            auto z2 = sample_latent<float>(cfg.batch_size, cfg.gen.latent_dim, z_rng);
            auto fake = gen.generate(z2, true);
            auto c_fake2 = disc.criticize(fake, true);
            Variable<float> loss_g;
            if (cfg.loss == LossKind::rl_hinge) {
                auto c_real2 = disc.criticize(real_pyr, true);
                loss_g = relativistic_hinge_g(c_real2, c_fake2);
            } else {
                loss_g = wgan_g(c_fake2);
            }
            lg = static_cast<double>(loss_g.value()[0]);
            if (!std::isfinite(lg)) abort_run(step, ld, lg, "non-finite generator loss");
            opt_g->zero_grad();
            backward(loss_g);
            opt_g->step();
        } catch (const NumericError& e) {
            if (std::string(e.what()).find("diagnostic snapshot") != std::string::npos) throw;
            abort_run(step, ld, lg, e.what());
        }

        rec.losses.emplace_back(step, std::make_pair(ld, lg));
        if (progress) progress(step + 1, total_steps, ld, lg);

        const bool last = (step + 1 == total_steps);
        if ((step + 1) % eval_cadence == 0 || last) {
            save_ck(step + 1, fs::path(cfg.out_dir) / ("ckpt_" + std::to_string(step + 1) +
                                                       ".msgk"));
            run_eval(step + 1);
        }
    }

    const fs::path final_path = fs::path(cfg.out_dir) / "ckpt_final.msgk";
    save_ck(total_steps, final_path);
    if (rec.metrics.empty()) run_eval(total_steps);
    rec.final_checkpoint = final_path.string();
    rec.d_steps = opt_d->step_count();
    rec.g_steps = opt_g->step_count();
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    std::ofstream(fs::path(cfg.out_dir) / "run.json") << rec.to_json().dump(2) << "\n";
    return rec;
}

// ---------------------------------------------------------------------------
// Checkpoint consumers.
// ---------------------------------------------------------------------------

inline Generator<float> generator_from_checkpoint(const Checkpoint& ck) {
    RunConfig cfg = config_from_json(ck.meta.at("config"));
    Generator<float> gen(cfg.gen, Rng::mix(cfg.seed, 10));
    unpack_model_tensors(ck, "g", gen);
    return gen;
}

// n 64x64 (finest-scale) PNGs plus an 8x8 montage, deterministic under seed.
inline void generate_samples(const std::filesystem::path& ckpt_path, std::size_t n,
                             std::uint64_t seed, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    Checkpoint ck = Checkpoint::load(ckpt_path);
    Generator<float> gen = generator_from_checkpoint(ck);
    fs::create_directories(out_dir);
    Rng rng(seed);
    std::size_t written = 0;
    ImageBatch<float> first_batch;
    while (written < n) {
        const std::size_t b = std::min<std::size_t>(64, n - written);
        auto z = sample_latent<float>(b, gen.config().latent_dim, rng);
        ImageBatch<float> batch{gen.generate(z, false).levels.back().value(),
                                RangeTag::symmetric};
        if (written == 0) first_batch = batch;
        for (std::size_t i = 0; i < b; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "gen_%06zu.png", written + i);
            write_batch_png(batch, i, out_dir / name);
        }
        written += b;
    }
    if (n > 0) write_montage_png(first_batch, 8, 8, out_dir / "grid.png");
}

inline MetricReport evaluate_run(const std::filesystem::path& ckpt_path,
                                 const DatasetManifest& corpus, std::uint64_t seed,
                                 const std::string& extractor_kind = "identity",
                                 std::size_t n_pairs = 0, std::size_t eval_samples = 0) {
    Checkpoint ck = Checkpoint::load(ckpt_path);
    Generator<float> gen = generator_from_checkpoint(ck);
    const std::size_t res = gen.config().scales.back();
    auto real = load_metric_images(corpus, res);
    const std::size_t n = eval_samples > 0 ? eval_samples : corpus.count();
    auto fake = sample_metric_images(gen, n, Rng::mix(seed, 40));
    auto extractor = make_extractor(extractor_kind, res, res);
    return evaluate_images(real, fake, seed, *extractor, n_pairs);
}

}  // namespace msggan
