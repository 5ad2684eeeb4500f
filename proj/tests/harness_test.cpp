#include "msggan/train/ablation.hpp"
#include "msggan/train/config_file.hpp"
#include "corpus.hpp"
#include "support.hpp"

using namespace msggan;
using namespace testsupport;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path dir;
    explicit TempDir(const std::string& name) {
        dir = fs::temp_directory_path() / ("msggan_harness_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
};

RunConfig tiny_cfg(const fs::path& out, std::uint64_t seed = 7) {
    RunConfig c;
    c.gen.latent_dim = 16;
    c.gen.scales = {4, 8, 16};
    c.gen.channels = {8, 8, 8};
    c.gen.use_pixel_norm = true;
    c.disc.scales = {4, 8, 16};
    c.disc.channels = {8, 8, 8};
    c.disc.use_minibatch_stddev = true;
    c.loss = LossKind::rl_hinge;
    c.optimizer = OptKind::adam;
    c.learning_rate = 1e-3;
    c.epochs = 1;
    c.max_steps = 6;
    c.batch_size = 4;
    c.seed = seed;
    c.eval_every = 3;
    c.out_dir = out.string();
    c.extractor = "identity";
    return c;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("train: smoke run completes with checkpoints and metric reports") {
    TempDir corpus_dir("corpus_smoke");
    TempDir out("out_smoke");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 24, 16, 1);

    auto rec = train(tiny_cfg(out.dir / "run"), corpus);
    CHECK(rec.losses.size() == 6);
    CHECK(rec.d_steps == 6);
    CHECK(rec.g_steps == 6);
    CHECK(rec.metrics.size() >= 1);
    CHECK(fs::exists(out.dir / "run" / "ckpt_final.msgk"));
    CHECK(fs::exists(out.dir / "run" / "run.json"));
    CHECK(fs::exists(out.dir / "run" / "ckpt_3.msgk"));
    CHECK(fs::exists(out.dir / "run" / "grid_3.png"));
    for (auto& [step, lsp] : rec.losses) {
        CHECK(std::isfinite(lsp.first));
        CHECK(std::isfinite(lsp.second));
    }
    // step-count invariant: 6 steps = 1 epoch (6 bpe) at batch 4 over 24 images
    CHECK(corpus.count() / 4 == 6);
}

TEST_CASE("train: deterministic under a fixed config and seed") {
    TempDir corpus_dir("corpus_det");
    TempDir out("out_det");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 2);

    auto cfg_a = tiny_cfg(out.dir / "a", 11);
    cfg_a.max_steps = 5;
    auto cfg_b = tiny_cfg(out.dir / "b", 11);
    cfg_b.max_steps = 5;
    auto ra = train(cfg_a, corpus);
    auto rb = train(cfg_b, corpus);
    REQUIRE(ra.losses.size() == rb.losses.size());
    CHECK(std::abs(ra.losses.back().second.first - rb.losses.back().second.first) <= 1e-5);
    for (std::size_t i = 0; i < ra.losses.size(); ++i) {
        CHECK(ra.losses[i].second.first == rb.losses[i].second.first);
        CHECK(ra.losses[i].second.second == rb.losses[i].second.second);
    }
}

TEST_CASE("train: attention at gamma=0 matches the attention-free run at step 0") {
    TempDir corpus_dir("corpus_gamma");
    TempDir out("out_gamma");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 3);

    auto cfg_off = tiny_cfg(out.dir / "off", 21);
    cfg_off.max_steps = 1;
    auto cfg_on = tiny_cfg(out.dir / "on", 21);
    cfg_on.max_steps = 1;
    cfg_on.gen.use_attention = true;
    cfg_on.disc.use_attention = true;
    auto r_off = train(cfg_off, corpus);
    auto r_on = train(cfg_on, corpus);
    CHECK(r_off.losses[0].second.first == r_on.losses[0].second.first);
}

TEST_CASE("train: wgan-gp path trains and stays finite") {
    TempDir corpus_dir("corpus_wgan");
    TempDir out("out_wgan");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 4);

    auto cfg = tiny_cfg(out.dir / "run", 31);
    cfg.loss = LossKind::wgan_gp;
    cfg.optimizer = OptKind::rmsprop;
    cfg.max_steps = 4;
    auto rec = train(cfg, corpus);
    CHECK(rec.losses.size() == 4);
    for (auto& [step, lsp] : rec.losses) {
        CHECK(std::isfinite(lsp.first));
        CHECK(std::isfinite(lsp.second));
    }
}

TEST_CASE("train: checkpoint resume reproduces the loss trajectory") {
    TempDir corpus_dir("corpus_resume");
    TempDir out("out_resume");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 5);

    auto cfg_full = tiny_cfg(out.dir / "full", 41);
    cfg_full.max_steps = 14;
    cfg_full.eval_every = 100;  // no mid-run evals
    auto full = train(cfg_full, corpus);

    auto cfg_half = tiny_cfg(out.dir / "half", 41);
    cfg_half.max_steps = 4;
    cfg_half.eval_every = 100;
    (void)train(cfg_half, corpus);

    auto cfg_rest = tiny_cfg(out.dir / "rest", 41);
    cfg_rest.max_steps = 14;
    cfg_rest.eval_every = 100;
    auto rest = train(cfg_rest, corpus, (out.dir / "half" / "ckpt_final.msgk").string());

    REQUIRE(rest.losses.size() == 10);  // steps 4..13
    for (std::size_t i = 0; i < rest.losses.size(); ++i) {
        const auto& expect = full.losses[i + 4];
        CHECK(rest.losses[i].first == expect.first);
        CHECK(rest.losses[i].second.first == expect.second.first);
        CHECK(rest.losses[i].second.second == expect.second.second);
    }
}

TEST_CASE("train: non-finite loss aborts with a diagnostic snapshot") {
    TempDir corpus_dir("corpus_abort");
    TempDir out("out_abort");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 6);

    auto cfg = tiny_cfg(out.dir / "run", 51);
    cfg.learning_rate = 1e20;  // guaranteed blow-up
    cfg.max_steps = 6;
    try {
        train(cfg, corpus);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
    CHECK(fs::exists(out.dir / "run" / "abort.json"));
}

TEST_CASE("train: an aborted run leaves the last checkpoint valid") {
    TempDir corpus_dir("corpus_abort2");
    TempDir out("out_abort2");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 12);

    auto healthy = tiny_cfg(out.dir / "run", 52);
    healthy.max_steps = 2;
    healthy.eval_every = 1;
    (void)train(healthy, corpus);
    const fs::path ckpt1 = out.dir / "run" / "ckpt_1.msgk";
    REQUIRE(fs::exists(ckpt1));

    // resume with an exploding learning rate: the continuation aborts but the
    // earlier checkpoint must stay loadable
    auto exploding = tiny_cfg(out.dir / "run2", 52);
    exploding.max_steps = 6;
    exploding.learning_rate = 1e20;
    CHECK_THROWS_AS(train(exploding, corpus, ckpt1.string()), NumericError);
    auto ck = Checkpoint::load(ckpt1);
    auto gen = generator_from_checkpoint(ck);
    CHECK(gen.parameter_count() > 0);

    // a stale partial temp file never shadows the real checkpoint
    std::ofstream(ckpt1.string() + ".tmp", std::ios::binary) << "partial garbage";
    CHECK_NOTHROW(Checkpoint::load(ckpt1));
}

TEST_CASE("checkpoint: payload survives save/load/save byte-identically") {
    TempDir out("ckpt_bytes");
    Checkpoint ck;
    ck.meta = {{"config", config_to_json(tiny_cfg(out.dir / "x"))}, {"step", 3}};
    Rng rng(61);
    Tensor<float> t({4, 3});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
    ck.tensors.emplace_back("g.fc.weight", t);
    ck.save(out.dir / "a.msgk");
    auto loaded = Checkpoint::load(out.dir / "a.msgk");
    loaded.save(out.dir / "b.msgk");
    CHECK(file_bytes(out.dir / "a.msgk") == file_bytes(out.dir / "b.msgk"));

    // corrupt magic -> not a checkpoint
    std::string bytes = file_bytes(out.dir / "a.msgk");
    bytes[0] = 'X';
    std::ofstream(out.dir / "bad.msgk", std::ios::binary) << bytes;
    CHECK_THROWS_AS(Checkpoint::load(out.dir / "bad.msgk"), ConfigError);

    // bump version -> explicit mismatch error
    bytes = file_bytes(out.dir / "a.msgk");
    bytes[4] = 9;
    std::ofstream(out.dir / "v9.msgk", std::ios::binary) << bytes;
    try {
        Checkpoint::load(out.dir / "v9.msgk");
        FAIL("expected version mismatch");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("version mismatch") != std::string::npos);
    }
}

TEST_CASE("generate_samples: deterministic files, montage, n=0") {
    TempDir corpus_dir("corpus_gen");
    TempDir out("out_gen");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 7);
    auto cfg = tiny_cfg(out.dir / "run", 71);
    cfg.max_steps = 2;
    auto rec = train(cfg, corpus);

    generate_samples(rec.final_checkpoint, 5, 9, out.dir / "s1");
    CHECK(fs::exists(out.dir / "s1" / "gen_000000.png"));
    CHECK(fs::exists(out.dir / "s1" / "gen_000004.png"));
    CHECK(fs::exists(out.dir / "s1" / "grid.png"));

    generate_samples(rec.final_checkpoint, 5, 9, out.dir / "s2");
    for (int i = 0; i < 5; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "gen_%06d.png", i);
        CHECK(file_bytes(out.dir / "s1" / name) == file_bytes(out.dir / "s2" / name));
    }

    generate_samples(rec.final_checkpoint, 0, 9, out.dir / "s3");
    CHECK(fs::exists(out.dir / "s3"));
    CHECK(fs::is_empty(out.dir / "s3"));

    // different seed differs
    generate_samples(rec.final_checkpoint, 1, 10, out.dir / "s4");
    CHECK(file_bytes(out.dir / "s4" / "gen_000000.png") !=
          file_bytes(out.dir / "s1" / "gen_000000.png"));
}

TEST_CASE("evaluate: a corpus against itself gives FID 0 and no collapse flag") {
    TempDir corpus_dir("corpus_eval");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 12, 16, 8);
    auto imgs = load_metric_images(corpus, 16);
    IdentityExtractor ex(16, 16);
    auto rep = evaluate_images(imgs, imgs, 3, ex, 0);
    CHECK(rep.fid <= 1e-6);
    CHECK(rep.ms_ssim_real == rep.ms_ssim_gen);
    CHECK_FALSE(rep.mode_collapse);
    CHECK(rep.n_real == 12);
    CHECK(rep.n_gen == 12);
}

TEST_CASE("evaluate_run: end-to-end from a checkpoint") {
    TempDir corpus_dir("corpus_evalrun");
    TempDir out("out_evalrun");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 12, 16, 9);
    auto cfg = tiny_cfg(out.dir / "run", 81);
    cfg.max_steps = 2;
    auto rec = train(cfg, corpus);
    auto rep = evaluate_run(rec.final_checkpoint, corpus, 5, "identity", 0, 12);
    CHECK(rep.n_real == 12);
    CHECK(rep.n_gen == 12);
    CHECK(std::isfinite(rep.fid));
    CHECK(rep.ms_ssim_real > 0.0);
    CHECK(rep.ms_ssim_real <= 1.0);

    auto rep2 = evaluate_run(rec.final_checkpoint, corpus, 5, "identity", 0, 12);
    CHECK(rep.fid == rep2.fid);
    CHECK(rep.ms_ssim_gen == rep2.ms_ssim_gen);
}

TEST_CASE("ablation: matrix parse, csv schema and reproducible bytes") {
    TempDir corpus_dir("corpus_abl");
    TempDir out("out_abl");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 10);

    std::ofstream(out.dir / "matrix.csv")
        << "name,pn,sn,mbd,am,fa,opt,lr,loss\n"
        << "toy_hinge,1,0,1,0,0,adam,0.0001,rl_hinge\n"
        << "toy_attn,1,0,1,1,0,adam,0.0001,rl_hinge\n";
    auto rows = parse_ablation_matrix(out.dir / "matrix.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].name == "toy_hinge");
    CHECK(rows[1].attention);

    auto base = tiny_cfg(out.dir / "base", 91);
    base.max_steps = 2;
    base.paper_grid = true;  // 0.0001 is in the studied grid
    auto results = run_ablation(rows, base, corpus, out.dir / "m1");
    REQUIRE(results.size() == 2);
    CHECK(results[0].ok);
    CHECK(results[1].ok);

    const std::string csv = file_bytes(out.dir / "m1" / "results.csv");
    CHECK(csv.rfind("name,PN,SN,MBD,AM,FA,Opt,LR,Loss,FID,MR,MG\n", 0) == 0);
    CHECK(csv.find("toy_hinge,1,0,1,0,0,Adam,0.0001,RLHinge,") != std::string::npos);
    CHECK(fs::exists(out.dir / "m1" / "summary.json"));

    auto results2 = run_ablation(rows, base, corpus, out.dir / "m2");
    CHECK(file_bytes(out.dir / "m1" / "results.csv") ==
          file_bytes(out.dir / "m2" / "results.csv"));

    CHECK_THROWS_AS(run_ablation({}, base, corpus, out.dir / "m3"), ConfigError);

    std::ofstream(out.dir / "bad.csv") << "name,pn\nrow,1\n";
    CHECK_THROWS_AS(parse_ablation_matrix(out.dir / "bad.csv"), ConfigError);
}

TEST_CASE("ablation: paper-grid learning-rate invariant is enforced") {
    TempDir corpus_dir("corpus_grid");
    TempDir out("out_grid");
    auto corpus = make_blob_corpus(corpus_dir.dir / "imgs", 16, 16, 11);
    std::ofstream(out.dir / "matrix.csv") << "name,pn,sn,mbd,am,fa,opt,lr,loss\n"
                                          << "off_grid,1,0,1,0,0,adam,0.005,rl_hinge\n";
    auto rows = parse_ablation_matrix(out.dir / "matrix.csv");
    auto base = tiny_cfg(out.dir / "base", 92);
    base.max_steps = 1;
    base.paper_grid = true;
    auto results = run_ablation(rows, base, corpus, out.dir / "m");
    REQUIRE(results.size() == 1);
    CHECK_FALSE(results[0].ok);  // failure recorded, matrix continues
    const std::string csv = file_bytes(out.dir / "m" / "results.csv");
    CHECK(csv.find("off_grid,") != std::string::npos);
    CHECK(csv.find("nan,nan,nan") != std::string::npos);
}

TEST_CASE("config file: flat key=value parsing") {
    TempDir out("cfgfile");
    std::ofstream(out.dir / "run.cfg") << R"(# smoke run
seed = 9
out_dir = runs/demo
epochs = 2
max_steps = 100
batch_size = 8
learning_rate = 0.0003
optimizer = rmsprop
loss = wgan_gp
flip_augment = true
scales = 4, 8, 16
gen_channels = 32,16,8
disc_channels = 32,16,8
latent_dim = 64
use_attention = true
attention_scales = 8,16
use_spectral_norm = true
extractor = identity
data_root = /data/xray
)";
    auto fc = parse_run_config(out.dir / "run.cfg");
    CHECK(fc.run.seed == 9);
    CHECK(fc.run.out_dir == "runs/demo");
    CHECK(fc.run.epochs == 2);
    CHECK(fc.run.max_steps == 100);
    CHECK(fc.run.batch_size == 8);
    CHECK(fc.run.learning_rate == 0.0003);
    CHECK(fc.run.optimizer == OptKind::rmsprop);
    CHECK(fc.run.loss == LossKind::wgan_gp);
    CHECK(fc.run.flip_augment);
    CHECK(fc.run.gen.scales == std::vector<std::size_t>{4, 8, 16});
    CHECK(fc.run.disc.scales == fc.run.gen.scales);
    CHECK(fc.run.gen.channels == std::vector<std::size_t>{32, 16, 8});
    CHECK(fc.run.gen.latent_dim == 64);
    CHECK(fc.run.gen.use_attention);
    CHECK(fc.run.disc.use_attention);
    CHECK(fc.run.gen.attention_scales == std::vector<std::size_t>{8, 16});
    CHECK(fc.run.gen.use_spectral_norm);
    CHECK(fc.run.disc.use_spectral_norm);
    CHECK(fc.data_root == "/data/xray");

    std::ofstream(out.dir / "bad.cfg") << "unknown_key = 3\n";
    CHECK_THROWS_AS(parse_run_config(out.dir / "bad.cfg"), ConfigError);
    std::ofstream(out.dir / "bad2.cfg") << "seed nine\n";
    CHECK_THROWS_AS(parse_run_config(out.dir / "bad2.cfg"), ConfigError);

    // config echo round trip
    auto cfg = fc.run;
    cfg.out_dir = "x";
    auto back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
}
