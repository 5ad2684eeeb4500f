#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "msggan/train/ablation.hpp"
#include "msggan/train/config_file.hpp"

namespace {

using namespace msggan;
namespace fs = std::filesystem;

// Corpus root resolution order: explicit flag, config value, environment.
std::string resolve_data_root(const std::string& flag_value, const std::string& config_value) {
    if (!flag_value.empty()) return flag_value;
    if (!config_value.empty()) return config_value;
    if (const char* env = std::getenv("MSGGAN_DATA_ROOT")) return env;
    throw ConfigError(
        "no corpus root: pass --data-root, set data_root in the config, or export "
        "MSGGAN_DATA_ROOT");
}

DatasetManifest open_corpus(const std::string& root) {
    const fs::path dir(root);
    const fs::path sidecar = dir / "manifest.json";
    DatasetManifest m = scan_corpus(dir);
    // cache the manifest next to the corpus; refreshed when the scan differs
    if (fs::exists(sidecar)) {
        try {
            DatasetManifest cached = load_manifest(sidecar);
            if (cached.checksum == m.checksum) return cached;
        } catch (const std::exception&) {
            // fall through and rewrite
        }
    }
    save_manifest(m, sidecar);
    return m;
}

std::vector<MetricImage> metric_images_from_dir(const std::string& dir, std::size_t resolution) {
    auto manifest = scan_corpus(dir);
    // drop the inspection montage that `generate` writes next to its samples
    std::erase_if(manifest.files, [](const std::string& f) {
        return f == "grid.png" || f.size() >= 9 && f.rfind("/grid.png") == f.size() - 9;
    });
    if (manifest.files.empty()) throw IngestionError("no sample images under " + dir);
    return load_metric_images(manifest, resolution);
}

int run_train(const std::string& config_path, const std::string& data_root_flag,
              const std::string& resume) {
    FileConfig fc = parse_run_config(config_path);
    fc.run.validate();
    const auto corpus = open_corpus(resolve_data_root(data_root_flag, fc.data_root));
    std::cout << "[msggan] corpus: " << corpus.count() << " images, checksum " << corpus.checksum
              << "\n";
    auto progress = [](std::size_t step, std::size_t total, double ld, double lg) {
        if (step % 50 == 0 || step == total)
            std::cout << "[msggan] step " << step << "/" << total << "  L_D " << ld << "  L_G "
                      << lg << "\n";
    };
    RunRecord rec = train(fc.run, corpus, resume, progress);
    const auto& final_report = rec.metrics.back().second;
    std::cout << "[msggan] done in " << rec.wall_seconds << "s; final FID " << final_report.fid
              << ", MS-SSIM real " << final_report.ms_ssim_real << ", generated "
              << final_report.ms_ssim_gen
              << (final_report.mode_collapse ? " (mode collapse)" : "") << "\n"
              << "[msggan] run record: " << fc.run.out_dir << "/run.json\n";
    return 0;
}

int run_ablate(const std::string& matrix_path, const std::string& config_path,
               const std::string& data_root_flag, std::string out_dir) {
    FileConfig fc = parse_run_config(config_path);
    const auto rows = parse_ablation_matrix(matrix_path);
    const auto corpus = open_corpus(resolve_data_root(data_root_flag, fc.data_root));
    if (out_dir.empty()) out_dir = fc.run.out_dir;
    if (out_dir.empty()) throw ConfigError("no output directory: pass --out or set out_dir");
    auto results = run_ablation(rows, fc.run, corpus, out_dir);
    std::size_t failed = 0;
    for (const auto& r : results) failed += r.ok ? 0 : 1;
    std::cout << "[msggan] " << results.size() << " runs, " << failed << " failed; table at "
              << out_dir << "/results.csv\n";
    return 0;
}

int run_generate(const std::string& ckpt, std::size_t n, std::uint64_t seed,
                 const std::string& out_dir) {
    generate_samples(ckpt, n, seed, out_dir);
    std::cout << "[msggan] wrote " << n << " samples to " << out_dir << "\n";
    return 0;
}

int run_evaluate(const std::string& ckpt, const std::string& gen_dir,
                 const std::string& real_dir_flag, std::size_t n_pairs, std::uint64_t seed,
                 const std::string& extractor, const std::string& out_path) {
    const std::string real_dir = resolve_data_root(real_dir_flag, "");
    const auto corpus = open_corpus(real_dir);
    MetricReport rep;
    if (!ckpt.empty()) {
        rep = evaluate_run(ckpt, corpus, seed, extractor, n_pairs);
    } else if (!gen_dir.empty()) {
        auto real = load_metric_images(corpus, 64);
        auto gen = metric_images_from_dir(gen_dir, 64);
        auto ex = make_extractor(extractor, 64, 64);
        rep = evaluate_images(real, gen, seed, *ex, n_pairs);
    } else {
        throw ConfigError("evaluate needs --ckpt or --gen-dir");
    }
    const auto j = rep.to_json();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw ConfigError("cannot write report: " + out_path);
        out << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int fail_with(const char* kind, const std::exception& e, int code) {
    nlohmann::json err = {{"error", kind}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"msggan: multi-scale gradient GANs with self-attention for grayscale "
                 "image synthesis"};
    app.require_subcommand(1);

    std::string config_path, data_root, resume, matrix_path, out_dir;
    std::string ckpt, gen_dir, extractor = "identity", report_out;
    std::size_t n = 3616, n_pairs = 0;
    std::uint64_t seed = 0;

    auto* tr = app.add_subcommand("train", "train one run from a flat config file");
    tr->add_option("--config", config_path, "run configuration file")->required();
    tr->add_option("--data-root", data_root, "corpus directory (overrides config/env)");
    tr->add_option("--resume", resume, "checkpoint to resume from");

    auto* ab = app.add_subcommand("ablate", "run an ablation matrix against a base config");
    ab->add_option("--matrix", matrix_path, "CSV matrix: name,pn,sn,mbd,am,fa,opt,lr,loss")
        ->required();
    ab->add_option("--config", config_path, "base run configuration file")->required();
    ab->add_option("--data-root", data_root, "corpus directory (overrides config/env)");
    ab->add_option("--out", out_dir, "output directory for the table and runs");

    auto* ge = app.add_subcommand("generate", "sample PNGs from a checkpoint");
    ge->add_option("--ckpt", ckpt, "checkpoint file")->required();
    ge->add_option("--n", n, "number of samples");
    ge->add_option("--seed", seed, "sampling seed");
    ge->add_option("--out", out_dir, "output directory")->required();

    auto* ev = app.add_subcommand("evaluate", "MS-SSIM / FID / mode-collapse report");
    ev->add_option("--ckpt", ckpt, "checkpoint to sample from");
    ev->add_option("--gen-dir", gen_dir, "directory of pre-generated images");
    ev->add_option("--real-dir", data_root, "directory of real images (or MSGGAN_DATA_ROOT)");
    ev->add_option("--n-pairs", n_pairs, "MS-SSIM pairs (0 = floor(N/2))");
    ev->add_option("--seed", seed, "pair-sampling / generation seed");
    ev->add_option("--extractor", extractor, "feature extractor: standard|identity")
        ->check(CLI::IsMember({"standard", "identity"}));
    ev->add_option("--out", report_out, "write the report JSON here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (tr->parsed()) return run_train(config_path, data_root, resume);
        if (ab->parsed()) return run_ablate(matrix_path, config_path, data_root, out_dir);
        if (ge->parsed()) return run_generate(ckpt, n, seed, out_dir);
        if (ev->parsed())
            return run_evaluate(ckpt, gen_dir, data_root, n_pairs, seed, extractor, report_out);
    } catch (const ConfigError& e) {
        return fail_with("config", e, 2);
    } catch (const NumericError& e) {
        return fail_with("numeric", e, 3);
    } catch (const IngestionError& e) {
        return fail_with("ingestion", e, 4);
    } catch (const EnvironmentError& e) {
        return fail_with("environment", e, 5);
    } catch (const std::exception& e) {
        return fail_with("internal", e, 1);
    }
    return 0;
}
