#pragma once

#include <cstdio>
#include <iostream>

#include "msggan/train/harness.hpp"

namespace msggan {

// One row of the ablation grid: the toggles studied in the evaluation table.
struct AblationRow {
    std::string name;
    bool pixel_norm = true;
    bool spectral_norm = false;
    bool minibatch_stddev = true;
    bool attention = false;
    bool flip_augment = false;
    OptKind optimizer = OptKind::adam;
    double learning_rate = 1e-4;
    LossKind loss = LossKind::rl_hinge;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        while (!f.empty() && f.front() == ' ') f.erase(f.begin());
        while (!f.empty() && f.back() == ' ') f.pop_back();
    }
    return out;
}

inline bool parse_flag(const std::string& s, const std::string& field) {
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no" || s == "x") return false;
    throw ConfigError("ablation matrix: bad flag '" + s + "' for " + field);
}

}  // namespace detail

// Matrix CSV columns: name,pn,sn,mbd,am,fa,opt,lr,loss (header required).
inline std::vector<AblationRow> parse_ablation_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open ablation matrix: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty ablation matrix: " + path.string());
    const auto header = detail::split_csv_line(line);
    const std::vector<std::string> expect = {"name", "pn", "sn", "mbd", "am",
                                             "fa",   "opt", "lr", "loss"};
    if (header.size() != expect.size())
        throw ConfigError("ablation matrix header must be name,pn,sn,mbd,am,fa,opt,lr,loss");
    for (std::size_t i = 0; i < expect.size(); ++i)
        if (header[i] != expect[i])
            throw ConfigError("ablation matrix header column " + std::to_string(i) +
                              " must be '" + expect[i] + "', got '" + header[i] + "'");
    std::vector<AblationRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != expect.size())
            throw ConfigError("ablation matrix row has " + std::to_string(f.size()) +
                              " fields: " + line);
        AblationRow r;
        r.name = f[0];
        r.pixel_norm = detail::parse_flag(f[1], "pn");
        r.spectral_norm = detail::parse_flag(f[2], "sn");
        r.minibatch_stddev = detail::parse_flag(f[3], "mbd");
        r.attention = detail::parse_flag(f[4], "am");
        r.flip_augment = detail::parse_flag(f[5], "fa");
        r.optimizer = opt_from_string(f[6]);
        r.learning_rate = std::stod(f[7]);
        r.loss = loss_from_string(f[8]);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ConfigError("ablation matrix has no rows: " + path.string());
    return rows;
}

inline RunConfig apply_row(RunConfig base, const AblationRow& row) {
    base.gen.use_pixel_norm = row.pixel_norm;
    base.gen.use_spectral_norm = row.spectral_norm;
    base.gen.use_attention = row.attention;
    base.disc.use_spectral_norm = row.spectral_norm;
    base.disc.use_attention = row.attention;
    base.disc.use_minibatch_stddev = row.minibatch_stddev;
    base.flip_augment = row.flip_augment;
    base.optimizer = row.optimizer;
    base.learning_rate = row.learning_rate;
    base.loss = row.loss;
    base.out_dir = base.out_dir + "/" + row.name;
    return base;
}

struct AblationResult {
    AblationRow row;
    bool ok = false;
    std::string error;
    MetricReport report;
    RunRecord record;
};

namespace detail {

inline std::string format_metric(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string format_lr(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace detail

// Fixed column order; metric fields are nan for failed runs.
inline std::string ablation_csv(const std::vector<AblationResult>& results) {
    std::string csv = "name,PN,SN,MBD,AM,FA,Opt,LR,Loss,FID,MR,MG\n";
    for (const auto& r : results) {
        csv += r.row.name + ",";
        csv += std::string(r.row.pixel_norm ? "1" : "0") + ",";
        csv += std::string(r.row.spectral_norm ? "1" : "0") + ",";
        csv += std::string(r.row.minibatch_stddev ? "1" : "0") + ",";
        csv += std::string(r.row.attention ? "1" : "0") + ",";
        csv += std::string(r.row.flip_augment ? "1" : "0") + ",";
        csv += (r.row.optimizer == OptKind::adam ? "Adam" : "RMSprop") + std::string(",");
        csv += detail::format_lr(r.row.learning_rate) + ",";
        csv += (r.row.loss == LossKind::rl_hinge ? "RLHinge" : "WGAN-GP") + std::string(",");
        if (r.ok) {
            csv += detail::format_metric(r.report.fid) + ",";
            csv += detail::format_metric(r.report.ms_ssim_real) + ",";
            csv += detail::format_metric(r.report.ms_ssim_gen);
        } else {
            csv += "nan,nan,nan";
        }
        csv += "\n";
    }
    return csv;
}

// Runs every row sequentially against the shared base config; a failed row
// is recorded and the matrix continues. Emits the fixed-schema CSV plus a
// summary flagging the best FID and best generated-MS-SSIM rows.
inline std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& rows,
                                                const RunConfig& base,
                                                const DatasetManifest& corpus,
                                                const std::filesystem::path& out_dir) {
    if (rows.empty()) throw ConfigError("run_ablation: empty matrix");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::vector<AblationResult> results;
    for (const auto& row : rows) {
        AblationResult res;
        res.row = row;
        try {
            RunConfig cfg = apply_row(base, row);
            cfg.out_dir = (out_dir / row.name).string();
            cfg.validate();
            res.record = train(cfg, corpus);
            if (res.record.metrics.empty())
                throw NumericError("run produced no metric report");
            res.report = res.record.metrics.back().second;
            res.ok = true;
        } catch (const std::exception& e) {
            res.error = e.what();
            std::cerr << "[msggan] ablation row '" << row.name << "' failed: " << e.what()
                      << "\n";
        }
        results.push_back(std::move(res));
    }

    std::ofstream(out_dir / "results.csv") << ablation_csv(results);

    // best rows, flagged outside the pinned CSV schema
    const AblationResult* best_fid = nullptr;
    const AblationResult* best_mg = nullptr;
    for (const auto& r : results) {
        if (!r.ok) continue;
        if (!best_fid || r.report.fid < best_fid->report.fid) best_fid = &r;
        if (!best_mg || r.report.ms_ssim_gen < best_mg->report.ms_ssim_gen) best_mg = &r;
    }
    nlohmann::json summary;
    summary["rows"] = results.size();
    summary["failed"] = [&] {
        std::size_t n = 0;
        for (const auto& r : results) n += r.ok ? 0 : 1;
        return n;
    }();
    if (best_fid) {
        summary["best_fid"] = {{"name", best_fid->row.name}, {"fid", best_fid->report.fid}};
        std::cout << "[msggan] best FID: " << best_fid->row.name << " ("
                  << detail::format_metric(best_fid->report.fid) << ")\n";
    }
    if (best_mg) {
        summary["best_ms_ssim_gen"] = {{"name", best_mg->row.name},
                                       {"ms_ssim_gen", best_mg->report.ms_ssim_gen}};
        std::cout << "[msggan] best generated MS-SSIM: " << best_mg->row.name << " ("
                  << detail::format_metric(best_mg->report.ms_ssim_gen) << ")\n";
    }
    std::ofstream(out_dir / "summary.json") << summary.dump(2) << "\n";
    return results;
}

}  // namespace msggan
