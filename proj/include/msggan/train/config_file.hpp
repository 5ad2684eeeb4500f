#pragma once

#include <fstream>
#include <map>
#include <string>

#include "msggan/train/harness.hpp"

namespace msggan {

// Flat `key = value` run configuration: one assignment per line, `#`
// comments, comma-separated lists. Unknown keys are rejected.
struct FileConfig {
    RunConfig run;
    std::string data_root;  // may also come from MSGGAN_DATA_ROOT
};

namespace detail {

inline std::string trim(std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

inline std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& key) {
    std::vector<std::size_t> out;
    std::string cur;
    for (char c : v + ",") {
        if (c == ',') {
            const std::string t = trim(cur);
            if (!t.empty()) {
                try {
                    out.push_back(std::stoull(t));
                } catch (...) {
                    throw ConfigError("config: bad integer '" + t + "' in " + key);
                }
            }
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

}  // namespace detail

inline FileConfig parse_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());

    FileConfig fc;
    RunConfig& c = fc.run;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              " is not key = value: " + line);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));

        try {
            if (key == "seed") c.seed = std::stoull(val);
            else if (key == "out_dir") c.out_dir = val;
            else if (key == "data_root") fc.data_root = val;
            else if (key == "epochs") c.epochs = std::stoull(val);
            else if (key == "max_steps") c.max_steps = std::stoull(val);
            else if (key == "batch_size") c.batch_size = std::stoull(val);
            else if (key == "learning_rate") c.learning_rate = std::stod(val);
            else if (key == "optimizer") c.optimizer = opt_from_string(val);
            else if (key == "loss") c.loss = loss_from_string(val);
            else if (key == "adam_beta1") c.adam_beta1 = std::stod(val);
            else if (key == "adam_beta2") c.adam_beta2 = std::stod(val);
            else if (key == "rmsprop_decay") c.rmsprop_decay = std::stod(val);
            else if (key == "opt_eps") c.opt_eps = std::stod(val);
            else if (key == "gp_lambda") c.gp_lambda = std::stod(val);
            else if (key == "flip_augment") c.flip_augment = detail::parse_bool(val, key);
            else if (key == "eval_every") c.eval_every = std::stoull(val);
            else if (key == "extractor") c.extractor = val;
            else if (key == "n_pairs") c.n_pairs = std::stoull(val);
            else if (key == "eval_samples") c.eval_samples = std::stoull(val);
            else if (key == "paper_grid") c.paper_grid = detail::parse_bool(val, key);
            else if (key == "latent_dim") c.gen.latent_dim = std::stoull(val);
            else if (key == "scales") {
                c.gen.scales = detail::parse_size_list(val, key);
                c.disc.scales = c.gen.scales;
            } else if (key == "gen_channels") c.gen.channels = detail::parse_size_list(val, key);
            else if (key == "disc_channels") c.disc.channels = detail::parse_size_list(val, key);
            else if (key == "use_pixel_norm") c.gen.use_pixel_norm = detail::parse_bool(val, key);
            else if (key == "use_spectral_norm") {
                const bool b = detail::parse_bool(val, key);
                c.gen.use_spectral_norm = b;
                c.disc.use_spectral_norm = b;
            } else if (key == "use_attention") {
                const bool b = detail::parse_bool(val, key);
                c.gen.use_attention = b;
                c.disc.use_attention = b;
            } else if (key == "use_minibatch_stddev")
                c.disc.use_minibatch_stddev = detail::parse_bool(val, key);
            else if (key == "use_equalized_lr") {
                const bool b = detail::parse_bool(val, key);
                c.gen.use_equalized_lr = b;
                c.disc.use_equalized_lr = b;
            } else if (key == "attention_scales") {
                c.gen.attention_scales = detail::parse_size_list(val, key);
                c.disc.attention_scales = c.gen.attention_scales;
            } else if (key == "attention_k") {
                c.gen.attention_k = std::stoull(val);
                c.disc.attention_k = c.gen.attention_k;
            } else
                throw ConfigError("config: unknown key '" + key + "' at line " +
                                  std::to_string(lineno));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config: bad value '" + val + "' for " + key + " at line " +
                              std::to_string(lineno));
        }
    }
    return fc;
}

}  // namespace msggan
