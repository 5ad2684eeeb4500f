#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cstdint>
#include <iostream>
#include <memory>
#include <vector>

#include <json.hpp>

#include "msggan/core/errors.hpp"
#include "msggan/core/rng.hpp"
#include "msggan/data/image.hpp"

namespace msggan {

// Metric computations run in double precision regardless of the model
// scalar; images arrive as [0, L] grayscale planes.
using MetricImage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// MS-SSIM
// ---------------------------------------------------------------------------

inline std::vector<double> msssim_weights(int num_scales) {
    // canonical five-scale weights, truncated and renormalized
    static const double canonical[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    if (num_scales < 1 || num_scales > 5)
        throw ConfigError("ms-ssim: num_scales must be in [1,5]");
    double sum = 0;
    for (int i = 0; i < num_scales; ++i) sum += canonical[i];
    std::vector<double> w(num_scales);
    for (int i = 0; i < num_scales; ++i) w[i] = canonical[i] / sum;
    return w;
}

struct MsSsimConfig {
    int num_scales = 3;
    std::vector<double> weights = msssim_weights(3);
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double value_range = 1.0;  // L

    void validate() const {
        if (num_scales < 1) throw ConfigError("ms-ssim: num_scales must be positive");
        if (static_cast<int>(weights.size()) != num_scales)
            throw ConfigError("ms-ssim: weights length must equal num_scales");
        double sum = 0;
        for (double w : weights) sum += w;
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("ms-ssim: weights must sum to 1");
        if (window % 2 == 0 || window < 3) throw ConfigError("ms-ssim: window must be odd >= 3");
        if (value_range <= 0 || sigma <= 0) throw ConfigError("ms-ssim: bad constants");
    }

    std::size_t min_resolution() const {
        return static_cast<std::size_t>(window) << (num_scales - 1);
    }
};

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(size);
    const double c = (size - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable valid-mode correlation with a 1-D window applied on both axes.
inline MetricImage filter_valid(const MetricImage& img, const std::vector<double>& w) {
    const long k = static_cast<long>(w.size());
    const long oh = img.rows() - k + 1, ow = img.cols() - k + 1;
    MetricImage tmp(img.rows(), ow);
    for (long y = 0; y < img.rows(); ++y)
        for (long x = 0; x < ow; ++x) {
            double acc = 0;
            for (long i = 0; i < k; ++i) acc += w[i] * img(y, x + i);
            tmp(y, x) = acc;
        }
    MetricImage out(oh, ow);
    for (long y = 0; y < oh; ++y)
        for (long x = 0; x < ow; ++x) {
            double acc = 0;
            for (long i = 0; i < k; ++i) acc += w[i] * tmp(y + i, x);
            out(y, x) = acc;
        }
    return out;
}

inline MetricImage downsample2(const MetricImage& img) {
    MetricImage out(img.rows() / 2, img.cols() / 2);
    for (long y = 0; y < out.rows(); ++y)
        for (long x = 0; x < out.cols(); ++x)
            out(y, x) = (img(2 * y, 2 * x) + img(2 * y, 2 * x + 1) + img(2 * y + 1, 2 * x) +
                         img(2 * y + 1, 2 * x + 1)) /
                        4.0;
    return out;
}

struct SsimTerms {
    double luminance, contrast, structure;
};

inline SsimTerms ssim_terms(const MetricImage& a, const MetricImage& b, const MsSsimConfig& cfg) {
    const auto w = gaussian_window(cfg.window, cfg.sigma);
    const double c1 = (cfg.k1 * cfg.value_range) * (cfg.k1 * cfg.value_range);
    const double c2 = (cfg.k2 * cfg.value_range) * (cfg.k2 * cfg.value_range);
    const double c3 = c2 / 2.0;

    const MetricImage mu_a = filter_valid(a, w);
    const MetricImage mu_b = filter_valid(b, w);
    const MetricImage aa = filter_valid(MetricImage(a.cwiseProduct(a)), w);
    const MetricImage bb = filter_valid(MetricImage(b.cwiseProduct(b)), w);
    const MetricImage ab = filter_valid(MetricImage(a.cwiseProduct(b)), w);

    double lum = 0, con = 0, str = 0;
    const long n = mu_a.rows() * mu_a.cols();
    for (long y = 0; y < mu_a.rows(); ++y)
        for (long x = 0; x < mu_a.cols(); ++x) {
            const double ma = mu_a(y, x), mb = mu_b(y, x);
            const double va = std::max(0.0, aa(y, x) - ma * ma);
            const double vb = std::max(0.0, bb(y, x) - mb * mb);
            const double cov = ab(y, x) - ma * mb;
            const double sa = std::sqrt(va), sb = std::sqrt(vb);
            lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            con += (2.0 * sa * sb + c2) / (va + vb + c2);
            str += (cov + c3) / (sa * sb + c3);
        }
    return {lum / n, con / n, str / n};
}

}  // namespace detail

// MS-SSIM(a,b) = l_M^{w_M} * prod_j c_j^{w_j} s_j^{w_j}; contrast/structure
// at every scale, luminance at the coarsest only, each coarser scale obtained
// by 2x2 mean downsampling. Negative structure means are floored at 0 and the
// result is clamped to [0,1].
inline double ms_ssim_pair(const MetricImage& a, const MetricImage& b,
                           const MsSsimConfig& cfg = MsSsimConfig{}) {
    cfg.validate();
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ConfigError("ms_ssim_pair: image sizes differ");
    if (static_cast<std::size_t>(std::min(a.rows(), a.cols())) < cfg.min_resolution())
        throw ConfigError("ms_ssim_pair: resolution " + std::to_string(a.rows()) +
                          " too small for " + std::to_string(cfg.num_scales) +
                          " scales with window " + std::to_string(cfg.window) +
                          " (needs >= " + std::to_string(cfg.min_resolution()) + ")");
    if (!a.allFinite() || !b.allFinite()) throw NumericError("ms_ssim_pair: non-finite input");

    MetricImage ca = a, cb = b;
    double score = 1.0;
    for (int j = 0; j < cfg.num_scales; ++j) {
        const auto t = detail::ssim_terms(ca, cb, cfg);
        const double w = cfg.weights[j];
        score *= std::pow(std::max(0.0, t.contrast), w);
        score *= std::pow(std::max(0.0, t.structure), w);
        if (j == cfg.num_scales - 1) score *= std::pow(std::max(0.0, t.luminance), w);
        if (j + 1 < cfg.num_scales) {
            ca = detail::downsample2(ca);
            cb = detail::downsample2(cb);
        }
    }
    return std::min(1.0, std::max(0.0, score));
}

// Mean pairwise MS-SSIM over seeded random pairs (a != b). n_pairs = 0 picks
// the default floor(N/2) disjoint pairs; larger values fall back to
// independent resampling of distinct pairs.
inline double ms_ssim_dataset(const std::vector<MetricImage>& images, std::size_t n_pairs,
                              std::uint64_t seed, const MsSsimConfig& cfg = MsSsimConfig{}) {
    const std::size_t n = images.size();
    if (n < 2) throw ConfigError("ms_ssim_dataset: need at least 2 images");
    if (n_pairs == 0) n_pairs = n / 2;

    Rng rng(seed);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n_pairs);
    if (n_pairs <= n / 2) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t p = 0; p < n_pairs; ++p) pairs.emplace_back(idx[2 * p], idx[2 * p + 1]);
    } else {
        for (std::size_t p = 0; p < n_pairs; ++p) {
            const std::size_t i = rng.uniform_int(n);
            std::size_t j = rng.uniform_int(n - 1);
            if (j >= i) ++j;
            pairs.emplace_back(i, j);
        }
    }

    double sum = 0;
    for (const auto& [i, j] : pairs) sum += ms_ssim_pair(images[i], images[j], cfg);
    return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Feature extraction and FID
// ---------------------------------------------------------------------------

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::size_t dim() const = 0;
    // 0 means "consume images at their native resolution"; otherwise inputs
    // are resized (bilinear, half-pixel convention) before extraction.
    virtual std::size_t native_resolution() const { return 0; }
    virtual void extract(const MetricImage& img, double* out) const = 0;
    virtual std::string name() const = 0;
};

// Test seam: features are the raw pixels, row-major.
class IdentityExtractor final : public FeatureExtractor {
public:
    IdentityExtractor(std::size_t h, std::size_t w) : h_(h), w_(w) {}
    std::size_t dim() const override { return h_ * w_; }
    void extract(const MetricImage& img, double* out) const override {
        if (static_cast<std::size_t>(img.rows()) != h_ ||
            static_cast<std::size_t>(img.cols()) != w_)
            throw ConfigError("identity extractor: image size mismatch");
        for (long y = 0; y < img.rows(); ++y)
            for (long x = 0; x < img.cols(); ++x) out[y * img.cols() + x] = img(y, x);
    }
    std::string name() const override { return "identity"; }

private:
    std::size_t h_, w_;
};

// The standard backend embeds images with the last pooling layer of a
// pretrained Inception-V3 (2048-d). No weights ship with this build and none
// can be fetched offline, so constructing it reports the environment gap with
// remediation instead of silently producing garbage features.
class InceptionV3Extractor final : public FeatureExtractor {
public:
    InceptionV3Extractor() {
        throw EnvironmentError(
            "standard feature extractor unavailable: the Inception-V3 backend needs "
            "pretrained weights which are not bundled with this build. Use "
            "--extractor identity for offline runs, or inject a FeatureExtractor "
            "through the library API (metrics::extract_features accepts any backend).");
    }
    std::size_t dim() const override { return 2048; }
    std::size_t native_resolution() const override { return 299; }
    void extract(const MetricImage&, double*) const override {}
    std::string name() const override { return "inception-v3"; }
};

inline std::unique_ptr<FeatureExtractor> make_extractor(const std::string& kind, std::size_t h,
                                                        std::size_t w) {
    if (kind == "identity") return std::make_unique<IdentityExtractor>(h, w);
    if (kind == "standard") return std::make_unique<InceptionV3Extractor>();
    throw ConfigError("unknown extractor '" + kind + "' (expected standard|identity)");
}

// One feature row per image. Warns when the row count is too small for a
// well-conditioned covariance.
inline Eigen::MatrixXd extract_features(const std::vector<MetricImage>& images,
                                        const FeatureExtractor& extractor) {
    if (images.empty()) throw ConfigError("extract_features: no images");
    const std::size_t d = extractor.dim();
    if (images.size() < d + 1)
        std::cerr << "[msggan] warning: " << images.size() << " images for " << d
                  << "-d features; covariance will be rank-deficient (want >= " << (d + 1)
                  << ")\n";
    Eigen::MatrixXd out(images.size(), d);
    const std::size_t native = extractor.native_resolution();
    std::vector<double> row(d);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (native != 0 && (images[i].rows() != static_cast<long>(native) ||
                            images[i].cols() != static_cast<long>(native))) {
            MetricImage resized(native, native);
            bilinear_resize_plane(images[i].data(), images[i].rows(), images[i].cols(),
                                  resized.data(), native, native);
            extractor.extract(resized, row.data());
        } else {
            extractor.extract(images[i], row.data());
        }
        for (std::size_t j = 0; j < d; ++j) out(i, j) = row[j];
        if (!out.row(i).allFinite()) throw ConfigError("extract_features: non-finite features");
    }
    return out;
}

namespace detail {

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (long i = 0; i < ev.size(); ++i) ev(i) = std::sqrt(std::max(0.0, ev(i)));
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// ||mu_r - mu_s||^2 + Tr(S_r + S_s - 2 (S_r S_s)^{1/2}) with empirical means
// and unbiased covariances; the product square root is evaluated through the
// symmetrized form sqrt(S_r)^T S_s sqrt(S_r) with negative eigenvalues
// clipped at zero. Reported clamped at 0.
inline double fid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& gen) {
    if (real.cols() != gen.cols()) throw ConfigError("fid: feature dimensions differ");
    if (real.rows() < 2 || gen.rows() < 2) throw ConfigError("fid: need at least 2 rows each");
    if (!real.allFinite() || !gen.allFinite()) throw ConfigError("fid: non-finite features");

    const auto moments = [](const Eigen::MatrixXd& x) {
        Eigen::VectorXd mu = x.colwise().mean();
        Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
        Eigen::MatrixXd sigma =
            (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
        return std::make_pair(std::move(mu), std::move(sigma));
    };
    const auto [mu_r, sig_r] = moments(real);
    const auto [mu_s, sig_s] = moments(gen);

    const Eigen::MatrixXd root_r = detail::psd_sqrt(sig_r);
    Eigen::MatrixXd inner = root_r * sig_s * root_r;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    if (es.info() != Eigen::Success) throw NumericError("fid: matrix square root failed");
    double tr_sqrt = 0;
    for (long i = 0; i < es.eigenvalues().size(); ++i)
        tr_sqrt += std::sqrt(std::max(0.0, es.eigenvalues()(i)));

    const double value =
        (mu_r - mu_s).squaredNorm() + sig_r.trace() + sig_s.trace() - 2.0 * tr_sqrt;
    if (value < -1e-3) throw NumericError("fid: matrix square root produced " +
                                          std::to_string(value));
    return std::max(0.0, value);
}

// Strict inequality; ties are not collapse.
inline bool detect_mode_collapse(double ms_ssim_real, double ms_ssim_gen) {
    return ms_ssim_gen > ms_ssim_real;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MetricReport {
    double ms_ssim_real = 0;
    double ms_ssim_gen = 0;
    double fid = 0;
    bool mode_collapse = false;
    std::size_t n_real = 0;
    std::size_t n_gen = 0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"ms_ssim_real", ms_ssim_real}, {"ms_ssim_gen", ms_ssim_gen},
                {"fid", fid},                   {"mode_collapse", mode_collapse},
                {"n_real", n_real},             {"n_gen", n_gen},
                {"seed", seed}};
    }

    static MetricReport from_json(const nlohmann::json& j) {
        MetricReport r;
        r.ms_ssim_real = j.at("ms_ssim_real").get<double>();
        r.ms_ssim_gen = j.at("ms_ssim_gen").get<double>();
        r.fid = j.at("fid").get<double>();
        r.mode_collapse = j.at("mode_collapse").get<bool>();
        r.n_real = j.at("n_real").get<std::size_t>();
        r.n_gen = j.at("n_gen").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        return r;
    }
};

}  // namespace msggan
