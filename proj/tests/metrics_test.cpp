#include "msggan/metrics/metrics.hpp"
#include "support.hpp"

using namespace msggan;
using namespace testsupport;

namespace {

MetricImage random_image(std::size_t h, std::size_t w, Rng& rng) {
    MetricImage img(h, w);
    for (long y = 0; y < img.rows(); ++y)
        for (long x = 0; x < img.cols(); ++x)
            img(y, x) = std::min(1.0, std::max(0.0, 0.5 + 0.2 * rng.normal()));
    return img;
}

Eigen::MatrixXd gaussian_features(std::size_t n, std::size_t d, const Eigen::VectorXd& mu,
                                  double std_dev, Rng& rng) {
    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            x(i, j) = mu(j) + std_dev * rng.normal();
    return x;
}

// Independent oracle: square root of the covariance product taken directly
// on the (non-symmetric) product via a general eigendecomposition.
double fid_bruteforce(const Eigen::MatrixXd& real, const Eigen::MatrixXd& gen) {
    auto moments = [](const Eigen::MatrixXd& x) {
        Eigen::VectorXd mu = x.colwise().mean();
        Eigen::MatrixXd c = x.rowwise() - mu.transpose();
        Eigen::MatrixXd sigma = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
        return std::make_pair(mu, sigma);
    };
    auto [mu_r, sig_r] = moments(real);
    auto [mu_s, sig_s] = moments(gen);
    Eigen::MatrixXd prod = sig_r * sig_s;
    Eigen::EigenSolver<Eigen::MatrixXd> es(prod);
    double tr_sqrt = 0;
    for (long i = 0; i < es.eigenvalues().size(); ++i)
        tr_sqrt += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
    return (mu_r - mu_s).squaredNorm() + sig_r.trace() + sig_s.trace() - 2.0 * tr_sqrt;
}

}  // namespace

TEST_CASE("ms-ssim: canonical truncated weights sum to one") {
    MsSsimConfig cfg;
    cfg.validate();
    CHECK(cfg.weights.size() == 3);
    double sum = 0;
    for (double w : cfg.weights) sum += w;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    // truncation of (0.0448, 0.2856, 0.3001)
    CHECK(cfg.weights[0] == Catch::Approx(0.0448 / 0.6305).epsilon(1e-12));
    CHECK(cfg.weights[2] == Catch::Approx(0.3001 / 0.6305).epsilon(1e-12));

    MsSsimConfig bad;
    bad.weights = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = MsSsimConfig{};
    bad.window = 10;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ms-ssim: identity pairs score 1") {
    Rng rng(61);
    for (int trial = 0; trial < 3; ++trial) {
        auto a = random_image(64, 64, rng);
        CHECK(ms_ssim_pair(a, a) == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("ms-ssim: symmetry is exact") {
    Rng rng(62);
    auto a = random_image(64, 64, rng);
    auto b = random_image(64, 64, rng);
    CHECK(ms_ssim_pair(a, b) == ms_ssim_pair(b, a));
    CHECK(ms_ssim_pair(a, b) >= 0.0);
    CHECK(ms_ssim_pair(a, b) < 1.0);  // strictly below 1 for distinct images
}

TEST_CASE("ms-ssim: constant images match the closed-form luminance") {
    MetricImage a = MetricImage::Constant(64, 64, 0.25);
    MetricImage b = MetricImage::Constant(64, 64, 0.75);
    // contrast and structure are exactly 1 on constants; luminance at the
    // coarsest scale is (2*0.25*0.75 + c1) / (0.25^2 + 0.75^2 + c1), c1 = 1e-4
    const double lum = (2.0 * 0.25 * 0.75 + 1e-4) / (0.25 * 0.25 + 0.75 * 0.75 + 1e-4);
    const double w_coarsest = 0.3001 / 0.6305;
    const double expected = std::pow(lum, w_coarsest);
    CHECK(ms_ssim_pair(a, b) == Catch::Approx(expected).margin(1e-6));
}

TEST_CASE("ms-ssim: too small a resolution for the scale count") {
    MetricImage a = MetricImage::Constant(32, 32, 0.5);
    CHECK_THROWS_AS(ms_ssim_pair(a, a), ConfigError);  // needs 11 * 2^2 = 44
    MsSsimConfig one_scale;
    one_scale.num_scales = 1;
    one_scale.weights = msssim_weights(1);
    CHECK(ms_ssim_pair(a, a, one_scale) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("ms-ssim dataset: identical images, determinism, edge cases") {
    Rng rng(63);
    auto proto = random_image(64, 64, rng);
    std::vector<MetricImage> same(6, proto);
    CHECK(ms_ssim_dataset(same, 0, 1) == Catch::Approx(1.0).margin(1e-6));

    std::vector<MetricImage> imgs;
    for (int i = 0; i < 8; ++i) imgs.push_back(random_image(64, 64, rng));
    const double s1 = ms_ssim_dataset(imgs, 4, 42);
    const double s2 = ms_ssim_dataset(imgs, 4, 42);
    CHECK(s1 == s2);
    const double s3 = ms_ssim_dataset(imgs, 4, 43);
    CHECK(s1 != s3);  // different pairs with overwhelming probability

    // oversampling falls back to independent pairs and still works
    CHECK_NOTHROW(ms_ssim_dataset(imgs, 30, 7));

    std::vector<MetricImage> single(1, proto);
    CHECK_THROWS_AS(ms_ssim_dataset(single, 0, 1), ConfigError);
}

TEST_CASE("fid: identical features give zero") {
    Rng rng(64);
    auto x = gaussian_features(50, 6, Eigen::VectorXd::Zero(6), 1.0, rng);
    CHECK(fid(x, x) <= 1e-6);
}

TEST_CASE("fid: symmetric in its arguments") {
    Rng rng(65);
    auto a = gaussian_features(60, 5, Eigen::VectorXd::Zero(5), 1.0, rng);
    Eigen::VectorXd mu = Eigen::VectorXd::Constant(5, 0.5);
    auto b = gaussian_features(70, 5, mu, 1.3, rng);
    CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-6);
    CHECK(fid(a, b) >= 0.0);
}

TEST_CASE("fid: gaussian mean shift converges to the squared norm") {
    Rng rng(66);
    const std::size_t n = 100000, d = 4;
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    mu(0) = 3.0;  // ||mu||^2 = 9
    auto r = gaussian_features(n, d, Eigen::VectorXd::Zero(d), 1.0, rng);
    auto s = gaussian_features(n, d, mu, 1.0, rng);
    const double v = fid(r, s);
    CHECK(v == Catch::Approx(9.0).epsilon(0.05));
}

TEST_CASE("fid: covariance scaling converges to d") {
    Rng rng(67);
    const std::size_t n = 100000, d = 4;
    auto r = gaussian_features(n, d, Eigen::VectorXd::Zero(d), 1.0, rng);
    auto s = gaussian_features(n, d, Eigen::VectorXd::Zero(d), 2.0, rng);  // sigma = 4I
    const double v = fid(r, s);
    CHECK(v == Catch::Approx(static_cast<double>(d)).epsilon(0.05));
}

TEST_CASE("fid: matches the brute-force oracle at small dimension") {
    Rng rng(68);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng.uniform_int(3);
        const std::size_t n = 4 + rng.uniform_int(7);   // <= 10 samples
        const std::size_t m = 4 + rng.uniform_int(7);
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
        for (std::size_t j = 0; j < d; ++j) mu(j) = rng.normal();
        auto a = gaussian_features(n, d, Eigen::VectorXd::Zero(d), 1.0, rng);
        auto b = gaussian_features(m, d, mu, 0.7, rng);
        const double ours = fid(a, b);
        const double oracle = fid_bruteforce(a, b);
        CHECK(ours == Catch::Approx(oracle).margin(1e-8));
    }
}

TEST_CASE("fid: duplicated rows keep the distance near zero") {
    Rng rng(69);
    auto x = gaussian_features(200, 6, Eigen::VectorXd::Zero(6), 1.0, rng);
    Eigen::MatrixXd dup(400, 6);
    dup << x, x;
    // exact zero under the biased estimator; the pinned unbiased (N-1)
    // estimator introduces a (1 - sqrt(2(N-1)/(2N-1)))^2 * tr(sigma) skew
    CHECK(fid(x, dup) < 1e-4);
}

TEST_CASE("fid: input validation") {
    Rng rng(70);
    auto a = gaussian_features(10, 3, Eigen::VectorXd::Zero(3), 1.0, rng);
    auto b = gaussian_features(10, 4, Eigen::VectorXd::Zero(4), 1.0, rng);
    CHECK_THROWS_AS(fid(a, b), ConfigError);
    Eigen::MatrixXd tiny(1, 3);
    tiny.setZero();
    CHECK_THROWS_AS(fid(a, tiny), ConfigError);
    Eigen::MatrixXd nan_m = a;
    nan_m(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fid(a, nan_m), ConfigError);
}

TEST_CASE("extract_features: identity extractor returns raw pixels") {
    Rng rng(71);
    std::vector<MetricImage> imgs;
    for (int i = 0; i < 3; ++i) imgs.push_back(random_image(2, 2, rng));
    IdentityExtractor ex(2, 2);
    auto f = extract_features(imgs, ex);
    REQUIRE(f.rows() == 3);
    REQUIRE(f.cols() == 4);
    for (int i = 0; i < 3; ++i) {
        CHECK(f(i, 0) == imgs[i](0, 0));
        CHECK(f(i, 1) == imgs[i](0, 1));
        CHECK(f(i, 2) == imgs[i](1, 0));
        CHECK(f(i, 3) == imgs[i](1, 1));
    }

    // duplicated list duplicates rows
    std::vector<MetricImage> dup = imgs;
    dup.insert(dup.end(), imgs.begin(), imgs.end());
    auto fdup = extract_features(dup, ex);
    CHECK(fdup.rows() == 6);
    for (int i = 0; i < 3; ++i) CHECK(fdup.row(i) == fdup.row(i + 3));
}

TEST_CASE("extract_features: native resolution triggers a resize") {
    struct DownExtractor final : FeatureExtractor {
        std::size_t dim() const override { return 16; }
        std::size_t native_resolution() const override { return 4; }
        void extract(const MetricImage& img, double* out) const override {
            REQUIRE(img.rows() == 4);
            REQUIRE(img.cols() == 4);
            for (long i = 0; i < 16; ++i) out[i] = img(i / 4, i % 4);
        }
        std::string name() const override { return "down"; }
    };
    Rng rng(72);
    std::vector<MetricImage> imgs{random_image(8, 8, rng)};
    DownExtractor ex;
    auto f = extract_features(imgs, ex);
    CHECK(f.rows() == 1);
    CHECK(f.cols() == 16);
    // constant image stays constant through the resize
    std::vector<MetricImage> flat{MetricImage::Constant(8, 8, 0.3)};
    auto g = extract_features(flat, ex);
    for (long i = 0; i < 16; ++i) CHECK(g(0, i) == Catch::Approx(0.3).margin(1e-12));
}

TEST_CASE("standard extractor is environment-gated with remediation") {
    try {
        make_extractor("standard", 64, 64);
        FAIL("expected EnvironmentError");
    } catch (const EnvironmentError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("identity") != std::string::npos);  // remediation present
    }
    CHECK_THROWS_AS(make_extractor("bogus", 64, 64), ConfigError);
    CHECK(make_extractor("identity", 8, 8)->dim() == 64);
}

TEST_CASE("mode collapse rule: table rows and the tie") {
    CHECK(detect_mode_collapse(0.50, 0.74));        // collapsed run
    CHECK_FALSE(detect_mode_collapse(0.50, 0.47));  // healthy run
    CHECK_FALSE(detect_mode_collapse(0.50, 0.50));  // tie is not collapse
}

TEST_CASE("metric report: json round trip") {
    MetricReport r;
    r.ms_ssim_real = 0.5;
    r.ms_ssim_gen = 0.47;
    r.fid = 167.1;
    r.mode_collapse = false;
    r.n_real = 3616;
    r.n_gen = 3616;
    r.seed = 99;
    auto j = r.to_json();
    auto back = MetricReport::from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.ms_ssim_real == r.ms_ssim_real);
    CHECK(back.ms_ssim_gen == r.ms_ssim_gen);
    CHECK(back.fid == r.fid);
    CHECK(back.mode_collapse == r.mode_collapse);
    CHECK(back.n_real == r.n_real);
    CHECK(back.n_gen == r.n_gen);
    CHECK(back.seed == r.seed);
}
