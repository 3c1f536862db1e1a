#include <doctest.h>

#include <cmath>
#include <random>

#include "ionhom/fitkit.hpp"
#include "oracles.hpp"

using namespace ionhom;

namespace {

constexpr double kNs = 1e-9;

NormalizedCurve dip_curve(double a, double v, double t0, double sigma, double err) {
    NormalizedCurve c;
    for (int k = -60; k < 60; ++k) {
        const double t = (k + 0.5) * kNs;
        c.delays.push_back(t);
        c.values.push_back(a * (1 - v * std::exp(-0.5 * std::pow((t - t0) / sigma, 2))));
        c.stat_err.push_back(err);
    }
    return c;
}

// Counts drawn as Poisson around a dip with `level` counts per bin far away;
// normalized to unit baseline.
NormalizedCurve noisy_dip(double v, double level, Rng& rng) {
    auto c = dip_curve(1.0, v, 0.0, kPhotonHalfWidth / kHalfWidthToSigma, 0.0);
    for (std::size_t k = 0; k < c.values.size(); ++k) {
        std::poisson_distribution<long> draw(level * c.values[k]);
        const double n = static_cast<double>(draw(rng));
        c.values[k] = n / level;
        c.stat_err[k] = std::sqrt(std::max(n, 1.0)) / level;
    }
    return c;
}

CorrelationHistogram peak_histogram(double amplitude, double center, double lifetime, double irf) {
    CorrelationHistogram h;
    h.bin_width = 250;
    h.window = 150000;
    h.counts.resize(1200);
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        const double t = h.bin_center(k) * 1e-12;
        h.counts[k] = std::llround(blurred_two_sided_exponential(t - center, amplitude, lifetime, irf));
    }
    h.n_start = h.n_stop = 1;
    h.span = 1;
    return h;
}

// Independent numerical convolution of a two-sided exponential with a unit-area Gaussian.
double convolved_exponential(double t, double amplitude, double lifetime, double sigma) {
    auto f = [&](double s) {
        return amplitude * std::exp(-std::abs(t - s) / lifetime) * std::exp(-0.5 * s * s / (sigma * sigma)) /
               (sigma * std::sqrt(2 * M_PI));
    };
    // Split at the kink so Simpson's rule stays accurate.
    const double lo = -10 * sigma, hi = 10 * sigma;
    const double k = std::clamp(t, lo, hi);
    double sum = 0;
    if (k > lo) sum += oracle::bin_average(f, lo, k, 4000) * (k - lo);
    if (hi > k) sum += oracle::bin_average(f, k, hi, 4000) * (hi - k);
    return sum;
}

// cw g2 of the default atom from the master equation, 10 ps grid.
std::vector<double> oracle_g2_table(const AtomParams& a, int n) {
    const double ss =
        oracle::lindblad_evolve(a.gamma, a.rabi, a.detuning, oracle::ground_matrix(), 60 / a.gamma, 60000)[1][1].real();
    std::vector<double> out{0.0};
    auto rho = oracle::ground_matrix();
    for (int k = 1; k < n; ++k) {
        rho = oracle::lindblad_evolve(a.gamma, a.rabi, a.detuning, rho, 10e-12, 2);
        out.push_back(rho[1][1].real() / ss);
    }
    return out;
}

}  // namespace

TEST_CASE("dip fit: noiseless data recovered exactly") {
    const auto c = dip_curve(1.02, 0.57, 0.3 * kNs, 4.5 * kNs, 0.01);
    const auto fit = fit_gaussian_dip(c);
    REQUIRE(fit.converged);
    CHECK(fit.value("baseline") == doctest::Approx(1.02).epsilon(1e-6));
    CHECK(fit.value("depth") == doctest::Approx(0.57).epsilon(1e-6));
    CHECK(fit.value("center") == doctest::Approx(0.3 * kNs).epsilon(1e-6));
    CHECK(fit.value("sigma") == doctest::Approx(4.5 * kNs).epsilon(1e-6));
    CHECK(fit.value("half_width") == doctest::Approx(4.5 * kNs * std::sqrt(2 * std::log(2.0))).epsilon(1e-6));
    CHECK(fit.residual_norm < 1e-12);
}

TEST_CASE("dip fit: a flat curve has no depth") {
    Rng rng(5);
    const auto c = noisy_dip(0.0, 4000, rng);
    const auto fit = fit_gaussian_dip(c);
    CHECK(std::abs(fit.value("depth")) < 3 * fit.error("depth"));
    CHECK(std::abs(fit.value("depth")) < 0.05);
}

TEST_CASE("dip fit: the residual never increases") {
    Rng rng(6);
    const auto fit = fit_gaussian_dip(noisy_dip(0.57, 2000, rng));
    REQUIRE(fit.residual_history.size() >= 2);
    for (std::size_t k = 1; k < fit.residual_history.size(); ++k)
        CHECK(fit.residual_history[k] <= fit.residual_history[k - 1]);
    CHECK(fit.residual_history.back() == doctest::Approx(fit.residual_norm));
}

TEST_CASE("dip fit: errors scale as one over root counts") {
    Rng rng(7);
    const auto low = fit_gaussian_dip(noisy_dip(0.57, 100, rng));
    const auto high = fit_gaussian_dip(noisy_dip(0.57, 10000, rng));
    CHECK(low.error("depth") / high.error("depth") == doctest::Approx(10.0).epsilon(0.15));
    CHECK(low.error("half_width") / high.error("half_width") == doctest::Approx(10.0).epsilon(0.15));
}

TEST_CASE("dip fit: depth is unbiased over an ensemble") {
    Rng rng(8);
    std::vector<double> depths;
    for (int k = 0; k < 50; ++k) depths.push_back(fit_gaussian_dip(noisy_dip(0.57, 400, rng)).value("depth"));
    double mean = 0, var = 0;
    for (double d : depths) mean += d;
    mean /= 50;
    for (double d : depths) var += (d - mean) * (d - mean);
    const double sem = std::sqrt(var / 49 / 50);
    CHECK(std::abs(mean - 0.57) < 3 * sem);
}

TEST_CASE("peak model: blur limits and area") {
    CHECK(blurred_two_sided_exponential(1e-9, 3.0, 2.6e-9, 0.0) == doctest::Approx(3.0 * std::exp(-1 / 2.6)));
    CHECK(blurred_two_sided_exponential(1e-9, 3.0, 2.6e-9, 1e-15) == doctest::Approx(3.0 * std::exp(-1 / 2.6)));
    for (double t : {-8e-9, -1e-9, 0.0, 0.3e-9, 5e-9, 20e-9})
        CHECK(blurred_two_sided_exponential(t, 2.0, 2.6e-9, 1.41e-9) ==
              doctest::Approx(convolved_exponential(t, 2.0, 2.6e-9, 1.41e-9)).epsilon(1e-7));
    // Far tail stays finite where the naive exp * erfc would overflow.
    const double tail = blurred_two_sided_exponential(80e-9, 1.0, 2.6e-9, 1e-9);
    CHECK(std::isfinite(tail));
    CHECK(tail == doctest::Approx(std::exp(0.5 * std::pow(1 / 2.6, 2) - 80 / 2.6)).epsilon(1e-6));
    double area = 0;
    for (int k = -20000; k <= 20000; ++k) area += blurred_two_sided_exponential(k * 5e-12, 1.0, 2.6e-9, 1e-9) * 5e-12;
    CHECK(area == doctest::Approx(2 * 2.6e-9).epsilon(1e-6));
}

TEST_CASE("peak fit: noiseless peaks recovered exactly") {
    const auto h = peak_histogram(1e9, 37.6e-9, 2.6e-9, 0.0);
    PeakFitOptions opt;
    const auto fit = fit_exponential_peak(h, 37.5e-9, opt);
    REQUIRE(fit.converged);
    CHECK(fit.value("lifetime") == doctest::Approx(2.6e-9).epsilon(1e-6));
    CHECK(fit.value("center") == doctest::Approx(37.6e-9).epsilon(1e-6));
    CHECK(fit.value("amplitude") == doctest::Approx(1e9).epsilon(1e-6));

    const auto blurred = peak_histogram(1e9, 37.6e-9, 2.6e-9, 1.41e-9);
    opt.irf_sigma = 1.41e-9;
    const auto fb = fit_exponential_peak(blurred, 37.5e-9, opt);
    REQUIRE(fb.converged);
    CHECK(fb.value("lifetime") == doctest::Approx(2.6e-9).epsilon(1e-6));
    CHECK(fb.value("center") == doctest::Approx(37.6e-9).epsilon(1e-6));
}

TEST_CASE("peak fit: too few counts or a single-bin spike are flagged") {
    CorrelationHistogram h;
    h.bin_width = 250;
    h.window = 150000;
    h.counts.assign(1200, 0);
    h.counts[h.zero_bin() + 150] = 1000;
    const auto spike = fit_exponential_peak(h, 37.5e-9);
    CHECK_FALSE(spike.converged);
    CHECK(spike.message.find("3 bins") != std::string::npos);

    h.counts[h.zero_bin() + 150] = 3;
    h.counts[h.zero_bin() + 151] = 3;
    h.counts[h.zero_bin() + 149] = 3;
    const auto sparse = fit_exponential_peak(h, 37.5e-9);
    CHECK_FALSE(sparse.converged);
    CHECK(sparse.message.find("insufficient") != std::string::npos);
}

TEST_CASE("rabi fit: noiseless blurred g2 recovered") {
    const AtomParams truth;
    std::vector<double> delays;
    for (int k = -80; k < 80; ++k) delays.push_back((k + 0.5) * kNs);
    const auto values = blurred_g2_model(truth, 1.41e-9, 1.0, delays);
    NormalizedCurve c{delays, values, std::vector<double>(delays.size(), 0.01)};
    AtomParams guess = truth;
    guess.rabi *= 1.3;
    const auto fit = fit_damped_rabi(c, guess);
    REQUIRE(fit.converged);
    CHECK(fit.value("rabi") == doctest::Approx(truth.rabi).epsilon(0.01));
    CHECK(fit.value("irf_sigma") == doctest::Approx(1.41e-9).epsilon(0.01));
    CHECK(fit.value("amplitude") == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("rabi fit: fitted Rabi frequency follows the drive") {
    Rng rng(9);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (double factor : {1.0, 0.5}) {
        AtomParams truth;
        truth.rabi *= factor;
        std::vector<double> delays;
        for (int k = -100; k < 100; ++k) delays.push_back((k + 0.5) * kNs);
        auto values = blurred_g2_model(truth, 1.41e-9, 1.0, delays);
        for (auto& v : values) v += noise(rng);
        NormalizedCurve c{delays, values, std::vector<double>(delays.size(), 0.02)};
        const auto fit = fit_damped_rabi(c, AtomParams{});
        CAPTURE(factor);
        REQUIRE(fit.converged);
        CHECK(std::abs(fit.value("rabi") - truth.rabi) < 3 * fit.error("rabi"));
    }
}

TEST_CASE("rabi fit: one ns per-detector jitter lifts g2(0) to about 0.18") {
    // Two detectors with 1 ns jitter each blur coincidences by sqrt(2) ns.
    const AtomParams a;
    const double sigma = std::sqrt(2.0) * kNs;
    const auto table = oracle_g2_table(a, 20000);  // 0 ... 200 ns
    auto g2 = [&](double t) { return table[std::min<std::size_t>(std::llround(std::abs(t) / 10e-12), table.size() - 1)]; };
    auto blurred = [&](double t) {
        auto f = [&](double s) { return g2(t - s) * std::exp(-0.5 * s * s / (sigma * sigma)); };
        return oracle::bin_average(f, -8 * sigma, 8 * sigma, 1600) * 16 * sigma / (sigma * std::sqrt(2 * M_PI));
    };
    const double zero = blurred(0.0);
    CHECK(zero == doctest::Approx(0.18).epsilon(0.05 / 0.18));

    std::vector<double> delays, values;
    for (int k = -80; k < 80; ++k) {
        delays.push_back((k + 0.5) * kNs);
        values.push_back(blurred(delays.back()));
    }
    NormalizedCurve c{delays, values, std::vector<double>(delays.size(), 0.01)};
    const auto fit = fit_damped_rabi(c, a);
    REQUIRE(fit.converged);
    CHECK(fit.value("g2_zero") == doctest::Approx(zero).epsilon(0.01));
    CHECK(fit.value("irf_sigma") == doctest::Approx(sigma).epsilon(0.02));
}

TEST_CASE("least squares: input validation") {
    LeastSquaresProblem p;
    p.x = {1, 2, 3};
    p.y = {1, 2};
    p.names = {"a"};
    p.initial = {0};
    p.scale = {1};
    p.model = [](std::span<const double> q, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = q[0] * x[i];
    };
    CHECK_THROWS_AS(least_squares(p), InvalidInput);
    p.y = {2, 4, 6};
    const auto fit = least_squares(p);
    CHECK(fit.value("a") == doctest::Approx(2.0));
    CHECK_THROWS_AS(fit.param("b"), InvalidInput);
}
