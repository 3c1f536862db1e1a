#include "ionhom/fitkit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace ionhom {

const FitParam& FitResult::param(std::string_view name) const {
    for (const auto& p : params)
        if (p.name == name) return p;
    throw InvalidInput("fit result has no parameter '" + std::string(name) + "'");
}

namespace {

constexpr double kNs = 1e-9;

struct Evaluator {
    const LeastSquaresProblem& problem;
    Eigen::VectorXd sqrt_w;
    mutable std::vector<double> buffer;

    Eigen::VectorXd residuals(const Eigen::VectorXd& p) const {
        const auto n = problem.x.size();
        buffer.assign(n, 0.0);
        problem.model({p.data(), static_cast<std::size_t>(p.size())}, problem.x, buffer);
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) r[static_cast<Eigen::Index>(i)] = (problem.y[i] - buffer[i]) * sqrt_w[static_cast<Eigen::Index>(i)];
        return r;
    }

    // Jacobian of the weighted model (= minus the residual Jacobian).
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& p) const {
        const auto n = static_cast<Eigen::Index>(problem.x.size());
        Eigen::MatrixXd J(n, p.size());
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            const double h = 1e-6 * std::max(std::abs(p[j]), problem.scale[static_cast<std::size_t>(j)]);
            Eigen::VectorXd up = p, down = p;
            up[j] += h;
            down[j] -= h;
            J.col(j) = (residuals(down) - residuals(up)) / (2.0 * h);
        }
        return J;
    }
};

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

FitResult least_squares(const LeastSquaresProblem& problem, const FitOptions& options) {
    const std::size_t n = problem.x.size(), np = problem.initial.size();
    require(problem.y.size() == n, "least_squares: x and y differ in length");
    require(problem.names.size() == np && problem.scale.size() == np, "least_squares: parameter metadata mismatch");
    require(n >= np, "least_squares: fewer points than parameters");

    bool weighted = problem.sigma.size() == n && n > 0;
    for (double s : problem.sigma) weighted = weighted && s > 0 && std::isfinite(s);

    Evaluator ev{problem, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)), {}};
    if (weighted)
        for (std::size_t i = 0; i < n; ++i) ev.sqrt_w[static_cast<Eigen::Index>(i)] = 1.0 / problem.sigma[i];

    Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(problem.initial.data(), static_cast<Eigen::Index>(np));
    Eigen::VectorXd r = ev.residuals(p);
    double rss = r.squaredNorm();

    FitResult result;
    result.message = "maximum iterations reached";
    result.residual_history.push_back(rss);
    double lambda = 1e-3;
    Eigen::MatrixXd J = ev.jacobian(p);
    bool fresh = true;

    for (int it = 0; it < options.max_iterations; ++it) {
        result.iterations = it + 1;
        if (!fresh) J = ev.jacobian(p);
        fresh = false;
        const Eigen::MatrixXd A = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        if (g.norm() < options.gradient_tolerance) {
            result.converged = true;
            result.message = "gradient below tolerance";
            break;
        }

        Eigen::VectorXd diag = A.diagonal();
        const double floor = 1e-12 * std::max(1e-300, diag.maxCoeff());
        diag = diag.cwiseMax(floor);

        bool accepted = false;
        Eigen::VectorXd step;
        while (lambda < 1e16) {
            Eigen::MatrixXd M = A;
            M.diagonal() += lambda * diag;
            step = M.ldlt().solve(g);
            const Eigen::VectorXd trial = p + step;
            if (all_finite(step) && all_finite(trial)) {
                const Eigen::VectorXd r_trial = ev.residuals(trial);
                const double rss_trial = r_trial.squaredNorm();
                if (std::isfinite(rss_trial) && rss_trial < rss) {
                    p = trial;
                    r = r_trial;
                    rss = rss_trial;
                    result.residual_history.push_back(rss);
                    lambda = std::max(lambda / 10.0, 1e-12);
                    accepted = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No descent direction left in floating point.
            result.converged = true;
            result.message = "stalled at numerical minimum";
            break;
        }
        double rel = 0.0;
        for (Eigen::Index j = 0; j < p.size(); ++j)
            rel = std::max(rel, std::abs(step[j]) / std::max(std::abs(p[j]), problem.scale[static_cast<std::size_t>(j)]));
        if (rel < options.param_tolerance) {
            result.converged = true;
            result.message = "parameter change below tolerance";
            break;
        }
    }

    J = ev.jacobian(p);
    Eigen::MatrixXd cov = (J.transpose() * J).completeOrthogonalDecomposition().pseudoInverse();
    if (!weighted && n > np) cov *= rss / static_cast<double>(n - np);

    result.residual_norm = rss;
    for (std::size_t j = 0; j < np; ++j) {
        const double var = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
        result.params.push_back({problem.names[j], p[static_cast<Eigen::Index>(j)], std::sqrt(std::max(0.0, var))});
    }
    if (!all_finite(p)) {
        result.converged = false;
        result.message = "non-finite parameters";
    }
    return result;
}

FitResult fit_gaussian_dip(const NormalizedCurve& curve, const DipGuess& guess, const FitOptions& options) {
    const std::size_t n = curve.delays.size();
    require(n >= 5, "dip fit needs at least 5 points");

    LeastSquaresProblem prob;
    for (std::size_t k = 0; k < n; ++k) prob.x.push_back(curve.delays[k] / kNs);
    prob.y = curve.values;
    prob.sigma = curve.stat_err;

    const auto imin = static_cast<std::size_t>(std::min_element(prob.y.begin(), prob.y.end()) - prob.y.begin());
    const std::size_t wing = std::max<std::size_t>(1, n / 5);
    double wings = 0;
    for (std::size_t k = 0; k < wing; ++k) wings += prob.y[k] + prob.y[n - 1 - k];
    wings /= static_cast<double>(2 * wing);

    const double a0 = guess.baseline.value_or(wings);
    const double t0 = guess.center ? *guess.center / kNs : prob.x[imin];
    const double v0 = guess.depth.value_or(std::clamp(a0 > 0 ? 1.0 - prob.y[imin] / a0 : 0.5, 0.05, 1.0));
    double hw = 3.0;
    if (guess.half_width) {
        hw = *guess.half_width / kNs;
    } else {
        const double level = a0 * (1.0 - 0.5 * v0);
        for (std::size_t k = imin; k < n; ++k) {
            if (prob.y[k] >= level) {
                hw = std::max(prob.x[k] - prob.x[imin], 0.5 * (prob.x[1] - prob.x[0]));
                break;
            }
        }
    }

    // A dip narrower than the sampling step is not resolved; below it the
    // width would only chase single-bin noise.
    double min_sigma = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < n; ++k) min_sigma = std::min(min_sigma, std::abs(prob.x[k] - prob.x[k - 1]));

    prob.names = {"baseline", "depth", "center", "sigma"};
    prob.initial = {a0, v0, t0, std::max(hw / kHalfWidthToSigma, min_sigma)};
    prob.scale = {1.0, 1.0, 1.0, 1.0};
    prob.model = [min_sigma](std::span<const double> p, std::span<const double> x, std::span<double> out) {
        const double s = std::max(std::abs(p[3]), min_sigma);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double z = (x[i] - p[2]) / s;
            out[i] = p[0] * (1.0 - p[1] * std::exp(-0.5 * z * z));
        }
    };

    auto fit = least_squares(prob, options);
    auto& center = fit.params[2];
    auto& sigma = fit.params[3];
    center.value *= kNs;
    center.std_err *= kNs;
    sigma.value = std::max(std::abs(sigma.value), min_sigma) * kNs;
    sigma.std_err *= kNs;
    fit.params.push_back({"half_width", sigma.value * kHalfWidthToSigma, sigma.std_err * kHalfWidthToSigma});
    return fit;
}

namespace {

// exp(a) * erfc(b) without overflow for large b.
double exp_erfc(double a, double b) {
    if (b < 5.0) return std::exp(a) * std::erfc(b);
    const double b2 = b * b, inv = 1.0 / b2;
    const double series = 1.0 - 0.5 * inv + 0.75 * inv * inv - 1.875 * inv * inv * inv;
    return std::exp(a - b2) * series / (b * std::sqrt(M_PI));
}

}  // namespace

double blurred_two_sided_exponential(double t, double amplitude, double lifetime, double sigma) {
    if (sigma <= 0) return amplitude * std::exp(-std::abs(t) / lifetime);
    const double base = 0.5 * sigma * sigma / (lifetime * lifetime);
    const double s2 = sigma * std::sqrt(2.0);
    const double rising = exp_erfc(base + t / lifetime, (sigma * sigma / lifetime + t) / s2);
    const double falling = exp_erfc(base - t / lifetime, (sigma * sigma / lifetime - t) / s2);
    return 0.5 * amplitude * (rising + falling);
}

FitResult fit_exponential_peak(const CorrelationHistogram& hist, double center, const PeakFitOptions& options) {
    require(hist.bin_width > 0, "histogram has no bins");
    LeastSquaresProblem prob;
    const double lo = (center - options.half_range) * kPsPerSecond, hi = (center + options.half_range) * kPsPerSecond;
    std::int64_t total = 0;
    std::size_t populated = 0;
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        const double c = hist.bin_center(k);
        if (c < lo || c >= hi) continue;
        prob.x.push_back(c / 1e3);  // ns
        prob.y.push_back(static_cast<double>(hist.counts[k]));
        prob.sigma.push_back(std::sqrt(static_cast<double>(hist.counts[k])));
        total += hist.counts[k];
        populated += hist.counts[k] > 0 ? 1 : 0;
    }

    const double bin_ns = static_cast<double>(hist.bin_width) / 1e3;
    const auto imax = prob.y.empty()
                          ? std::size_t{0}
                          : static_cast<std::size_t>(std::max_element(prob.y.begin(), prob.y.end()) - prob.y.begin());
    const double a0 = prob.y.empty() ? 0.0 : prob.y[imax];
    const double t0 = prob.y.empty() ? center / kNs : prob.x[imax];
    const double T0 = a0 > 0 ? std::max(0.5 * bin_ns, static_cast<double>(total) * bin_ns / (2.0 * a0)) : 1.0;

    if (total < 10 || populated < 3 || prob.x.size() < 3) {
        FitResult bad;
        bad.params = {{"amplitude", a0, 0}, {"center", t0 * kNs, 0}, {"lifetime", T0 * kNs, 0}};
        bad.message = total < 10 ? "insufficient counts in peak" : "peak occupies fewer than 3 bins";
        return bad;
    }

    const double irf_ns = options.irf_sigma / kNs;
    prob.names = {"amplitude", "center", "lifetime"};
    prob.initial = {a0, t0, T0};
    prob.scale = {1.0, 1.0, 1.0};
    prob.model = [irf_ns](std::span<const double> p, std::span<const double> x, std::span<double> out) {
        const double T = std::abs(p[2]);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = blurred_two_sided_exponential(x[i] - p[1], p[0], T, irf_ns);
    };

    auto fit = least_squares(prob, options.solver);
    fit.params[1].value *= kNs;
    fit.params[1].std_err *= kNs;
    fit.params[2].value = std::abs(fit.params[2].value) * kNs;
    fit.params[2].std_err *= kNs;
    return fit;
}

namespace {

// g2 tabulated on a uniform grid from zero delay.
struct G2Table {
    double step;
    std::vector<double> values;

    double at(double t) const {
        const double x = std::abs(t) / step;
        const auto k = static_cast<std::size_t>(x);
        if (k + 1 >= values.size()) return values.back();
        const double f = x - static_cast<double>(k);
        return values[k] + f * (values[k + 1] - values[k]);
    }
};

G2Table tabulate_g2(const AtomParams& atom, double t_max, double step) {
    const auto n = static_cast<std::size_t>(std::ceil(t_max / step)) + 2;
    std::vector<double> grid(n);
    for (std::size_t k = 0; k < n; ++k) grid[k] = step * static_cast<double>(k);
    return {step, g2_cw(atom, grid).values};
}

std::vector<double> blurred_from_table(const G2Table& table, double irf_sigma, double amplitude,
                                       std::span<const double> delays) {
    std::vector<double> out(delays.size());
    if (irf_sigma <= table.step) {
        for (std::size_t i = 0; i < delays.size(); ++i) out[i] = amplitude * table.at(delays[i]);
        return out;
    }
    constexpr int kHalf = 120;  // quadrature nodes per side, spanning 6 sigma
    const double ds = 6.0 * irf_sigma / kHalf;
    std::vector<double> w(2 * kHalf + 1);
    double norm = 0;
    for (int k = -kHalf; k <= kHalf; ++k) {
        const double z = k * ds / irf_sigma;
        norm += w[static_cast<std::size_t>(k + kHalf)] = std::exp(-0.5 * z * z);
    }
    for (std::size_t i = 0; i < delays.size(); ++i) {
        double acc = 0;
        for (int k = -kHalf; k <= kHalf; ++k) acc += w[static_cast<std::size_t>(k + kHalf)] * table.at(delays[i] - k * ds);
        out[i] = amplitude * acc / norm;
    }
    return out;
}

double max_abs(std::span<const double> v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

std::vector<double> blurred_g2_model(const AtomParams& atom, double irf_sigma, double amplitude,
                                     std::span<const double> delays) {
    require(irf_sigma >= 0, "irf_sigma must be >= 0");
    const auto table = tabulate_g2(atom, max_abs(delays) + 6.0 * irf_sigma, atom.max_step());
    return blurred_from_table(table, irf_sigma, amplitude, delays);
}

FitResult fit_damped_rabi(const NormalizedCurve& curve, const AtomParams& guess, const RabiFitOptions& options) {
    guess.validate();
    require(guess.rabi > 0, "rabi fit needs a driven atom guess");
    require(curve.delays.size() >= 5, "rabi fit needs at least 5 points");
    const double reach = max_abs(curve.delays);
    require(reach >= 10.0 / guess.gamma || reach >= 3.0 * 2.0 * M_PI / guess.rabi,
            "curve must span 3 oscillation periods or 10 lifetimes");

    const double gamma = guess.gamma, detuning = guess.detuning;
    // Fixed grid step keeps the model smooth in rabi for finite differences.
    const double step = 1.0 / (50.0 * std::max({gamma, std::abs(detuning), 4.0 * guess.rabi}));

    LeastSquaresProblem prob;
    for (double d : curve.delays) prob.x.push_back(d / kNs);
    prob.y = curve.values;
    prob.sigma = curve.stat_err;
    prob.names = {"rabi", "irf_sigma", "amplitude"};
    prob.initial = {guess.rabi / gamma, options.irf_sigma_guess / kNs, options.amplitude_guess};
    prob.scale = {1.0, 0.1, 1.0};

    auto evaluate = [gamma, detuning, step, reach](std::span<const double> p, std::span<const double> x_ns) {
        AtomParams atom{gamma, std::abs(p[0]) * gamma, detuning};
        const double sigma = std::abs(p[1]) * kNs;
        std::vector<double> delays(x_ns.size());
        for (std::size_t i = 0; i < x_ns.size(); ++i) delays[i] = x_ns[i] * kNs;
        const auto table = tabulate_g2(atom, reach + 6.0 * sigma, step);
        return blurred_from_table(table, sigma, p[2], delays);
    };
    prob.model = [evaluate](std::span<const double> p, std::span<const double> x, std::span<double> out) {
        const auto v = evaluate(p, x);
        std::copy(v.begin(), v.end(), out.begin());
    };

    auto fit = least_squares(prob, options.solver);
    const double rabi_units = fit.params[0].value, sigma_ns = fit.params[1].value, amp = fit.params[2].value;
    fit.params[0].value = std::abs(rabi_units) * gamma;
    fit.params[0].std_err *= gamma;
    fit.params[1].value = std::abs(sigma_ns) * kNs;
    fit.params[1].std_err *= kNs;
    const double zero = 0.0;
    const double g0 = evaluate(std::array<double, 3>{rabi_units, sigma_ns, amp}, {&zero, 1})[0];
    fit.params.push_back({"g2_zero", g0, 0.0});
    return fit;
}

}  // namespace ionhom
