#pragma once

// Weighted nonlinear least squares for the three curve models: Gaussian
// interference dip, two-sided exponential peak, and IRF-blurred cw g2.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ionhom/atomdyn.hpp"
#include "ionhom/correlator.hpp"

namespace ionhom {

struct FitParam {
    std::string name;
    double value = 0;
    double std_err = 0;
};

struct FitResult {
    std::vector<FitParam> params;
    double residual_norm = 0;  // sum of squared weighted residuals
    bool converged = false;
    int iterations = 0;
    std::string message;
    std::vector<double> residual_history;  // initial value, then one entry per accepted step

    const FitParam& param(std::string_view name) const;
    double value(std::string_view name) const { return param(name).value; }
    double error(std::string_view name) const { return param(name).std_err; }
};

struct FitOptions {
    int max_iterations = 200;
    double param_tolerance = 1e-8;     // relative parameter change
    double gradient_tolerance = 1e-10;  // weighted gradient norm
};

/// Generic damped Gauss-Newton (Levenberg-Marquardt) solver. `model` fills
/// predictions for all x at the given parameters. Weights are 1/sigma^2 when
/// every sigma is positive, unit otherwise (then standard errors are scaled by
/// the residual variance). `scale` sets the finite-difference step floor per
/// parameter.
struct LeastSquaresProblem {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> sigma;  // may be empty
    std::function<void(std::span<const double> params, std::span<const double> x, std::span<double> out)> model;
    std::vector<std::string> names;
    std::vector<double> initial;
    std::vector<double> scale;
};

FitResult least_squares(const LeastSquaresProblem& problem, const FitOptions& options = {});

struct DipGuess {
    std::optional<double> baseline, depth, center, half_width;  // center/half_width in s
};

/// Model a * (1 - V exp(-(t - t0)^2 / (2 s^2))). Reports baseline, depth,
/// center (s), sigma (s) and half_width = sigma * sqrt(2 ln 2) (s).
/// Unset guess fields are derived from the data: center at the minimum bin,
/// baseline from the outer fifth of the curve on each side. sigma is held at
/// or above the delay spacing of the curve.
FitResult fit_gaussian_dip(const NormalizedCurve& curve, const DipGuess& guess = {}, const FitOptions& options = {});

struct PeakFitOptions {
    double half_range = 18.75e-9;  // s, fit window around the center
    double irf_sigma = 0.0;        // s, known Gaussian blur folded into the model
    FitOptions solver{};
};

/// Two-sided exponential A exp(-|t - t0| / T), optionally convolved with a
/// known Gaussian of width irf_sigma. Fits raw counts around `center` (s).
/// Reports amplitude, center (s), lifetime (s). Fewer than 10 counts or fewer
/// than 3 populated bins gives converged == false.
FitResult fit_exponential_peak(const CorrelationHistogram& hist, double center, const PeakFitOptions& options = {});

/// A exp(-|t|/T) convolved with a unit-area Gaussian of width sigma (same
/// peak normalization as the unblurred model at sigma -> 0).
double blurred_two_sided_exponential(double t, double amplitude, double lifetime, double sigma);

struct RabiFitOptions {
    double irf_sigma_guess = 1.41e-9;  // s, coincidence-level blur
    double amplitude_guess = 1.0;
    FitOptions solver{};
};

/// amplitude * (g2_cw(atom with rabi) convolved with Gaussian(irf_sigma))(|t|)
/// evaluated at the given delays (s).
std::vector<double> blurred_g2_model(const AtomParams& atom, double irf_sigma, double amplitude,
                                     std::span<const double> delays);

/// Fits (rabi, irf_sigma, amplitude) with gamma and detuning held at the
/// guess. Reports rabi (rad/s), irf_sigma (s), amplitude, and g2_zero, the
/// fitted model at zero delay.
FitResult fit_damped_rabi(const NormalizedCurve& curve, const AtomParams& guess, const RabiFitOptions& options = {});

}  // namespace ionhom
