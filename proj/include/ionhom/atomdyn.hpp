#pragma once

// Driven two-level ion: optical Bloch equations, the cw intensity correlation
// g2(tau), and the no-jump waiting-time law used by the quantum-jump emitter.

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "ionhom/types.hpp"

namespace ionhom {

inline constexpr double kExcitedLifetime = 2.6e-9;             // s
inline constexpr double kDefaultGamma = 1.0 / kExcitedLifetime;  // rad/s
inline constexpr double kSingleIonDetectedRate = 4e4;          // counts/s, both detectors
inline constexpr double kOverallDetectionEfficiency = 1e-3;
inline constexpr double kDefaultEmissionRate = kSingleIonDetectedRate / kOverallDetectionEfficiency;

/// Rabi frequency giving a steady-state scattering rate gamma*rho_ee == rate.
/// Throws InvalidInput if the rate is not below the saturated limit gamma/2.
double rabi_for_emission_rate(double gamma, double detuning, double rate);

double default_rabi();

struct AtomParams {
    double gamma = kDefaultGamma;            // spontaneous decay rate, rad/s
    double rabi = default_rabi();            // Omega, rad/s
    double detuning = -kDefaultGamma / 2.0;  // Delta, rad/s

    void validate() const;
    /// Integration step: min(1/gamma, 1/rabi, 1/|detuning|) / 50.
    double max_step() const;
};

struct BlochState {
    double rho_gg = 1.0;
    double rho_ee = 0.0;
    std::complex<double> rho_ge{0.0, 0.0};

    static BlochState ground() { return {}; }
    static BlochState excited() { return {0.0, 1.0, {0.0, 0.0}}; }

    double trace() const { return rho_gg + rho_ee; }
    void validate() const;
};

struct G2Curve {
    std::vector<double> delays;  // s, strictly increasing
    std::vector<double> values;
};

/// Closed-form fixed point of the Bloch equations.
BlochState steady_state(const AtomParams& atom);

/// Fixed-step RK4 over `dt` seconds; step no larger than atom.max_step().
BlochState evolve(const AtomParams& atom, const BlochState& state, double dt);

/// Same scheme with exactly `steps` equal steps.
BlochState evolve_steps(const AtomParams& atom, const BlochState& state, double dt, long long steps);

/// Excited population after the atom starts in the ground state, sampled at
/// each delay (delays >= 0, strictly increasing).
std::vector<double> excited_population_from_ground(const AtomParams& atom, std::span<const double> delays);

/// g2(tau) = rho_ee(tau | ground) / rho_ee(steady state). Throws
/// UndefinedCorrelation when the steady-state population vanishes.
G2Curve g2_cw(const AtomParams& atom, std::span<const double> delays);

/// Inverse-CDF sampler for the delay between successive emissions.
///
/// The conditional no-jump amplitude evolution from the ground state gives the
/// survival S(t) = |c_g|^2 + |c_e|^2 and the waiting-time density
/// w(t) = gamma |c_e|^2 = -dS/dt. S is tabulated on the RK4 grid and inverted
/// with linear interpolation; beyond the table the asymptotic exponential tail
/// is used. Immutable after construction; share it freely across threads.
class WaitingTimeSampler {
  public:
    explicit WaitingTimeSampler(const AtomParams& atom);

    /// Waiting time in seconds.
    double sample(Rng& rng) const;
    /// Inverse survival: the time at which S(t) == u, for u in (0, 1].
    double inverse_survival(double u) const;

    double survival(double t) const;
    double density(double t) const;  // gamma * |c_e(t)|^2
    double table_step() const { return step_; }
    double table_end() const { return step_ * static_cast<double>(survival_.size() - 1); }
    double tail_rate() const { return tail_rate_; }

  private:
    double gamma_;
    double step_;
    double tail_rate_;
    std::vector<double> survival_;
    std::vector<double> excited_;  // |c_e|^2 on the same grid
    std::vector<std::uint32_t> guide_;
};

/// One waiting-time draw; builds the tabulation on every call, so prefer a
/// WaitingTimeSampler for repeated sampling. Throws NoEmission for rabi == 0.
double waiting_time_sample(const AtomParams& atom, Rng& rng);

}  // namespace ionhom
