#include "ionhom/atomdyn.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace ionhom {

namespace {

// Real Bloch vector: (rho_gg, rho_ee, Re rho_ge, Im rho_ge).
using Bloch4 = std::array<double, 4>;

Bloch4 bloch_rhs(const AtomParams& a, const Bloch4& y) {
    const double gg = y[0], ee = y[1], re = y[2], im = y[3];
    const double pump = a.rabi * im;
    return {-pump + a.gamma * ee, pump - a.gamma * ee, a.detuning * im - 0.5 * a.gamma * re,
            -0.5 * a.rabi * (ee - gg) - a.detuning * re - 0.5 * a.gamma * im};
}

// No-jump amplitudes: (Re c_g, Im c_g, Re c_e, Im c_e).
using Amp4 = std::array<double, 4>;

Amp4 nojump_rhs(const AtomParams& a, const Amp4& y) {
    const std::complex<double> cg{y[0], y[1]}, ce{y[2], y[3]};
    const std::complex<double> i{0.0, 1.0};
    const auto dcg = -i * (0.5 * a.rabi) * ce;
    const auto dce = -i * (0.5 * a.rabi) * cg + (i * a.detuning - 0.5 * a.gamma) * ce;
    return {dcg.real(), dcg.imag(), dce.real(), dce.imag()};
}

template <class F>
std::array<double, 4> rk4_step(F&& f, const std::array<double, 4>& y, double h) {
    auto axpy = [](const std::array<double, 4>& x, double s, const std::array<double, 4>& d) {
        return std::array<double, 4>{x[0] + s * d[0], x[1] + s * d[1], x[2] + s * d[2], x[3] + s * d[3]};
    };
    const auto k1 = f(y);
    const auto k2 = f(axpy(y, 0.5 * h, k1));
    const auto k3 = f(axpy(y, 0.5 * h, k2));
    const auto k4 = f(axpy(y, h, k3));
    std::array<double, 4> out{};
    for (int j = 0; j < 4; ++j) out[j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    return out;
}

Bloch4 evolve_raw(const AtomParams& atom, Bloch4 y, double dt, long long steps = 0) {
    if (steps <= 0) steps = std::max(1LL, static_cast<long long>(std::ceil(dt / atom.max_step() - 1e-9)));
    const double h = dt / static_cast<double>(steps);
    auto f = [&](const Bloch4& s) { return bloch_rhs(atom, s); };
    for (long long k = 0; k < steps; ++k) y = rk4_step(f, y, h);
    return y;
}

}  // namespace

double rabi_for_emission_rate(double gamma, double detuning, double rate) {
    require(gamma > 0 && std::isfinite(gamma), "gamma must be positive and finite");
    require(rate >= 0 && rate < 0.5 * gamma, "emission rate must lie in [0, gamma/2)");
    const double rho = rate / gamma;
    const double rabi2 = rho * (detuning * detuning + 0.25 * gamma * gamma) / (0.25 - 0.5 * rho);
    return std::sqrt(rabi2);
}

double default_rabi() {
    static const double rabi = rabi_for_emission_rate(kDefaultGamma, -kDefaultGamma / 2.0, kDefaultEmissionRate);
    return rabi;
}

void AtomParams::validate() const {
    require_finite(gamma, "atom.gamma");
    require_finite(rabi, "atom.rabi");
    require_finite(detuning, "atom.detuning");
    require(gamma > 0, "atom.gamma must be > 0");
    require(rabi >= 0, "atom.rabi must be >= 0");
}

double AtomParams::max_step() const {
    double rate = gamma;
    rate = std::max(rate, rabi);
    rate = std::max(rate, std::abs(detuning));
    return 1.0 / (50.0 * rate);
}

void BlochState::validate() const {
    require(std::isfinite(rho_gg) && std::isfinite(rho_ee) && std::isfinite(rho_ge.real()) &&
                std::isfinite(rho_ge.imag()),
            "Bloch state must be finite");
    require(std::abs(trace() - 1.0) <= 1e-9, "Bloch state trace must be 1");
    require(rho_ee >= -1e-12 && rho_ee <= 1.0 + 1e-12, "rho_ee must lie in [0, 1]");
    require(std::norm(rho_ge) <= rho_gg * rho_ee + 1e-9, "coherence exceeds population bound");
}

BlochState steady_state(const AtomParams& atom) {
    atom.validate();
    const double g = atom.gamma, d = atom.detuning, w2 = atom.rabi * atom.rabi;
    const double ee = 0.25 * w2 / (d * d + 0.25 * g * g + 0.5 * w2);
    const std::complex<double> i{0.0, 1.0};
    const auto ge = -i * (0.5 * atom.rabi) * (2.0 * ee - 1.0) / std::complex<double>(0.5 * g, d);
    return {1.0 - ee, ee, ge};
}

BlochState evolve(const AtomParams& atom, const BlochState& state, double dt) {
    atom.validate();
    require(std::isfinite(dt) && dt > 0, "evolve: dt must be > 0");
    state.validate();
    const auto y = evolve_raw(atom, {state.rho_gg, state.rho_ee, state.rho_ge.real(), state.rho_ge.imag()}, dt);
    return {y[0], y[1], {y[2], y[3]}};
}

BlochState evolve_steps(const AtomParams& atom, const BlochState& state, double dt, long long steps) {
    atom.validate();
    require(std::isfinite(dt) && dt > 0, "evolve: dt must be > 0");
    require(steps > 0, "evolve: steps must be > 0");
    state.validate();
    const auto y =
        evolve_raw(atom, {state.rho_gg, state.rho_ee, state.rho_ge.real(), state.rho_ge.imag()}, dt, steps);
    return {y[0], y[1], {y[2], y[3]}};
}

std::vector<double> excited_population_from_ground(const AtomParams& atom, std::span<const double> delays) {
    atom.validate();
    std::vector<double> out;
    out.reserve(delays.size());
    Bloch4 y{1.0, 0.0, 0.0, 0.0};
    double t = 0.0;
    for (std::size_t k = 0; k < delays.size(); ++k) {
        const double tau = delays[k];
        require(std::isfinite(tau) && tau >= 0, "delays must be finite and >= 0");
        require(k == 0 || tau > delays[k - 1], "delays must be strictly increasing");
        if (tau > t) y = evolve_raw(atom, y, tau - t);
        t = tau;
        out.push_back(y[1]);
    }
    return out;
}

G2Curve g2_cw(const AtomParams& atom, std::span<const double> delays) {
    const double ss = steady_state(atom).rho_ee;
    if (!(ss > 0)) throw UndefinedCorrelation("g2 undefined: steady-state excited population is zero");
    G2Curve curve{{delays.begin(), delays.end()}, excited_population_from_ground(atom, delays)};
    for (double& v : curve.values) v = std::max(0.0, v / ss);
    return curve;
}

WaitingTimeSampler::WaitingTimeSampler(const AtomParams& atom) : gamma_(atom.gamma), step_(atom.max_step()) {
    atom.validate();
    if (!(atom.rabi > 0)) throw NoEmission("undriven atom never emits");

    constexpr std::size_t kMaxPoints = std::size_t{1} << 22;
    constexpr double kSurvivalFloor = 1e-9;
    const double min_span = 20.0 / atom.gamma;

    auto f = [&](const Amp4& s) { return nojump_rhs(atom, s); };
    Amp4 y{1.0, 0.0, 0.0, 0.0};
    survival_.push_back(1.0);
    excited_.push_back(0.0);
    double t = 0.0;
    while (survival_.size() < kMaxPoints) {
        y = rk4_step(f, y, step_);
        t += step_;
        const double ce2 = y[2] * y[2] + y[3] * y[3];
        const double s = y[0] * y[0] + y[1] * y[1] + ce2;
        // Survival is non-increasing; clamp round-off.
        survival_.push_back(std::min(s, survival_.back()));
        excited_.push_back(ce2);
        if (t >= min_span && s < kSurvivalFloor) break;
    }

    const std::size_t n = survival_.size();
    const std::size_t back =
        std::min<std::size_t>(n - 1, std::max<std::size_t>(1, static_cast<std::size_t>(1.0 / (gamma_ * step_))));
    const double s_end = survival_[n - 1], s_prev = survival_[n - 1 - back];
    tail_rate_ = (s_end > 0 && s_prev > s_end) ? std::log(s_prev / s_end) / (static_cast<double>(back) * step_)
                                                : gamma_;

    const std::size_t buckets = std::min<std::size_t>(n, std::size_t{1} << 16);
    guide_.resize(buckets + 1);
    std::size_t k = 0;
    for (std::size_t m = 0; m <= buckets; ++m) {
        const double level = 1.0 - static_cast<double>(m) / static_cast<double>(buckets);
        while (k + 1 < n && survival_[k] > level) ++k;
        guide_[m] = static_cast<std::uint32_t>(k);
    }
}

double WaitingTimeSampler::inverse_survival(double u) const {
    const std::size_t n = survival_.size();
    const double s_end = survival_[n - 1];
    if (u >= 1.0) return 0.0;
    if (u < s_end) return table_end() + std::log(s_end / u) / tail_rate_;
    const std::size_t buckets = guide_.size() - 1;
    const auto m = std::min(buckets - 1, static_cast<std::size_t>((1.0 - u) * static_cast<double>(buckets)));
    std::size_t k = guide_[m];
    while (survival_[k] > u) ++k;
    if (k == 0) return 0.0;
    const double hi = survival_[k - 1], lo = survival_[k];
    const double frac = hi > lo ? (hi - u) / (hi - lo) : 0.0;
    return step_ * (static_cast<double>(k - 1) + frac);
}

double WaitingTimeSampler::sample(Rng& rng) const {
    // Uniform on (0, 1].
    const double u = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
    return inverse_survival(u);
}

double WaitingTimeSampler::survival(double t) const {
    if (t <= 0) return 1.0;
    if (t >= table_end()) return survival_.back() * std::exp(-tail_rate_ * (t - table_end()));
    const double x = t / step_;
    const auto k = static_cast<std::size_t>(x);
    const double frac = x - static_cast<double>(k);
    return survival_[k] + frac * (survival_[k + 1] - survival_[k]);
}

double WaitingTimeSampler::density(double t) const {
    if (t < 0) return 0.0;
    if (t >= table_end()) return tail_rate_ * survival(t);
    const double x = t / step_;
    const auto k = static_cast<std::size_t>(x);
    const double frac = x - static_cast<double>(k);
    return gamma_ * (excited_[k] + frac * (excited_[k + 1] - excited_[k]));
}

double waiting_time_sample(const AtomParams& atom, Rng& rng) { return WaitingTimeSampler(atom).sample(rng); }

}  // namespace ionhom
