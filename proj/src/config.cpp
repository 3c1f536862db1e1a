#include "ionhom/config.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ionhom {

namespace {

constexpr double kTwoPiMHz = 2.0 * M_PI * 1e6;

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(std::string_view key, std::string_view v) {
    double out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        throw InvalidInput(std::string(key) + ": expected a finite number, got '" + std::string(v) + "'");
    return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw InvalidInput(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InvalidInput(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

// Unit-converted values, 15 significant digits.
std::string fmt_unit(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

}  // namespace

void ExperimentConfig::validate(bool require_seed) const {
    require(n_ions == 1 || n_ions == 2, "n_ions must be 1 or 2");
    require(std::isfinite(span) && span > 0, "span_s must be > 0");
    require(!require_seed || seed.has_value(), "seed is required (no wall-clock default)");
    atom.validate();
    pulse.validate();
    optics.validate();
    detector.validate();
    if (duty) duty->validate();
    if (mode == ExcitationMode::Pulsed) require(span > pulse.rep_period, "span_s must exceed pulse.rep_period_ns");
}

double ExperimentConfig::expected_signal_rate_per_channel() const {
    double per_ion = 0;
    if (mode == ExcitationMode::Cw) {
        per_ion = atom.gamma * steady_state(atom).rho_ee;
    } else {
        per_ion = (pulse.p_exc + pulse.scatter_per_pulse) / pulse.rep_period;
        if (duty) per_ion *= duty->measure_fraction();
    }
    return n_ions * per_ion * optics.path_efficiency * detector.qe / 2.0;
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    DutyCycle duty;
    std::optional<bool> duty_enabled;
    bool scatter_given = false;

    using Setter = std::function<void(std::string_view key, std::string_view value)>;
    const std::map<std::string, Setter, std::less<>> setters = {
        {"mode",
         [&](auto k, auto v) {
             if (v == "cw")
                 cfg.mode = ExcitationMode::Cw;
             else if (v == "pulsed")
                 cfg.mode = ExcitationMode::Pulsed;
             else
                 throw InvalidInput(std::string(k) + ": expected cw or pulsed, got '" + std::string(v) + "'");
         }},
        {"n_ions", [&](auto k, auto v) { cfg.n_ions = static_cast<int>(parse_u64(k, v)); }},
        {"span_s", [&](auto k, auto v) { cfg.span = parse_double(k, v); }},
        {"seed", [&](auto k, auto v) { cfg.seed = parse_u64(k, v); }},
        {"atom.gamma_mhz", [&](auto k, auto v) { cfg.atom.gamma = parse_double(k, v) * kTwoPiMHz; }},
        {"atom.rabi_mhz", [&](auto k, auto v) { cfg.atom.rabi = parse_double(k, v) * kTwoPiMHz; }},
        {"atom.detuning_mhz", [&](auto k, auto v) { cfg.atom.detuning = parse_double(k, v) * kTwoPiMHz; }},
        {"pulse.rep_period_ns", [&](auto k, auto v) { cfg.pulse.rep_period = parse_double(k, v) * 1e-9; }},
        {"pulse.p_exc", [&](auto k, auto v) { cfg.pulse.p_exc = parse_double(k, v); }},
        {"pulse.lifetime_ns", [&](auto k, auto v) { cfg.pulse.lifetime = parse_double(k, v) * 1e-9; }},
        {"pulse.scatter_per_pulse",
         [&](auto k, auto v) {
             cfg.pulse.scatter_per_pulse = parse_double(k, v);
             scatter_given = true;
         }},
        {"pulse.pulse_duration_ps", [&](auto k, auto v) { cfg.pulse.pulse_duration = parse_double(k, v) * 1e-12; }},
        {"optics.overlap", [&](auto k, auto v) { cfg.optics.overlap = parse_double(k, v); }},
        {"optics.coherence_sigma_ns", [&](auto k, auto v) { cfg.optics.coherence_sigma = parse_double(k, v) * 1e-9; }},
        {"optics.photon_half_width_ns",
         [&](auto k, auto v) { cfg.optics.coherence_sigma = parse_double(k, v) * 1e-9 / kHalfWidthToSigma; }},
        {"optics.bs_ratio", [&](auto k, auto v) { cfg.optics.bs_ratio = parse_double(k, v); }},
        {"optics.path_efficiency", [&](auto k, auto v) { cfg.optics.path_efficiency = parse_double(k, v); }},
        {"detector.qe", [&](auto k, auto v) { cfg.detector.qe = parse_double(k, v); }},
        {"detector.irf_sigma_ns", [&](auto k, auto v) { cfg.detector.irf_sigma = parse_double(k, v) * 1e-9; }},
        {"detector.dark_rate_hz", [&](auto k, auto v) { cfg.detector.dark_rate = parse_double(k, v); }},
        {"detector.dead_time_ns", [&](auto k, auto v) { cfg.detector.dead_time = parse_double(k, v) * 1e-9; }},
        {"duty.enabled", [&](auto k, auto v) { duty_enabled = parse_bool(k, v); }},
        {"duty.cool_us", [&](auto k, auto v) { duty.cool = parse_double(k, v) * 1e-6; }},
        {"duty.measure_us", [&](auto k, auto v) { duty.measure = parse_double(k, v) * 1e-6; }},
    };

    std::uint64_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        auto line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("config line is not key=value", line_no);
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) throw ParseError("unknown config key '" + std::string(key) + "'", line_no);
        it->second(key, value);
    }

    if (!scatter_given) cfg.pulse.scatter_per_pulse = scatter_for_zero_peak_ratio(cfg.pulse.p_exc, 0.02);
    if (duty_enabled.value_or(cfg.mode == ExcitationMode::Pulsed)) cfg.duty = duty;
    cfg.validate(false);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_config_text(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "mode=" << (c.mode == ExcitationMode::Cw ? "cw" : "pulsed") << "\n";
    o << "n_ions=" << c.n_ions << "\n";
    o << "span_s=" << fmt(c.span) << "\n";
    if (c.seed) o << "seed=" << *c.seed << "\n";
    o << "atom.gamma_mhz=" << fmt_unit(c.atom.gamma / kTwoPiMHz) << "\n";
    o << "atom.rabi_mhz=" << fmt_unit(c.atom.rabi / kTwoPiMHz) << "\n";
    o << "atom.detuning_mhz=" << fmt_unit(c.atom.detuning / kTwoPiMHz) << "\n";
    o << "pulse.rep_period_ns=" << fmt_unit(c.pulse.rep_period * 1e9) << "\n";
    o << "pulse.p_exc=" << fmt(c.pulse.p_exc) << "\n";
    o << "pulse.lifetime_ns=" << fmt_unit(c.pulse.lifetime * 1e9) << "\n";
    o << "pulse.scatter_per_pulse=" << fmt(c.pulse.scatter_per_pulse) << "\n";
    o << "pulse.pulse_duration_ps=" << fmt_unit(c.pulse.pulse_duration * 1e12) << "\n";
    o << "optics.overlap=" << fmt(c.optics.overlap) << "\n";
    o << "optics.coherence_sigma_ns=" << fmt_unit(c.optics.coherence_sigma * 1e9) << "\n";
    o << "optics.bs_ratio=" << fmt(c.optics.bs_ratio) << "\n";
    o << "optics.path_efficiency=" << fmt(c.optics.path_efficiency) << "\n";
    o << "detector.qe=" << fmt(c.detector.qe) << "\n";
    o << "detector.irf_sigma_ns=" << fmt_unit(c.detector.irf_sigma * 1e9) << "\n";
    o << "detector.dark_rate_hz=" << fmt(c.detector.dark_rate) << "\n";
    o << "detector.dead_time_ns=" << fmt_unit(c.detector.dead_time * 1e9) << "\n";
    o << "duty.enabled=" << (c.duty ? "true" : "false") << "\n";
    const DutyCycle d = c.duty.value_or(DutyCycle{});
    o << "duty.cool_us=" << fmt_unit(d.cool * 1e6) << "\n";
    o << "duty.measure_us=" << fmt_unit(d.measure * 1e6) << "\n";
    return o.str();
}

}  // namespace ionhom
