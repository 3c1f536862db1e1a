#pragma once

// Experiment configuration and its flat key=value text form. Units live in
// the key names: atom.*_mhz are angular frequencies divided by 2 pi in MHz,
// times use _s, _ns, _us or _ps suffixes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "ionhom/atomdyn.hpp"
#include "ionhom/emitter.hpp"
#include "ionhom/optics.hpp"

namespace ionhom {

enum class ExcitationMode { Cw, Pulsed };

struct ExperimentConfig {
    ExcitationMode mode = ExcitationMode::Cw;
    int n_ions = 1;
    AtomParams atom{};
    PulseParams pulse{};
    OpticsParams optics{};
    DetectorParams detector{};
    std::optional<DutyCycle> duty;
    double span = 1.0;  // s
    std::optional<std::uint64_t> seed;

    /// Throws InvalidInput naming the offending field.
    void validate(bool require_seed = true) const;
    /// Expected ion-photon detections per second on each channel.
    double expected_signal_rate_per_channel() const;
};

/// Parses key=value lines ('#' comments, blank lines ignored). Unset keys keep
/// their defaults; the duty cycle defaults to on for pulsed mode and off for cw,
/// and the scatter level follows pulse.p_exc unless given. Throws ParseError
/// (offset = line number) for syntax errors and InvalidInput for bad values.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form. parse_config(to_config_text(c)) reproduces c, with
/// unit-converted fields to 15 significant digits; the text is a fixed point.
std::string to_config_text(const ExperimentConfig& config);

}  // namespace ionhom
