#pragma once

// simulate -> correlate -> fit -> report, and the canned figure runs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ionhom/config.hpp"
#include "ionhom/correlator.hpp"
#include "ionhom/fitkit.hpp"
#include "ionhom/timetag_io.hpp"

namespace ionhom {

/// A check the run was asked to make did not hold: oracle mismatch, fit
/// non-convergence, or a figure headline outside tolerance.
class CheckFailed : public Error {
  public:
    using Error::Error;
};

/// Failure inside a named stage of a figure run; keeps the exit code of the cause.
class StageFailure : public Error {
  public:
    StageFailure(const std::string& stage, const std::string& what, int exit_code)
        : Error("stage " + stage + ": " + what), stage_(stage), exit_code_(exit_code) {}
    const std::string& stage() const { return stage_; }
    int exit_code() const { return exit_code_; }

  private:
    std::string stage_;
    int exit_code_;
};

/// 0 ok, 1 validation, 2 I/O or parse, 3 failed check.
int exit_code_for(const std::exception& e);

struct SimulatedRun {
    std::vector<TimeTagRecord> tags;
    Picoseconds span = 0;
    std::optional<double> live_time;  // s, set when a duty cycle gates the light
    std::uint64_t emitted = 0;        // ion photons emitted, before any loss
};

/// Generates the detected clicks for a validated config with a seed. Runs in
/// fixed 10 ms chunks so memory follows the detected count, not the emitted one.
SimulatedRun simulate_tags(const ExperimentConfig& config);

/// Total measurement-window time inside [0, span].
double live_time(Picoseconds span, const DutyCycle& duty);

/// Writes the time-tag file; returns the number of records.
std::uint64_t run_simulate(const ExperimentConfig& config, const std::filesystem::path& out);

struct CorrelateOptions {
    Picoseconds bin = 1000;
    Picoseconds window = 100000;
    bool oracle = false;
    std::optional<Picoseconds> span;
    std::optional<double> live_time;
};

/// Reads a time-tag file and writes the histogram CSV. With oracle set, the
/// brute-force histogram must match bin for bin or CheckFailed is thrown.
CorrelationHistogram run_correlate(const std::filesystem::path& in, const std::filesystem::path& out,
                                   const CorrelateOptions& options);

enum class FitModel { Dip, Peak, Rabi };
FitModel parse_fit_model(const std::string& name);

struct FitRunOptions {
    std::optional<double> center;     // s, peak model
    std::optional<double> irf_sigma;  // s, coincidence-level blur for peak and rabi models
};

/// Fits the CSV, writes a text report to `out` and the model curve to
/// <out stem>_model.csv. Non-convergence still writes both, then throws CheckFailed.
FitResult run_fit(const std::filesystem::path& in, FitModel model, const std::filesystem::path& out,
                  const FitRunOptions& options = {});

std::string format_fit_report(const FitResult& fit, const std::string& model, const std::vector<std::string>& notes);

// Figure presets. `scale` multiplies the simulated span.

ExperimentConfig fig3_one_ion_config(std::uint64_t seed, double scale = 1.0);
ExperimentConfig fig3_two_ion_config(double overlap, std::uint64_t seed, double scale = 1.0);
ExperimentConfig fig2_config(std::uint64_t seed, double scale = 1.0);

inline constexpr Picoseconds kCwBin = 1000;
inline constexpr Picoseconds kCwWindow = 100000;
inline constexpr Picoseconds kPulsedBin = 250;
inline constexpr Picoseconds kPulsedWindow = 150000;
inline constexpr int kFlatnessRebin = 10;

struct Headline {
    std::string name;
    double value = 0;
    double stat_err = 0;
    double target = 0;
    double tolerance = 0;
    bool pass = false;
    std::string note;
};

std::string format_headline(const Headline& h);

struct CwFigureData {
    CorrelationHistogram one_ion, two_ion_no_overlap, two_ion_overlap;
    NormalizedCurve g2, p2_no_overlap, p2_overlap;
    std::uint64_t one_ion_tags = 0;
    double one_ion_seconds = 0;  // wall time of the one-ion simulate + correlate
};

/// Runs the three cw configurations; the Fig. 4 analysis reuses them.
CwFigureData run_cw_figure_data(std::uint64_t seed, double scale = 1.0);

std::vector<Headline> fig3_headlines(const CwFigureData& data);

struct Fig4Analysis {
    NormalizedCurve cross_no_overlap, cross_overlap;  // decomposed, full resolution
    NormalizedCurve flat_no_overlap;                  // decomposed after rebinning
    FitResult dip;
    std::vector<Headline> headlines;
};
Fig4Analysis analyze_fig4(const CwFigureData& data);

struct PulsedFigureData {
    CorrelationHistogram hist;
    NormalizedCurve curve;
    std::vector<PeakMetric> peaks;
    double ratio = 0, ratio_err = 0;
    FitResult side_peak;
    double rep_period = 0;
    double irf_sigma = 0;  // coincidence-level
};
PulsedFigureData run_pulsed_figure_data(std::uint64_t seed, double scale = 1.0);
std::vector<Headline> fig2_headlines(const PulsedFigureData& data);

/// Writes CSVs and summary.txt into out_dir; returns the headlines. Any
/// headline failing its tolerance makes the caller exit with code 3.
std::vector<Headline> run_figure(const std::string& name, std::uint64_t seed, const std::filesystem::path& out_dir,
                                 double scale = 1.0, std::ostream* log = nullptr);

}  // namespace ionhom
