#pragma once

// Photon emission time streams for cw (quantum-jump renewal process) and
// pulsed excitation, plus the cooling/measurement duty cycle.

#include <memory>
#include <utility>
#include <vector>

#include "ionhom/atomdyn.hpp"
#include "ionhom/types.hpp"

namespace ionhom {

enum class SourceKind { Ion, Scatter };

struct EmissionStream {
    int source_id = 0;
    SourceKind kind = SourceKind::Ion;
    std::vector<Picoseconds> times;  // strictly increasing, within [0, span]
    Picoseconds span = 0;

    double rate() const { return span > 0 ? static_cast<double>(times.size()) / to_seconds(span) : 0.0; }
    /// Throws InvalidInput if the ordering or range invariant is broken.
    void validate() const;
};

/// Mean scatter photons per pulse (emission level) such that the zero-delay
/// peak area is `area_ratio` of a side peak. Ion and scatter photons share
/// the same downstream efficiency, so the result is independent of it.
double scatter_for_zero_peak_ratio(double p_exc, double area_ratio);

struct PulseParams {
    double rep_period = 37.5e-9;  // s
    double p_exc = 0.20;
    double lifetime = kExcitedLifetime;  // s
    double scatter_per_pulse = scatter_for_zero_peak_ratio(0.20, 0.02);
    double pulse_duration = 1e-12;  // s; scatter photons arrive inside this window

    void validate() const;
};

struct DutyCycle {
    double cool = 150e-6;    // s
    double measure = 50e-6;  // s

    void validate() const;
    double measure_fraction() const { return measure / (cool + measure); }
};

/// Quantum-jump emitter for one cw-driven ion. Each call to emit_until
/// continues the same renewal process, so chunked generation is equivalent
/// to one long call.
class CwEmitter {
  public:
    CwEmitter(std::shared_ptr<const WaitingTimeSampler> sampler, Rng rng);

    /// All emissions with time < end, in increasing order.
    std::vector<Picoseconds> emit_until(Picoseconds end);
    Rng take_rng() { return std::move(rng_); }

  private:
    std::shared_ptr<const WaitingTimeSampler> sampler_;
    Rng rng_;
    double next_exact_ = 0.0;  // ps
    Picoseconds last_ = -1;
    Picoseconds next_ = 0;
    void advance();
};

/// Pulsed emitter: pulses at k * rep_period, k = 0, 1, ...
class PulsedEmitter {
  public:
    PulsedEmitter(const PulseParams& pulse, Rng rng);

    struct Chunk {
        std::vector<Picoseconds> ion;
        std::vector<Picoseconds> scatter;
    };
    /// Photons with time < end. Pulses are generated up to `end`; photons
    /// emitted later are held for the next call.
    Chunk emit_until(Picoseconds end);
    Rng take_rng() { return std::move(rng_); }

  private:
    PulseParams pulse_;
    Rng rng_;
    Picoseconds rep_;
    Picoseconds window_;
    std::int64_t next_pulse_ = 0;
    std::vector<Picoseconds> pending_ion_;
    std::vector<Picoseconds> pending_scatter_;
    Picoseconds last_ion_ = -1;
    Picoseconds last_scatter_ = -1;
};

/// Renewal process of waiting-time draws starting from the ground state at t=0.
/// Rabi frequency zero gives an empty stream.
EmissionStream simulate_cw_stream(const AtomParams& atom, double span, Rng& rng, int source_id = 0);

/// Returns (ion photons, scatter photons) over [0, span].
std::pair<EmissionStream, EmissionStream> simulate_pulsed_stream(const PulseParams& pulse, double span, Rng& rng,
                                                                 int source_id = 0);

/// True when t falls in a measurement window; each cycle is measure then cool.
bool in_measurement_window(Picoseconds t, const DutyCycle& duty);

EmissionStream apply_duty_cycle(const EmissionStream& stream, const DutyCycle& duty);

/// Sort and nudge equal timestamps up by 1 ps so the sequence is strictly
/// increasing, starting above `floor`.
void make_strictly_increasing(std::vector<Picoseconds>& times, Picoseconds floor = -1);

}  // namespace ionhom
