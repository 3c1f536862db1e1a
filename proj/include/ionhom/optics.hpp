#pragma once

// Beam-splitter network and detectors. The ancillary splitter, irises and
// collection optics are folded into a single path efficiency; the primary
// splitter applies pairwise two-photon interference between ions.

#include <cstdint>
#include <span>
#include <vector>

#include "ionhom/emitter.hpp"
#include "ionhom/types.hpp"

namespace ionhom {

inline constexpr double kPhotonHalfWidth = 5.3e-9;  // s, half width at half depth of the dip
inline constexpr double kHalfWidthToSigma = 1.1774100225154747;  // sqrt(2 ln 2)

struct OpticsParams {
    double overlap = 0.57;                                       // eta, dip depth
    double coherence_sigma = kPhotonHalfWidth / kHalfWidthToSigma;  // s
    double bs_ratio = 0.5;                                       // primary splitter reflectance
    double path_efficiency = kOverallDetectionEfficiency / 0.20;  // emission -> primary splitter

    void validate() const;
    /// Cross-ion pairs further apart than this are never matched.
    Picoseconds match_window() const { return to_ps(10.0 * coherence_sigma); }
};

struct DetectorParams {
    double qe = 0.20;
    double irf_sigma = 1e-9;  // s, Gaussian jitter per detector
    double dark_rate = 0.0;   // counts/s per channel
    double dead_time = 0.0;   // s

    void validate() const;
};

struct TimeTagRecord {
    std::uint8_t channel = 0;
    Picoseconds time = 0;

    friend bool operator==(const TimeTagRecord&, const TimeTagRecord&) = default;
};

/// Probability that a cross-ion pair with arrival difference tau (s) bunches.
double hom_kernel(double tau, const OpticsParams& optics);

struct PhotonPair {
    std::size_t first;   // index into the ion-0 arrivals
    std::size_t second;  // index into the ion-1 arrivals
    Picoseconds delta;   // second - first
};

/// Greedy nearest-neighbour matching: candidate pairs with |delta| <= window
/// are accepted in order of increasing |delta|; each photon joins at most one
/// pair. Inputs sorted ascending.
std::vector<PhotonPair> match_pairs(std::span<const Picoseconds> first, std::span<const Picoseconds> second,
                                    Picoseconds window);

/// Cut time c for chunked routing: no candidate pair (|delta| <= window)
/// joins a photon before c with one at or after c, given that photons not yet
/// generated arrive at or after `horizon`. Both inputs sorted. The latest such
/// cut is returned; it falls back to the first photon time, and is `horizon`
/// when both inputs are empty.
Picoseconds pairing_safe_cut(std::span<const Picoseconds> first, std::span<const Picoseconds> second,
                             Picoseconds window, Picoseconds horizon);

/// Independent Bernoulli survival of each photon.
EmissionStream thin(const EmissionStream& stream, double survival, Rng& rng);

/// Sends 1 or 2 ion streams and any scatter streams through the network:
/// path-efficiency loss, pair matching and bunching at the primary splitter,
/// quantum efficiency, Gaussian jitter, dead time and dark counts. All streams
/// must share one span. Dark counts fall in [begin, span), so a caller can
/// route a long run chunk by chunk. Output sorted by (time, channel).
std::vector<TimeTagRecord> route(std::span<const EmissionStream> ions, std::span<const EmissionStream> scatter,
                                 const OpticsParams& optics, const DetectorParams& det, Rng& rng,
                                 Picoseconds begin = 0);

/// Drops clicks that arrive within dead_time of the previous kept click on
/// the same channel. Tags must be sorted by time.
void apply_dead_time(std::vector<TimeTagRecord>& tags, double dead_time, int channels);

/// Detector chain only, on channel 0.
std::vector<TimeTagRecord> detect_only(const EmissionStream& stream, const DetectorParams& det, Rng& rng);

}  // namespace ionhom
