#pragma once

// Start-stop coincidence histograms (channel 0 starts, channel 1 stops, all
// pairs within the window), normalization to g2-style curves, and the
// two-ion joint-detection decomposition.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ionhom/optics.hpp"
#include "ionhom/types.hpp"

namespace ionhom {

/// Signed-delay histogram. Bin k covers [k*bin - window, (k+1)*bin - window)
/// in picoseconds; the zero-delay bin is [0, bin).
struct CorrelationHistogram {
    Picoseconds bin_width = 0;
    Picoseconds window = 0;
    std::vector<std::int64_t> counts;
    std::int64_t n_start = 0;  // channel-0 events
    std::int64_t n_stop = 0;   // channel-1 events
    Picoseconds span = 0;

    std::size_t zero_bin() const { return static_cast<std::size_t>(window / bin_width); }
    Picoseconds bin_lower(std::size_t k) const { return static_cast<Picoseconds>(k) * bin_width - window; }
    double bin_center(std::size_t k) const {
        return static_cast<double>(bin_lower(k)) + 0.5 * static_cast<double>(bin_width);
    }
    std::int64_t total() const;
};

struct NormalizedCurve {
    std::vector<double> delays;  // bin centers, s
    std::vector<double> values;
    std::vector<double> stat_err;

    /// Value of the bin whose interval contains delay 0 (delay centers within
    /// half a bin of +bin/2), i.e. the [0, bin) bin.
    std::size_t zero_index() const;
};

/// Two-pointer sliding window, O(N * pairs per window). Counts pairs with
/// -window <= stop - start < window. Throws InvalidInput for unsorted tags,
/// non-positive bin, or a window that is not a positive multiple of the bin.
CorrelationHistogram cross_correlate(std::span<const TimeTagRecord> tags, Picoseconds bin_width, Picoseconds window,
                                     Picoseconds span);

/// Same, with span taken as last timestamp + 1 ps.
CorrelationHistogram cross_correlate(std::span<const TimeTagRecord> tags, Picoseconds bin_width, Picoseconds window);

/// Reference O(N^2) implementation; used by the --oracle check.
CorrelationHistogram cross_correlate_brute_force(std::span<const TimeTagRecord> tags, Picoseconds bin_width,
                                                 Picoseconds window, Picoseconds span);

/// values = counts * T / (n_start * n_stop * bin). T is the span, or the live
/// time when given (gated acquisition). Throws UndefinedCorrelation for an
/// empty channel or zero span.
NormalizedCurve normalize(const CorrelationHistogram& hist, std::optional<double> live_time = std::nullopt);

/// Sums `factor` adjacent bins; the window must stay a multiple of the new bin.
CorrelationHistogram rebin(const CorrelationHistogram& hist, int factor);

/// Cross-ion joint detection P2_2 = 2 P2 - g2 for a symmetric set-up.
NormalizedCurve decompose_p2(const NormalizedCurve& p2, const NormalizedCurve& g2);

/// Forward relation P2 = (g2 + P2_2) / 2.
NormalizedCurve compose_p2(const NormalizedCurve& g2, const NormalizedCurve& p2_cross);

struct PeakMetric {
    int index = 0;  // multiple of the repetition period
    std::int64_t area = 0;
    std::int64_t height = 0;
};

/// Integrates +-rep/2 around each multiple of rep_period that fits inside the
/// window; a bin belongs to the peak containing its center.
std::vector<PeakMetric> peak_metrics(const CorrelationHistogram& hist, double rep_period);

/// Zero-delay peak area over the mean of the other peaks.
double zero_peak_ratio(std::span<const PeakMetric> peaks);

}  // namespace ionhom
