#include "ionhom/correlator.hpp"

#include <algorithm>
#include <cmath>

namespace ionhom {

namespace {

void check_request(std::span<const TimeTagRecord> tags, Picoseconds bin_width, Picoseconds window) {
    require(bin_width > 0, "bin width must be > 0");
    require(window >= bin_width, "window must be >= bin width");
    require(window % bin_width == 0, "window must be an integer multiple of the bin width");
    for (std::size_t k = 1; k < tags.size(); ++k)
        require(tags[k].time >= tags[k - 1].time,
                "time tags must be sorted by time (record " + std::to_string(k) + ")");
}

CorrelationHistogram empty_histogram(std::span<const TimeTagRecord> tags, Picoseconds bin_width, Picoseconds window,
                                     Picoseconds span) {
    CorrelationHistogram h;
    h.bin_width = bin_width;
    h.window = window;
    h.span = span;
    h.counts.assign(static_cast<std::size_t>(2 * window / bin_width), 0);
    for (const auto& t : tags) (t.channel == 0 ? h.n_start : h.n_stop) += 1;
    return h;
}

std::size_t bin_of(Picoseconds delay, Picoseconds bin_width, Picoseconds window) {
    // delay + window >= 0 here, so integer division floors.
    return static_cast<std::size_t>((delay + window) / bin_width);
}

}  // namespace

std::int64_t CorrelationHistogram::total() const {
    std::int64_t s = 0;
    for (auto c : counts) s += c;
    return s;
}

std::size_t NormalizedCurve::zero_index() const {
    require(!delays.empty(), "empty curve");
    std::size_t best = 0;
    for (std::size_t k = 0; k < delays.size(); ++k) {
        if (delays[k] > 0 && (delays[best] <= 0 || delays[k] < delays[best])) best = k;
    }
    return best;
}

CorrelationHistogram cross_correlate(std::span<const TimeTagRecord> tags, Picoseconds bin_width, Picoseconds window,
                                     Picoseconds span) {
    check_request(tags, bin_width, window);
    auto h = empty_histogram(tags, bin_width, window, span);

    std::vector<Picoseconds> stops;
    stops.reserve(static_cast<std::size_t>(h.n_stop));
    for (const auto& t : tags)
        if (t.channel == 1) stops.push_back(t.time);

    std::size_t lo = 0;
    for (const auto& start : tags) {
        if (start.channel != 0) continue;
        const Picoseconds first = start.time - window, last = start.time + window;
        while (lo < stops.size() && stops[lo] < first) ++lo;
        for (std::size_t j = lo; j < stops.size() && stops[j] < last; ++j)
            ++h.counts[bin_of(stops[j] - start.time, bin_width, window)];
    }
    return h;
}

CorrelationHistogram cross_correlate(std::span<const TimeTagRecord> tags, Picoseconds bin_width, Picoseconds window) {
    const Picoseconds span = tags.empty() ? 0 : tags.back().time + 1;
    return cross_correlate(tags, bin_width, window, span);
}

CorrelationHistogram cross_correlate_brute_force(std::span<const TimeTagRecord> tags, Picoseconds bin_width,
                                                 Picoseconds window, Picoseconds span) {
    require(bin_width > 0 && window >= bin_width && window % bin_width == 0, "invalid bin/window");
    auto h = empty_histogram(tags, bin_width, window, span);
    for (const auto& a : tags) {
        if (a.channel != 0) continue;
        for (const auto& b : tags) {
            if (b.channel != 1) continue;
            const Picoseconds d = b.time - a.time;
            if (d >= -window && d < window) ++h.counts[bin_of(d, bin_width, window)];
        }
    }
    return h;
}

NormalizedCurve normalize(const CorrelationHistogram& hist, std::optional<double> live_time) {
    if (hist.n_start <= 0 || hist.n_stop <= 0)
        throw UndefinedCorrelation("normalization undefined: a channel has no events");
    const double span = live_time ? *live_time : to_seconds(hist.span);
    if (!(span > 0)) throw UndefinedCorrelation("normalization undefined: zero span");

    const double norm = static_cast<double>(hist.n_start) * static_cast<double>(hist.n_stop) *
                        to_seconds(hist.bin_width) / span;
    NormalizedCurve c;
    c.delays.reserve(hist.counts.size());
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        const auto n = static_cast<double>(hist.counts[k]);
        c.delays.push_back(hist.bin_center(k) / kPsPerSecond);
        c.values.push_back(n / norm);
        c.stat_err.push_back(std::sqrt(n) / norm);
    }
    return c;
}

CorrelationHistogram rebin(const CorrelationHistogram& hist, int factor) {
    require(factor >= 1, "rebin factor must be >= 1");
    const Picoseconds bin = hist.bin_width * factor;
    require(hist.window % bin == 0, "rebinned width must divide the window");
    CorrelationHistogram out = hist;
    out.bin_width = bin;
    out.counts.assign(hist.counts.size() / static_cast<std::size_t>(factor), 0);
    for (std::size_t k = 0; k < hist.counts.size(); ++k) out.counts[k / static_cast<std::size_t>(factor)] += hist.counts[k];
    return out;
}

namespace {

void require_same_grid(const NormalizedCurve& a, const NormalizedCurve& b) {
    require(a.delays.size() == b.delays.size(), "curves are on different delay grids");
    for (std::size_t k = 0; k < a.delays.size(); ++k)
        require(std::abs(a.delays[k] - b.delays[k]) <= 1e-15, "curves are on different delay grids");
}

}  // namespace

NormalizedCurve decompose_p2(const NormalizedCurve& p2, const NormalizedCurve& g2) {
    require_same_grid(p2, g2);
    NormalizedCurve out{p2.delays, {}, {}};
    for (std::size_t k = 0; k < p2.values.size(); ++k) {
        out.values.push_back(2.0 * p2.values[k] - g2.values[k]);
        out.stat_err.push_back(std::hypot(2.0 * p2.stat_err[k], g2.stat_err[k]));
    }
    return out;
}

NormalizedCurve compose_p2(const NormalizedCurve& g2, const NormalizedCurve& p2_cross) {
    require_same_grid(g2, p2_cross);
    NormalizedCurve out{g2.delays, {}, {}};
    for (std::size_t k = 0; k < g2.values.size(); ++k) {
        out.values.push_back(0.5 * (g2.values[k] + p2_cross.values[k]));
        out.stat_err.push_back(0.5 * std::hypot(g2.stat_err[k], p2_cross.stat_err[k]));
    }
    return out;
}

std::vector<PeakMetric> peak_metrics(const CorrelationHistogram& hist, double rep_period) {
    const Picoseconds rep = to_ps(rep_period);
    require(rep > 0, "repetition period must be > 0");
    require(hist.window >= 2 * rep, "window must span at least two repetition periods");

    // Peak m owns bin centers in [m*rep - rep/2, m*rep + rep/2).
    const double half = 0.5 * static_cast<double>(rep);
    const int m_max = static_cast<int>(std::floor((static_cast<double>(hist.window) - half) / static_cast<double>(rep)));
    std::vector<PeakMetric> peaks;
    for (int m = -m_max; m <= m_max; ++m) peaks.push_back({m, 0, 0});
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        const double c = hist.bin_center(k);
        const int m = static_cast<int>(std::floor((c + half) / static_cast<double>(rep)));
        if (m < -m_max || m > m_max) continue;
        auto& p = peaks[static_cast<std::size_t>(m + m_max)];
        p.area += hist.counts[k];
        p.height = std::max(p.height, hist.counts[k]);
    }
    return peaks;
}

double zero_peak_ratio(std::span<const PeakMetric> peaks) {
    double zero = 0, side = 0;
    int n_side = 0;
    for (const auto& p : peaks) {
        if (p.index == 0) {
            zero = static_cast<double>(p.area);
        } else {
            side += static_cast<double>(p.area);
            ++n_side;
        }
    }
    require(n_side > 0 && side > 0, "no side peaks with counts");
    return zero / (side / n_side);
}

}  // namespace ionhom
