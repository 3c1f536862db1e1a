#include "ionhom/optics.hpp"

#include <algorithm>
#include <limits>
#include <tuple>

namespace ionhom {

void OpticsParams::validate() const {
    require(overlap >= 0 && overlap <= 1, "optics.overlap must lie in [0, 1]");
    require(std::isfinite(coherence_sigma) && coherence_sigma > 0, "optics.coherence_sigma must be > 0");
    require(bs_ratio > 0 && bs_ratio < 1, "optics.bs_ratio must lie in (0, 1)");
    require(path_efficiency >= 0 && path_efficiency <= 1, "optics.path_efficiency must lie in [0, 1]");
}

void DetectorParams::validate() const {
    require(qe >= 0 && qe <= 1, "detector.qe must lie in [0, 1]");
    require(std::isfinite(irf_sigma) && irf_sigma >= 0, "detector.irf_sigma must be >= 0");
    require(std::isfinite(dark_rate) && dark_rate >= 0, "detector.dark_rate must be >= 0");
    require(std::isfinite(dead_time) && dead_time >= 0, "detector.dead_time must be >= 0");
}

double hom_kernel(double tau, const OpticsParams& optics) {
    const double x = tau / optics.coherence_sigma;
    return optics.overlap * std::exp(-0.5 * x * x);
}

std::vector<PhotonPair> match_pairs(std::span<const Picoseconds> first, std::span<const Picoseconds> second,
                                    Picoseconds window) {
    std::vector<PhotonPair> candidates;
    std::size_t lo = 0;
    for (std::size_t i = 0; i < first.size(); ++i) {
        while (lo < second.size() && second[lo] < first[i] - window) ++lo;
        for (std::size_t j = lo; j < second.size() && second[j] <= first[i] + window; ++j)
            candidates.push_back({i, j, second[j] - first[i]});
    }
    std::sort(candidates.begin(), candidates.end(), [](const PhotonPair& a, const PhotonPair& b) {
        return std::make_tuple(std::abs(a.delta), a.first, a.second) <
               std::make_tuple(std::abs(b.delta), b.first, b.second);
    });

    std::vector<char> used_first(first.size(), 0), used_second(second.size(), 0);
    std::vector<PhotonPair> pairs;
    for (const auto& c : candidates) {
        if (used_first[c.first] || used_second[c.second]) continue;
        used_first[c.first] = used_second[c.second] = 1;
        pairs.push_back(c);
    }
    std::sort(pairs.begin(), pairs.end(), [](const PhotonPair& a, const PhotonPair& b) { return a.first < b.first; });
    return pairs;
}

Picoseconds pairing_safe_cut(std::span<const Picoseconds> first, std::span<const Picoseconds> second,
                             Picoseconds window, Picoseconds horizon) {
    std::vector<Picoseconds> merged(first.size() + second.size());
    std::merge(first.begin(), first.end(), second.begin(), second.end(), merged.begin());
    Picoseconds next = horizon;  // earliest time at or after the candidate cut
    for (auto it = merged.rbegin(); it != merged.rend(); ++it) {
        if (next - *it > window) return next;
        next = *it;
    }
    return next;
}

EmissionStream thin(const EmissionStream& stream, double survival, Rng& rng) {
    require(survival >= 0 && survival <= 1, "survival probability must lie in [0, 1]");
    EmissionStream out{stream.source_id, stream.kind, {}, stream.span};
    if (survival >= 1) {
        out.times = stream.times;
        return out;
    }
    std::bernoulli_distribution keep(survival);
    out.times.reserve(static_cast<std::size_t>(static_cast<double>(stream.times.size()) * survival * 1.1) + 16);
    for (auto t : stream.times)
        if (keep(rng)) out.times.push_back(t);
    return out;
}

namespace {

struct Photon {
    Picoseconds time;
    std::uint8_t channel;
};

// qe, jitter, dark counts, sort, dead time.
std::vector<TimeTagRecord> detect(std::vector<Photon>& photons, Picoseconds begin, Picoseconds span, int channels,
                                  const DetectorParams& det, Rng& rng) {
    std::bernoulli_distribution detected(det.qe);
    std::normal_distribution<double> jitter(0.0, det.irf_sigma * kPsPerSecond);
    const bool blur = det.irf_sigma > 0;

    std::vector<TimeTagRecord> tags;
    tags.reserve(static_cast<std::size_t>(static_cast<double>(photons.size()) * det.qe * 1.05) + 16);
    for (const auto& p : photons) {
        if (!detected(rng)) continue;
        Picoseconds t = p.time;
        if (blur) t += static_cast<Picoseconds>(std::llround(jitter(rng)));
        tags.push_back({p.channel, std::max<Picoseconds>(0, t)});
    }

    if (det.dark_rate > 0 && span > begin) {
        std::poisson_distribution<long long> dark_count(det.dark_rate * to_seconds(span - begin));
        std::uniform_int_distribution<Picoseconds> when(begin, span - 1);
        for (int c = 0; c < channels; ++c) {
            for (long long n = dark_count(rng); n > 0; --n)
                tags.push_back({static_cast<std::uint8_t>(c), when(rng)});
        }
    }

    std::sort(tags.begin(), tags.end(), [](const TimeTagRecord& a, const TimeTagRecord& b) {
        return a.time != b.time ? a.time < b.time : a.channel < b.channel;
    });

    apply_dead_time(tags, det.dead_time, channels);
    return tags;
}

}  // namespace

void apply_dead_time(std::vector<TimeTagRecord>& tags, double dead_time, int channels) {
    if (dead_time <= 0) return;
    const Picoseconds dead = to_ps(dead_time);
    std::vector<Picoseconds> last(static_cast<std::size_t>(channels), std::numeric_limits<Picoseconds>::min());
    std::erase_if(tags, [&](const TimeTagRecord& r) {
        require(r.channel < channels, "dead time: channel out of range");
        auto& l = last[r.channel];
        if (l != std::numeric_limits<Picoseconds>::min() && r.time - l < dead) return true;
        l = r.time;
        return false;
    });
}

std::vector<TimeTagRecord> route(std::span<const EmissionStream> ions, std::span<const EmissionStream> scatter,
                                 const OpticsParams& optics, const DetectorParams& det, Rng& rng,
                                 Picoseconds begin) {
    optics.validate();
    det.validate();
    require(ions.size() == 1 || ions.size() == 2, "route needs one or two ion streams");
    const Picoseconds span = ions.front().span;
    for (const auto& s : ions) require(s.span == span, "route: stream spans differ");
    for (const auto& s : scatter) require(s.span == span, "route: stream spans differ");

    std::vector<EmissionStream> arriving;
    for (const auto& s : ions) arriving.push_back(thin(s, optics.path_efficiency, rng));
    std::vector<EmissionStream> arriving_scatter;
    for (const auto& s : scatter) arriving_scatter.push_back(thin(s, optics.path_efficiency, rng));

    std::bernoulli_distribution reflect(optics.bs_ratio);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto port = [&]() { return static_cast<std::uint8_t>(reflect(rng) ? 1 : 0); };

    std::vector<std::vector<int>> channel(arriving.size());
    for (std::size_t k = 0; k < arriving.size(); ++k) channel[k].assign(arriving[k].times.size(), -1);

    if (arriving.size() == 2) {
        const auto pairs = match_pairs(arriving[0].times, arriving[1].times, optics.match_window());
        for (const auto& p : pairs) {
            if (unit(rng) < hom_kernel(to_seconds(p.delta), optics)) {
                const int c = port();
                channel[0][p.first] = channel[1][p.second] = c;
            }
        }
    }

    std::vector<Photon> photons;
    std::size_t total = 0;
    for (const auto& s : arriving) total += s.times.size();
    for (const auto& s : arriving_scatter) total += s.times.size();
    photons.reserve(total);
    for (std::size_t k = 0; k < arriving.size(); ++k) {
        for (std::size_t i = 0; i < arriving[k].times.size(); ++i) {
            const int c = channel[k][i] >= 0 ? channel[k][i] : port();
            photons.push_back({arriving[k].times[i], static_cast<std::uint8_t>(c)});
        }
    }
    for (const auto& s : arriving_scatter)
        for (auto t : s.times) photons.push_back({t, port()});

    return detect(photons, begin, span, 2, det, rng);
}

std::vector<TimeTagRecord> detect_only(const EmissionStream& stream, const DetectorParams& det, Rng& rng) {
    det.validate();
    std::vector<Photon> photons;
    photons.reserve(stream.times.size());
    for (auto t : stream.times) photons.push_back({t, 0});
    return detect(photons, 0, stream.span, 1, det, rng);
}

}  // namespace ionhom
