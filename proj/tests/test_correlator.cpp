#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ionhom/correlator.hpp"
#include "oracles.hpp"

using namespace ionhom;

namespace {

std::vector<TimeTagRecord> random_tags(std::size_t n, Picoseconds span, Rng& rng) {
    std::uniform_int_distribution<Picoseconds> when(0, span - 1);
    std::bernoulli_distribution ch(0.5);
    std::vector<TimeTagRecord> tags(n);
    for (auto& t : tags) t = {static_cast<std::uint8_t>(ch(rng)), when(rng)};
    std::sort(tags.begin(), tags.end(), [](auto& a, auto& b) { return a.time < b.time; });
    return tags;
}

// Independent Poisson clicks on both channels.
std::vector<TimeTagRecord> poisson_tags(double rate, double span, Rng& rng) {
    std::vector<TimeTagRecord> tags;
    for (std::uint8_t ch : {0, 1}) {
        std::exponential_distribution<double> gap(rate);
        for (double t = gap(rng); t < span; t += gap(rng)) tags.push_back({ch, to_ps(t)});
    }
    std::sort(tags.begin(), tags.end(), [](auto& a, auto& b) { return a.time < b.time; });
    return tags;
}

NormalizedCurve grid_curve(std::vector<double> values) {
    NormalizedCurve c;
    for (std::size_t k = 0; k < values.size(); ++k) c.delays.push_back((static_cast<double>(k) - 1.5) * 1e-9);
    c.values = std::move(values);
    c.stat_err.assign(c.values.size(), 0.01);
    return c;
}

}  // namespace

TEST_CASE("histogram: a single pair lands in the bin containing its delay") {
    const std::vector<TimeTagRecord> tags{{0, 0}, {1, 2000}};
    const auto h = cross_correlate(tags, 1000, 10000);
    REQUIRE(h.counts.size() == 20);
    CHECK(h.total() == 1);
    CHECK(h.counts[h.zero_bin() + 2] == 1);
    CHECK(h.bin_lower(h.zero_bin() + 2) == 2000);
    CHECK(h.n_start == 1);
    CHECK(h.n_stop == 1);
    CHECK(h.span == 2001);
}

TEST_CASE("histogram: an empty channel gives zeros and an undefined normalization") {
    const std::vector<TimeTagRecord> tags{{0, 0}, {0, 500}, {0, 900}};
    const auto h = cross_correlate(tags, 100, 1000);
    CHECK(h.total() == 0);
    CHECK(h.n_stop == 0);
    CHECK_THROWS_AS(normalize(h), UndefinedCorrelation);
    const auto none = cross_correlate(std::vector<TimeTagRecord>{}, 100, 1000);
    CHECK(none.span == 0);
    CHECK_THROWS_AS(normalize(none), UndefinedCorrelation);
}

TEST_CASE("histogram: window edges, -window included and +window excluded") {
    const std::vector<TimeTagRecord> tags{{1, 0}, {0, 1000}, {1, 2000}};
    const auto h = cross_correlate(tags, 100, 1000, 3000);
    CHECK(h.counts.front() == 1);  // delay -1000
    CHECK(h.total() == 1);          // delay +1000 dropped
}

TEST_CASE("histogram: matches the brute-force count on random tags") {
    Rng rng(77);
    for (int rep = 0; rep < 5; ++rep) {
        const auto tags = random_tags(10000, 50'000'000, rng);
        const auto fast = cross_correlate(tags, 250, 25000, 50'000'000);
        CHECK(fast.counts == oracle::brute_histogram(tags, 250, 25000));
        CHECK(fast.counts == cross_correlate_brute_force(tags, 250, 25000, 50'000'000).counts);
    }
}

TEST_CASE("histogram: equal timestamps on both channels count as zero delay") {
    const std::vector<TimeTagRecord> tags{{0, 500}, {1, 500}, {1, 500}};
    const auto h = cross_correlate(tags, 100, 1000);
    CHECK(h.counts[h.zero_bin()] == 2);
}

TEST_CASE("histogram: request validation") {
    const std::vector<TimeTagRecord> unsorted{{0, 10}, {1, 5}};
    CHECK_THROWS_AS(cross_correlate(unsorted, 1, 10), InvalidInput);
    const std::vector<TimeTagRecord> ok{{0, 1}, {1, 5}};
    CHECK_THROWS_AS(cross_correlate(ok, 0, 10), InvalidInput);
    CHECK_THROWS_AS(cross_correlate(ok, -5, 10), InvalidInput);
    CHECK_THROWS_AS(cross_correlate(ok, 3, 10), InvalidInput);
    CHECK_THROWS_AS(cross_correlate(ok, 20, 10), InvalidInput);
}

TEST_CASE("histogram: invariant under a common time shift") {
    Rng rng(78);
    auto tags = random_tags(5000, 10'000'000, rng);
    const auto a = cross_correlate(tags, 500, 20000, 10'000'000);
    for (auto& t : tags) t.time += 123'456'789;
    const auto b = cross_correlate(tags, 500, 20000, 10'000'000);
    CHECK(a.counts == b.counts);
}

TEST_CASE("histogram: swapping channels mirrors the delay axis") {
    // Channel 0 on multiples of 4 ps, channel 1 one past, so no delay sits on a
    // bin edge in either orientation.
    Rng rng(79);
    std::uniform_int_distribution<Picoseconds> slot(0, 2'000'000);
    std::vector<TimeTagRecord> tags;
    for (int k = 0; k < 4000; ++k) {
        const std::uint8_t ch = k % 2;
        tags.push_back({ch, 4 * slot(rng) + ch});
    }
    std::sort(tags.begin(), tags.end(), [](auto& a, auto& b) { return a.time < b.time; });
    auto swapped = tags;
    for (auto& t : swapped) t.channel ^= 1;
    const auto a = cross_correlate(tags, 4, 400, 8'000'004);
    const auto b = cross_correlate(swapped, 4, 400, 8'000'004);
    REQUIRE(a.total() > 0);
    const std::size_t n = a.counts.size();
    for (std::size_t k = 0; k < n; ++k) CHECK(a.counts[k] == b.counts[n - 1 - k]);
}

TEST_CASE("normalize: counts times span over rates product and bin") {
    CorrelationHistogram h;
    h.bin_width = 1000;
    h.window = 2000;
    h.counts = {4, 9, 0, 16};
    h.n_start = 200;
    h.n_stop = 50;
    h.span = to_ps(1e-3);
    const auto c = normalize(h);
    const double norm = 200.0 * 50.0 * 1e-9 / 1e-3;
    REQUIRE(c.values.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(c.values[k] == doctest::Approx(h.counts[k] / norm));
        CHECK(c.stat_err[k] == doctest::Approx(std::sqrt(static_cast<double>(h.counts[k])) / norm));
    }
    CHECK(c.delays[0] == doctest::Approx(-1.5e-9));
    CHECK(c.delays[c.zero_index()] == doctest::Approx(0.5e-9));

    const auto gated = normalize(h, 0.25e-3);
    CHECK(gated.values[1] == doctest::Approx(c.values[1] / 4));
    CHECK_THROWS_AS(normalize(h, 0.0), UndefinedCorrelation);
}

TEST_CASE("normalize: uncorrelated clicks sit at one") {
    Rng rng(80);
    const auto tags = poisson_tags(2e5, 1.0, rng);
    const auto c = normalize(cross_correlate(tags, 5000, 100000, to_ps(1.0)));
    double chi2 = 0;
    for (std::size_t k = 0; k < c.values.size(); ++k) chi2 += std::pow((c.values[k] - 1.0) / c.stat_err[k], 2);
    const double dof = static_cast<double>(c.values.size());
    CHECK(chi2 < dof + 4 * std::sqrt(2 * dof));
}

TEST_CASE("normalize: relative error falls as one over root span") {
    Rng rng(81);
    std::vector<double> spans{0.1, 1.0, 10.0}, rel;
    for (double span : spans) {
        const auto tags = poisson_tags(2e5, span, rng);
        const auto c = normalize(cross_correlate(tags, 10000, 100000, to_ps(span)));
        double mean = 0;
        for (std::size_t k = 0; k < c.values.size(); ++k) mean += c.stat_err[k] / c.values[k];
        rel.push_back(mean / static_cast<double>(c.values.size()));
    }
    CHECK(rel[0] / rel[1] == doctest::Approx(std::sqrt(10.0)).epsilon(0.05));
    CHECK(rel[1] / rel[2] == doctest::Approx(std::sqrt(10.0)).epsilon(0.05));
}

TEST_CASE("decompose: joint detection from the two-ion and one-ion curves") {
    const auto g2 = grid_curve({0.18, 0.18, 1.0, 1.0});
    const auto none = decompose_p2(grid_curve({0.59, 0.59, 1.0, 1.0}), g2);
    CHECK(none.values[0] == doctest::Approx(1.00));
    CHECK(none.values[2] == doctest::Approx(1.00));
    const auto with = decompose_p2(grid_curve({0.31, 0.31, 1.0, 1.0}), g2);
    CHECK(with.values[0] == doctest::Approx(0.44));
    CHECK(with.stat_err[0] == doctest::Approx(std::hypot(0.02, 0.01)));
    const auto same = decompose_p2(g2, g2);
    CHECK(same.values == g2.values);
}

TEST_CASE("decompose: compose undoes decompose") {
    Rng rng(82);
    std::uniform_real_distribution<double> u(0, 2);
    std::vector<double> a(40), b(40);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    const auto g2 = grid_curve(a), p2 = grid_curve(b);
    const auto back = compose_p2(g2, decompose_p2(p2, g2));
    for (std::size_t k = 0; k < b.size(); ++k) CHECK(back.values[k] == doctest::Approx(b[k]).epsilon(1e-14));
}

TEST_CASE("decompose: curves on different grids are rejected") {
    auto g2 = grid_curve({1, 1, 1, 1});
    const auto shorter = grid_curve({1, 1, 1});
    CHECK_THROWS_AS(decompose_p2(g2, shorter), InvalidInput);
    auto shifted = g2;
    shifted.delays[0] += 1e-12;
    CHECK_THROWS_AS(decompose_p2(shifted, g2), InvalidInput);
    CHECK_THROWS_AS(compose_p2(g2, shifted), InvalidInput);
}

TEST_CASE("peaks: an ideal single-photon comb has an empty zero-delay peak") {
    // One click per pulse on alternate channels, 37.5 ns apart.
    std::vector<TimeTagRecord> tags;
    for (int k = 0; k < 2000; ++k) tags.push_back({static_cast<std::uint8_t>(k % 2), k * 37500LL + 2000});
    const auto h = cross_correlate(tags, 250, 150000);
    const auto peaks = peak_metrics(h, 37.5e-9);
    REQUIRE(peaks.size() == 7);  // -3 ... 3
    for (const auto& p : peaks) {
        if (p.index == 0) {
            CHECK(p.area == 0);
        } else if (std::abs(p.index) % 2 == 1) {
            CHECK(p.area > 0);
        }
    }
    CHECK(zero_peak_ratio(peaks) == 0.0);
    CHECK_THROWS_AS(peak_metrics(cross_correlate(tags, 250, 50000), 37.5e-9), InvalidInput);
}

TEST_CASE("peaks: ratio of zero-delay to mean side peak area") {
    const std::vector<PeakMetric> peaks{{-1, 100, 10}, {0, 3, 1}, {1, 50, 5}};
    CHECK(zero_peak_ratio(peaks) == doctest::Approx(3.0 / 75.0));
    const std::vector<PeakMetric> empty_sides{{-1, 0, 0}, {0, 3, 1}, {1, 0, 0}};
    CHECK_THROWS_AS(zero_peak_ratio(empty_sides), InvalidInput);
}

TEST_CASE("rebin: sums neighbours and keeps totals") {
    Rng rng(83);
    const auto tags = random_tags(3000, 1'000'000, rng);
    const auto h = cross_correlate(tags, 100, 10000);
    const auto r = rebin(h, 10);
    CHECK(r.bin_width == 1000);
    CHECK(r.counts.size() == 20);
    CHECK(r.total() == h.total());
    CHECK(r.counts[3] == std::accumulate(h.counts.begin() + 30, h.counts.begin() + 40, std::int64_t{0}));
    CHECK_THROWS_AS(rebin(h, 3), InvalidInput);
    CHECK_THROWS_AS(rebin(h, 0), InvalidInput);
}
