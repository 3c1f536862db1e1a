// Headline acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any fails. Optional argument: directory for the full report.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "ionhom/pipeline.hpp"
#include "oracles.hpp"

using namespace ionhom;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Criterion {
    int id;
    std::string title;
    bool pass;
    std::vector<std::string> details;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream o;
    o.precision(digits);
    o << v;
    return o.str();
}

std::vector<TimeTagRecord> random_tags(std::size_t n, Picoseconds span, Rng& rng) {
    std::uniform_int_distribution<Picoseconds> when(0, span - 1);
    std::bernoulli_distribution ch(0.5);
    std::vector<TimeTagRecord> tags(n);
    for (auto& t : tags) t = {static_cast<std::uint8_t>(ch(rng)), when(rng)};
    std::sort(tags.begin(), tags.end(), [](auto& a, auto& b) { return a.time < b.time; });
    return tags;
}

Criterion oracle_equivalence() {
    Criterion c{6, "fast correlator equals brute force on 100 x 1e4 random tags", true, {}};
    Rng rng(606);
    const auto t0 = Clock::now();
    int mismatches = 0;
    double fast_sec = 0;
    for (int rep = 0; rep < 100; ++rep) {
        // Vary density so some instances have many pairs per window.
        const Picoseconds span = rep % 2 ? 10'000'000 : 1'000'000'000;
        const auto tags = random_tags(10000, span, rng);
        const auto tf = Clock::now();
        const auto fast = cross_correlate(tags, 500, 50000, span);
        fast_sec += seconds_since(tf);
        if (fast.counts != oracle::brute_histogram(tags, 500, 50000)) ++mismatches;
    }
    const double sec = seconds_since(t0);
    c.pass = mismatches == 0 && sec < 60;
    c.details.push_back("mismatching instances: " + std::to_string(mismatches));
    c.details.push_back("runtime " + fmt(sec, 3) + " s including brute force (limit 60 s); fast correlator " +
                        fmt(fast_sec, 3) + " s");
    return c;
}

Criterion bloch_oracle() {
    Criterion c{7, "g2_cw at zero detuning matches analytic resonance fluorescence", true, {}};
    AtomParams a;
    a.detuning = 0;
    std::vector<double> delays;
    for (int k = 0; k <= 4000; ++k) delays.push_back(k * 20.0 / a.gamma / 4000);
    const auto g2 = g2_cw(a, delays);
    double worst = 0;
    for (std::size_t k = 0; k < delays.size(); ++k)
        worst = std::max(worst, std::abs(g2.values[k] - oracle::g2_resonant(a.gamma, a.rabi, delays[k])));
    c.pass = worst < 1e-6;
    c.details.push_back("max |error| = " + fmt(worst, 3) + " over [0, 20/gamma] (limit 1e-6)");
    return c;
}

Criterion property_suite() {
    Criterion c{8, "property suite", true, {}};
    auto note = [&](const std::string& name, bool ok, const std::string& info = {}) {
        c.pass = c.pass && ok;
        c.details.push_back(std::string(ok ? "holds:  " : "broken: ") + name + (info.empty() ? "" : ": " + info));
    };

    {
        const AtomParams a;
        BlochState s = BlochState::ground();
        double worst = 0;
        for (int k = 0; k < 1000; ++k) {
            s = evolve(a, s, 0.05 / a.gamma);
            worst = std::max(worst, std::abs(s.trace() - 1));
        }
        note("trace preservation", worst < 1e-12, "max |tr - 1| = " + fmt(worst, 3));
    }

    Rng rng(808);
    const auto cw = simulate_cw_stream(AtomParams{}, 2e-3, rng, 0);
    const auto cw2 = simulate_cw_stream(AtomParams{}, 2e-3, rng, 1);
    const auto [ion, scatter] = simulate_pulsed_stream(PulseParams{}, 2e-3, rng);
    {
        bool ok = true;
        for (const auto* s : {&cw, &cw2, &ion, &scatter}) {
            try {
                s->validate();
            } catch (const InvalidInput&) {
                ok = false;
            }
        }
        note("stream monotonicity", ok);
    }

    {
        OpticsParams o;
        o.path_efficiency = 1;
        DetectorParams d;
        d.qe = 1;
        d.irf_sigma = 0;
        const std::vector<EmissionStream> ions{cw, cw2};
        const auto tags = route(ions, {}, o, d, rng);
        std::multiset<Picoseconds> in(cw.times.begin(), cw.times.end()), out;
        in.insert(cw2.times.begin(), cw2.times.end());
        for (const auto& t : tags) out.insert(t.time);
        note("photon conservation", in == out, std::to_string(in.size()) + " photons in and out");
    }

    {
        const auto s = simulate_cw_stream(AtomParams{}, 0.05, rng);
        const std::vector<EmissionStream> ions{s};
        OpticsParams o;
        o.path_efficiency = 1;
        DetectorParams full, weak;
        full.qe = 1;
        weak.qe = 0.2;
        full.irf_sigma = weak.irf_sigma = 0;
        Rng r1(1), r2(2);
        const auto c1 = normalize(cross_correlate(route(ions, {}, o, full, r1), 2000, 40000, s.span + 1));
        const auto c2 = normalize(cross_correlate(route(ions, {}, o, weak, r2), 2000, 40000, s.span + 1));
        double chi2 = 0;
        for (std::size_t k = 0; k < c1.values.size(); ++k)
            chi2 += std::pow(c1.values[k] - c2.values[k], 2) / (std::pow(c1.stat_err[k], 2) + std::pow(c2.stat_err[k], 2));
        const double dof = static_cast<double>(c1.values.size());
        note("qe-thinning invariance", chi2 < dof + 4 * std::sqrt(2 * dof),
             "chi2 " + fmt(chi2, 3) + " for " + fmt(dof, 3) + " bins");
    }

    {
        NormalizedCurve g2, p2;
        std::uniform_real_distribution<double> u(0, 2);
        for (int k = 0; k < 200; ++k) {
            g2.delays.push_back(k * 1e-9);
            g2.values.push_back(u(rng));
            g2.stat_err.push_back(0.01);
            p2.values.push_back(u(rng));
        }
        p2.delays = g2.delays;
        p2.stat_err = g2.stat_err;
        const auto back = compose_p2(g2, decompose_p2(p2, g2));
        double worst = 0;
        for (std::size_t k = 0; k < p2.values.size(); ++k) worst = std::max(worst, std::abs(back.values[k] - p2.values[k]));
        note("P2 = (g2 + P2_2)/2 round trip", worst < 1e-12, "max |error| = " + fmt(worst, 3));
    }

    {
        auto cfg = fig3_two_ion_config(0.57, 99, 0.01);
        const auto a = encode_timetags(TimeTagFile{2, 1, simulate_tags(cfg).tags});
        const auto b = encode_timetags(TimeTagFile{2, 1, simulate_tags(cfg).tags});
        note("end-to-end byte determinism", a == b, std::to_string(a.size()) + " bytes");
    }
    return c;
}

std::string describe(const Headline& h) {
    std::string s = h.name + " = " + fmt(h.value) + " +- " + fmt(h.stat_err, 2) + "  (target " + fmt(h.target) +
                    " +- " + fmt(h.tolerance, 2) + (h.pass ? ", within" : ", outside") + ")";
    if (!h.note.empty()) s += "  " + h.note;
    return s;
}

void print(std::ostream& out, const Criterion& c) {
    out << (c.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.title << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    const std::filesystem::path out_dir = argc > 1 ? argv[1] : "acceptance_out";
    std::filesystem::create_directories(out_dir);
    const std::uint64_t seed = 7;
    std::vector<Criterion> all;

    try {
        const auto cw = run_cw_figure_data(seed);
        const auto f3 = fig3_headlines(cw);
        const auto f4 = analyze_fig4(cw);

        Criterion c1{1, "one-ion g2(0) = 0.18 +- 0.05", f3[0].pass, {describe(f3[0])}};
        c1.details.push_back(std::to_string(cw.one_ion_tags) + " detected tags (need >= 500000)");
        c1.details.push_back("simulate + correlate " + fmt(cw.one_ion_seconds, 3) + " s (limit 120 s)");
        c1.pass = c1.pass && cw.one_ion_tags >= 500000 && cw.one_ion_seconds < 120;
        all.push_back(c1);

        all.push_back({2, "two ions, no overlap: P2(0) = 0.59 +- 0.05 and equals (g2(0)+1)/2", f3[1].pass && f3[2].pass,
                       {describe(f3[1]), describe(f3[2])}});
        all.push_back({3, "two ions, overlap 0.57: P2(0) = 0.31 +- 0.05", f3[3].pass, {describe(f3[3])}});

        Criterion c4{4, "interference dip depth 0.57 +- 0.06, half width 5.3 +- 1.0 ns, no-overlap curve flat", true, {}};
        for (const auto& h : f4.headlines) {
            c4.pass = c4.pass && h.pass;
            c4.details.push_back(describe(h));
        }
        all.push_back(c4);
    } catch (const std::exception& e) {
        for (int id = 1; id <= 4; ++id) all.push_back({id, "cw pipeline", false, {std::string("error: ") + e.what()}});
    }

    try {
        const auto pulsed = run_pulsed_figure_data(seed);
        Criterion c5{5, "pulsed zero/side peak ratio 0.02 +- 0.01 and side-peak decay 2.6 +- 0.2 ns", true, {}};
        for (const auto& h : fig2_headlines(pulsed)) {
            c5.pass = c5.pass && h.pass;
            c5.details.push_back(describe(h));
        }
        all.push_back(c5);
    } catch (const std::exception& e) {
        all.push_back({5, "pulsed pipeline", false, {std::string("error: ") + e.what()}});
    }

    all.push_back(oracle_equivalence());
    all.push_back(bloch_oracle());
    all.push_back(property_suite());

    std::ostringstream report;
    report << "acceptance run, seed " << seed << "\n";
    for (const auto& c : all) {
        print(report, c);
        for (const auto& d : c.details) report << "      " << d << "\n";
    }
    std::ofstream(out_dir / "acceptance.txt") << report.str();

    bool ok = true;
    for (const auto& c : all) {
        print(std::cout, c);
        for (const auto& d : c.details) std::cout << "      " << d << "\n";
        ok = ok && c.pass;
    }
    std::cout << "report written to " << (out_dir / "acceptance.txt").string() << std::endl;
    return ok ? 0 : 1;
}
