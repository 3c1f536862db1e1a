#include "ionhom/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

namespace ionhom {

namespace {

constexpr Picoseconds kChunk = 10'000'000'000;  // 10 ms

// Rng stream ids below are part of the determinism contract.
constexpr std::uint64_t kEmitterStream = 1;
constexpr std::uint64_t kThinStream = 100;
constexpr std::uint64_t kScatterThinStream = 150;
constexpr std::uint64_t kRouteStream = 200;

std::string num(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw StageFailure(name, e.what(), exit_code_for(e));
    }
}

std::filesystem::path model_path_for(const std::filesystem::path& out) {
    auto p = out;
    p.replace_filename(out.stem().string() + "_model.csv");
    return p;
}

Headline make_headline(std::string name, double value, double err, double target, double tol, std::string note = {}) {
    Headline h{std::move(name), value, err, target, tol, false, std::move(note)};
    h.pass = std::isfinite(value) && std::abs(value - target) <= tol;
    return h;
}

std::string summary_text(const std::string& figure, std::uint64_t seed, double scale,
                         const std::vector<Headline>& heads) {
    std::ostringstream o;
    o << "figure " << figure << "  seed " << seed << "  scale " << num(scale) << "\n";
    for (const auto& h : heads) o << format_headline(h) << "\n";
    const bool ok = std::all_of(heads.begin(), heads.end(), [](const Headline& h) { return h.pass; });
    o << (ok ? "ALL PASS" : "SOME FAILED") << "\n";
    return o.str();
}

ExperimentConfig cw_base(std::uint64_t seed, double scale) {
    require(std::isfinite(scale) && scale > 0, "scale must be > 0");
    ExperimentConfig c;
    c.mode = ExcitationMode::Cw;
    c.seed = seed;
    c.detector.irf_sigma = 1e-9;
    return c;
}

void add_background(ExperimentConfig& c, double fraction) {
    c.detector.dark_rate = 0;
    c.detector.dark_rate = fraction * c.expected_signal_rate_per_channel();
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (const auto* s = dynamic_cast<const StageFailure*>(&e)) return s->exit_code();
    if (dynamic_cast<const CheckFailed*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e)) return 2;
    return 1;
}

double live_time(Picoseconds span, const DutyCycle& duty) {
    duty.validate();
    const Picoseconds measure = to_ps(duty.measure);
    const Picoseconds period = measure + to_ps(duty.cool);
    const Picoseconds full = span / period;
    return to_seconds(full * measure + std::min(span - full * period, measure));
}

SimulatedRun simulate_tags(const ExperimentConfig& cfg) {
    cfg.validate(true);
    const std::uint64_t seed = *cfg.seed;
    const Picoseconds span = to_ps(cfg.span);
    const auto n = static_cast<std::size_t>(cfg.n_ions);
    const bool pulsed = cfg.mode == ExcitationMode::Pulsed;

    std::vector<CwEmitter> cw;
    std::vector<PulsedEmitter> pulses;
    if (pulsed) {
        for (std::size_t k = 0; k < n; ++k) pulses.emplace_back(cfg.pulse, make_rng(seed, kEmitterStream + k));
    } else if (cfg.atom.rabi != 0) {
        const auto sampler = std::make_shared<const WaitingTimeSampler>(cfg.atom);
        for (std::size_t k = 0; k < n; ++k) cw.emplace_back(sampler, make_rng(seed, kEmitterStream + k));
    }
    std::vector<Rng> thin_rng, scatter_rng;
    for (std::size_t k = 0; k < n; ++k) {
        thin_rng.push_back(make_rng(seed, kThinStream + k));
        scatter_rng.push_back(make_rng(seed, kScatterThinStream + k));
    }
    Rng route_rng = make_rng(seed, kRouteStream);

    // Loss before the splitter is applied here per chunk; route sees lossless optics.
    OpticsParams optics = cfg.optics;
    optics.path_efficiency = 1.0;
    DetectorParams det = cfg.detector;
    det.dead_time = 0;

    SimulatedRun run;
    run.span = span;
    if (cfg.duty) run.live_time = live_time(span, *cfg.duty);

    auto gate = [&](std::vector<Picoseconds>& times) {
        if (cfg.duty) std::erase_if(times, [&](Picoseconds t) { return !in_measurement_window(t, *cfg.duty); });
    };

    // Thinned arrivals wait here until a cut that no candidate pair straddles.
    std::vector<std::vector<Picoseconds>> pending_ion(n), pending_scatter(n);
    const Picoseconds pair_window = cfg.optics.match_window();
    Picoseconds routed = 0;

    auto take_before = [](std::vector<Picoseconds>& v, Picoseconds cut) {
        const auto at = std::lower_bound(v.begin(), v.end(), cut);
        std::vector<Picoseconds> out(v.begin(), at);
        v.erase(v.begin(), at);
        return out;
    };

    for (Picoseconds begin = 0; begin <= span;) {
        const Picoseconds end = std::min(begin + kChunk, span + 1);
        for (std::size_t k = 0; k < n; ++k) {
            EmissionStream ion{static_cast<int>(k), SourceKind::Ion, {}, end};
            EmissionStream sc{static_cast<int>(k), SourceKind::Scatter, {}, end};
            if (pulsed) {
                auto chunk = pulses[k].emit_until(end);
                ion.times = std::move(chunk.ion);
                sc.times = std::move(chunk.scatter);
            } else if (!cw.empty()) {
                ion.times = cw[k].emit_until(end);
            }
            run.emitted += ion.times.size();
            gate(ion.times);
            gate(sc.times);
            const auto kept = thin(ion, cfg.optics.path_efficiency, thin_rng[k]);
            pending_ion[k].insert(pending_ion[k].end(), kept.times.begin(), kept.times.end());
            if (pulsed) {
                const auto kept_sc = thin(sc, cfg.optics.path_efficiency, scatter_rng[k]);
                pending_scatter[k].insert(pending_scatter[k].end(), kept_sc.times.begin(), kept_sc.times.end());
            }
        }

        Picoseconds cut = end;
        if (n == 2 && end <= span) cut = pairing_safe_cut(pending_ion[0], pending_ion[1], pair_window, end);
        if (cut > routed) {
            std::vector<EmissionStream> ions, scatter;
            for (std::size_t k = 0; k < n; ++k) {
                ions.push_back({static_cast<int>(k), SourceKind::Ion, take_before(pending_ion[k], cut), cut});
                if (pulsed)
                    scatter.push_back(
                        {static_cast<int>(k), SourceKind::Scatter, take_before(pending_scatter[k], cut), cut});
            }
            auto tags = route(ions, scatter, optics, det, route_rng, routed);
            run.tags.insert(run.tags.end(), tags.begin(), tags.end());
            routed = cut;
        }
        begin = end;
    }

    // Jitter can carry a click across a chunk boundary.
    std::sort(run.tags.begin(), run.tags.end(), [](const TimeTagRecord& a, const TimeTagRecord& b) {
        return a.time != b.time ? a.time < b.time : a.channel < b.channel;
    });
    if (cfg.duty)
        std::erase_if(run.tags, [&](const TimeTagRecord& r) { return !in_measurement_window(r.time, *cfg.duty); });
    apply_dead_time(run.tags, cfg.detector.dead_time, 2);
    return run;
}

std::uint64_t run_simulate(const ExperimentConfig& config, const std::filesystem::path& out) {
    config.validate(true);
    auto run = simulate_tags(config);
    TimeTagFile file;
    file.channel_count = 2;
    file.records = std::move(run.tags);
    write_timetag_file(out, file);
    return file.records.size();
}

CorrelationHistogram run_correlate(const std::filesystem::path& in, const std::filesystem::path& out,
                                   const CorrelateOptions& o) {
    require(o.bin > 0, "--bin must be > 0");
    require(o.window > 0 && o.window % o.bin == 0, "--window must be a positive multiple of --bin");
    const auto file = read_timetag_file(in);
    const auto& tags = file.records;
    const Picoseconds span = o.span.value_or(tags.empty() ? 0 : tags.back().time + 1);
    auto hist = cross_correlate(tags, o.bin, o.window, span);
    if (o.oracle) {
        const auto ref = cross_correlate_brute_force(tags, o.bin, o.window, span);
        if (ref.counts != hist.counts || ref.n_start != hist.n_start || ref.n_stop != hist.n_stop) {
            std::size_t k = 0;
            while (k < hist.counts.size() && hist.counts[k] == ref.counts[k]) ++k;
            throw CheckFailed("oracle mismatch: fast correlator differs from brute force at bin " + std::to_string(k));
        }
    }
    write_text_atomic(out, histogram_csv(hist, o.live_time));
    return hist;
}

FitModel parse_fit_model(const std::string& name) {
    if (name == "dip") return FitModel::Dip;
    if (name == "peak") return FitModel::Peak;
    if (name == "rabi") return FitModel::Rabi;
    throw InvalidInput("--model must be dip, peak or rabi, got '" + name + "'");
}

std::string format_fit_report(const FitResult& fit, const std::string& model, const std::vector<std::string>& notes) {
    std::ostringstream o;
    o << "model: " << model << "\n";
    o << "converged: " << (fit.converged ? "yes" : "no") << " after " << fit.iterations << " iterations";
    if (!fit.message.empty()) o << " (" << fit.message << ")";
    o << "\n";
    o << "residual_norm: " << num(fit.residual_norm, 8) << "\n";
    o << "parameters:\n";
    for (const auto& p : fit.params)
        o << "  " << p.name << " = " << num(p.value, 8) << " +- " << num(p.std_err, 3) << "\n";
    if (!notes.empty()) {
        o << "defaults and units:\n";
        for (const auto& n : notes) o << "  " << n << "\n";
    }
    return o.str();
}

FitResult run_fit(const std::filesystem::path& in, FitModel model, const std::filesystem::path& out,
                  const FitRunOptions& options) {
    const auto bytes = read_file_bytes(in);
    const auto data = parse_histogram_csv(std::string(bytes.begin(), bytes.end()));

    FitResult fit;
    std::string name;
    std::vector<std::string> notes;
    NormalizedCurve model_curve;

    switch (model) {
        case FitModel::Dip: {
            name = "dip";
            fit = fit_gaussian_dip(data.curve);
            notes = {"fitted column: normalized",
                     "initial center: minimum bin; initial baseline: mean of the outer fifth on each side",
                     "initial half width: half-depth crossing of the data",
                     "center, sigma, half_width in seconds; half_width = sigma * sqrt(2 ln 2)"};
            const double a = fit.value("baseline"), v = fit.value("depth"), t0 = fit.value("center"),
                         s = fit.value("sigma");
            model_curve.delays = data.curve.delays;
            for (double t : data.curve.delays) model_curve.values.push_back(a * (1 - v * std::exp(-0.5 * std::pow((t - t0) / s, 2))));
            break;
        }
        case FitModel::Peak: {
            name = "peak";
            const PulseParams pulse{};
            const DetectorParams det{};
            const double center = options.center.value_or(pulse.rep_period);
            const double irf = options.irf_sigma.value_or(std::sqrt(2.0) * det.irf_sigma);
            PeakFitOptions po;
            po.half_range = 0.5 * pulse.rep_period;
            po.irf_sigma = irf;
            fit = fit_exponential_peak(data.hist, center, po);
            notes = {"fitted column: counts",
                     std::string("peak center: ") + num(center * 1e9) + " ns" +
                         (options.center ? " (given)" : " (default: one repetition period, 37.5 ns)"),
                     std::string("fit range: +- ") + num(po.half_range * 1e9) + " ns around the center",
                     std::string("known IRF sigma: ") + num(irf * 1e9) + " ns" +
                         (options.irf_sigma ? " (given)" : " (default: sqrt(2) x 1 ns detector jitter)"),
                     "center, lifetime in seconds"};
            const double amp = fit.value("amplitude"), t0 = fit.value("center"), tau = fit.value("lifetime");
            for (std::size_t k = 0; k < data.hist.counts.size(); ++k) {
                const double t = data.hist.bin_center(k) / kPsPerSecond;
                if (std::abs(t - center) > po.half_range) continue;
                model_curve.delays.push_back(t);
                model_curve.values.push_back(blurred_two_sided_exponential(t - t0, amp, tau, irf));
            }
            break;
        }
        case FitModel::Rabi: {
            name = "rabi";
            const AtomParams guess{};
            RabiFitOptions ro;
            if (options.irf_sigma) ro.irf_sigma_guess = *options.irf_sigma;
            fit = fit_damped_rabi(data.curve, guess, ro);
            notes = {"fitted column: normalized",
                     "gamma and detuning held at defaults: 1/2.6 ns and -gamma/2",
                     "initial rabi: default drive; initial irf_sigma: " + num(ro.irf_sigma_guess * 1e9) + " ns",
                     "rabi in rad/s, irf_sigma in seconds"};
            AtomParams fitted = guess;
            fitted.rabi = fit.value("rabi");
            model_curve.delays = data.curve.delays;
            model_curve.values =
                blurred_g2_model(fitted, fit.value("irf_sigma"), fit.value("amplitude"), data.curve.delays);
            break;
        }
    }

    write_text_atomic(out, format_fit_report(fit, name, notes));
    write_text_atomic(model_path_for(out), curve_csv(model_curve, {"model=" + name}));
    if (!fit.converged) throw CheckFailed("fit did not converge: " + fit.message);
    return fit;
}

ExperimentConfig fig3_one_ion_config(std::uint64_t seed, double scale) {
    auto c = cw_base(seed, scale);
    c.n_ions = 1;
    c.optics.path_efficiency = 1.0;
    c.span = 0.25 * scale;
    add_background(c, 0.01);
    return c;
}

ExperimentConfig fig3_two_ion_config(double overlap, std::uint64_t seed, double scale) {
    auto c = cw_base(seed, scale);
    c.n_ions = 2;
    c.optics.overlap = overlap;
    c.optics.path_efficiency = 0.1;
    c.span = 4.0 * scale;
    add_background(c, 0.01);
    return c;
}

ExperimentConfig fig2_config(std::uint64_t seed, double scale) {
    require(std::isfinite(scale) && scale > 0, "scale must be > 0");
    ExperimentConfig c;
    c.mode = ExcitationMode::Pulsed;
    c.n_ions = 1;
    c.seed = seed;
    c.duty = DutyCycle{};
    c.optics.path_efficiency = 1.0;
    c.detector.irf_sigma = 1e-9;
    c.span = 4.0 * scale;
    return c;
}

std::string format_headline(const Headline& h) {
    std::ostringstream o;
    o << (h.pass ? "PASS  " : "FAIL  ") << h.name << " = " << num(h.value, 4) << " +- " << num(h.stat_err, 2)
      << "  (target " << num(h.target, 4) << " +- " << num(h.tolerance, 3) << ")";
    if (!h.note.empty()) o << "  " << h.note;
    return o.str();
}

CwFigureData run_cw_figure_data(std::uint64_t seed, double scale) {
    CwFigureData d;
    const auto t0 = std::chrono::steady_clock::now();
    {
        const auto run = stage("simulate one ion", [&] { return simulate_tags(fig3_one_ion_config(seed, scale)); });
        d.one_ion = stage("correlate one ion", [&] { return cross_correlate(run.tags, kCwBin, kCwWindow, run.span); });
        d.one_ion_tags = run.tags.size();
    }
    d.g2 = stage("normalize one ion", [&] { return normalize(d.one_ion); });
    d.one_ion_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto two = [&](double overlap, std::uint64_t s, const char* what) {
        const auto run = stage(what, [&] { return simulate_tags(fig3_two_ion_config(overlap, s, scale)); });
        return stage("correlate two ions", [&] { return cross_correlate(run.tags, kCwBin, kCwWindow, run.span); });
    };
    d.two_ion_no_overlap = two(0.0, seed + 1, "simulate two ions, no overlap");
    d.two_ion_overlap = two(0.57, seed + 2, "simulate two ions, overlap");
    d.p2_no_overlap = stage("normalize two ions", [&] { return normalize(d.two_ion_no_overlap); });
    d.p2_overlap = stage("normalize two ions", [&] { return normalize(d.two_ion_overlap); });
    return d;
}

std::vector<Headline> fig3_headlines(const CwFigureData& d) {
    const auto z = d.g2.zero_index();
    const double g = d.g2.values[z], ge = d.g2.stat_err[z];
    const double p0 = d.p2_no_overlap.values[z], p0e = d.p2_no_overlap.stat_err[z];
    const double p1 = d.p2_overlap.values[z], p1e = d.p2_overlap.stat_err[z];
    const double combined = std::hypot(p0e, 0.5 * ge);
    return {
        make_headline("one ion g2(0)", g, ge, 0.18, 0.05, std::to_string(d.one_ion_tags) + " tags"),
        make_headline("two ions no overlap P2(0)", p0, p0e, 0.59, 0.05),
        make_headline("P2(0) - (g2(0)+1)/2, no overlap", p0 - 0.5 * (g + 1), combined, 0.0, 3 * combined,
                      "tolerance 3 combined sigma"),
        make_headline("two ions overlap 0.57 P2(0)", p1, p1e, 0.31, 0.05),
    };
}

Fig4Analysis analyze_fig4(const CwFigureData& d) {
    Fig4Analysis a;
    a.cross_no_overlap = decompose_p2(d.p2_no_overlap, d.g2);
    a.cross_overlap = decompose_p2(d.p2_overlap, d.g2);
    a.flat_no_overlap = decompose_p2(normalize(rebin(d.two_ion_no_overlap, kFlatnessRebin)),
                                     normalize(rebin(d.one_ion, kFlatnessRebin)));
    a.dip = stage("fit dip", [&] { return fit_gaussian_dip(a.cross_overlap); });

    double worst = 0, worst_err = 0;
    for (std::size_t k = 0; k < a.flat_no_overlap.values.size(); ++k) {
        const double dev = std::abs(a.flat_no_overlap.values[k] - 1.0);
        if (dev >= worst) {
            worst = dev;
            worst_err = a.flat_no_overlap.stat_err[k];
        }
    }
    const std::string conv = a.dip.converged ? "" : "fit not converged";
    auto depth = make_headline("dip depth", a.dip.value("depth"), a.dip.error("depth"), 0.57, 0.06, conv);
    auto width = make_headline("dip half width [ns]", a.dip.value("half_width") * 1e9, a.dip.error("half_width") * 1e9,
                               5.3, 1.0, conv);
    depth.pass = depth.pass && a.dip.converged;
    width.pass = width.pass && a.dip.converged;
    a.headlines = {depth, width,
                   make_headline("no overlap max |P2_2 - 1| (10 ns bins)", worst, worst_err, 0.0, 0.05)};
    return a;
}

PulsedFigureData run_pulsed_figure_data(std::uint64_t seed, double scale) {
    PulsedFigureData d;
    const auto cfg = fig2_config(seed, scale);
    d.rep_period = cfg.pulse.rep_period;
    d.irf_sigma = std::sqrt(2.0) * cfg.detector.irf_sigma;
    const auto run = stage("simulate pulsed", [&] { return simulate_tags(cfg); });
    d.hist = stage("correlate pulsed", [&] { return cross_correlate(run.tags, kPulsedBin, kPulsedWindow, run.span); });
    d.curve = stage("normalize pulsed", [&] { return normalize(d.hist, run.live_time); });
    d.peaks = stage("peak areas", [&] { return peak_metrics(d.hist, d.rep_period); });
    d.ratio = zero_peak_ratio(d.peaks);

    double zero = 0, side = 0;
    int n_side = 0;
    for (const auto& p : d.peaks) {
        if (p.index == 0) {
            zero = static_cast<double>(p.area);
        } else {
            side += static_cast<double>(p.area);
            ++n_side;
        }
    }
    d.ratio_err = zero > 0 && side > 0 ? d.ratio * std::sqrt(1.0 / zero + 1.0 / side) : 0.0;

    PeakFitOptions po;
    po.half_range = 0.5 * d.rep_period;
    po.irf_sigma = d.irf_sigma;
    d.side_peak = stage("fit side peak", [&] { return fit_exponential_peak(d.hist, d.rep_period, po); });
    return d;
}

std::vector<Headline> fig2_headlines(const PulsedFigureData& d) {
    auto life = make_headline("side peak lifetime [ns]", d.side_peak.value("lifetime") * 1e9,
                              d.side_peak.error("lifetime") * 1e9, 2.6, 0.2,
                              d.side_peak.converged ? "" : "fit not converged");
    life.pass = life.pass && d.side_peak.converged;
    return {make_headline("zero/side peak area ratio", d.ratio, d.ratio_err, 0.02, 0.01), life};
}

std::vector<Headline> run_figure(const std::string& name, std::uint64_t seed, const std::filesystem::path& out_dir,
                                 double scale, std::ostream* log) {
    require(name == "fig2" || name == "fig3" || name == "fig4", "figure must be fig2, fig3 or fig4, got '" + name + "'");
    require(std::isfinite(scale) && scale > 0, "--scale must be > 0");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    auto say = [&](const std::string& s) {
        if (log) *log << s << std::endl;
    };

    std::vector<Headline> heads;
    if (name == "fig2") {
        say("fig2: pulsed run");
        const auto d = run_pulsed_figure_data(seed, scale);
        const auto cfg = fig2_config(seed, scale);
        write_text_atomic(out_dir / "comb.csv", histogram_csv(d.hist, live_time(to_ps(cfg.span), *cfg.duty)));
        std::ostringstream peaks;
        peaks << "index,area,height\n";
        for (const auto& p : d.peaks) peaks << p.index << "," << p.area << "," << p.height << "\n";
        write_text_atomic(out_dir / "peaks.csv", peaks.str());
        write_text_atomic(out_dir / "peak_fit.txt",
                          format_fit_report(d.side_peak, "peak",
                                            {"peak center: one repetition period",
                                             "known IRF sigma: " + num(d.irf_sigma * 1e9) + " ns"}));
        heads = fig2_headlines(d);
    } else {
        say(name + ": cw runs (one ion, two ions without and with overlap)");
        const auto d = run_cw_figure_data(seed, scale);
        if (name == "fig3") {
            write_text_atomic(out_dir / "g2_one_ion.csv", histogram_csv(d.one_ion));
            write_text_atomic(out_dir / "p2_no_overlap.csv", histogram_csv(d.two_ion_no_overlap));
            write_text_atomic(out_dir / "p2_overlap.csv", histogram_csv(d.two_ion_overlap));
            heads = fig3_headlines(d);
        } else {
            const auto a = analyze_fig4(d);
            write_text_atomic(out_dir / "p2cross_no_overlap.csv", curve_csv(a.cross_no_overlap, {"P2_2, overlap 0"}));
            write_text_atomic(out_dir / "p2cross_overlap.csv", curve_csv(a.cross_overlap, {"P2_2, overlap 0.57"}));
            write_text_atomic(out_dir / "p2cross_no_overlap_10ns.csv",
                              curve_csv(a.flat_no_overlap, {"P2_2, overlap 0, 10 ns bins"}));
            write_text_atomic(out_dir / "dip_fit.txt", format_fit_report(a.dip, "dip", {"fitted: P2_2, overlap 0.57"}));
            heads = a.headlines;
        }
    }
    const auto text = summary_text(name, seed, scale, heads);
    write_text_atomic(out_dir / "summary.txt", text);
    say(text);
    return heads;
}

}  // namespace ionhom
