#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ionhom/pipeline.hpp"

namespace py = pybind11;
using namespace ionhom;

namespace {

template <class T>
py::array_t<T> to_array(const std::vector<T>& v) {
    py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return {a.data(), a.data() + a.size()};
}

std::vector<TimeTagRecord> to_tags(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& channels,
                                   const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& times) {
    require(channels.size() == times.size(), "channels and times differ in length");
    std::vector<TimeTagRecord> tags(static_cast<std::size_t>(times.size()));
    for (std::size_t k = 0; k < tags.size(); ++k) tags[k] = {channels.data()[k], times.data()[k]};
    return tags;
}

py::tuple tags_to_arrays(const std::vector<TimeTagRecord>& tags) {
    py::array_t<std::uint8_t> ch(static_cast<py::ssize_t>(tags.size()));
    py::array_t<std::int64_t> t(static_cast<py::ssize_t>(tags.size()));
    for (std::size_t k = 0; k < tags.size(); ++k) {
        ch.mutable_data()[k] = tags[k].channel;
        t.mutable_data()[k] = tags[k].time;
    }
    return py::make_tuple(ch, t);
}

NormalizedCurve make_curve(const py::array_t<double, py::array::c_style | py::array::forcecast>& delays,
                           const py::array_t<double, py::array::c_style | py::array::forcecast>& values,
                           const py::array_t<double, py::array::c_style | py::array::forcecast>& stat_err) {
    NormalizedCurve c{to_vector(delays), to_vector(values), to_vector(stat_err)};
    require(c.delays.size() == c.values.size() && c.values.size() == c.stat_err.size(),
            "delays, values and stat_err differ in length");
    return c;
}

}  // namespace

PYBIND11_MODULE(_ionhom, m) {
    m.doc() = "Trapped-ion photon correlation simulator and analysis";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<UndefinedCorrelation>(m, "UndefinedCorrelation", base.ptr());
    py::register_exception<NoEmission>(m, "NoEmission", base.ptr());
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<CheckFailed>(m, "CheckFailed", base.ptr());
    py::register_exception<StageFailure>(m, "StageFailure", base.ptr());

    py::class_<AtomParams>(m, "AtomParams")
        .def(py::init<>())
        .def(py::init([](double gamma, double rabi, double detuning) { return AtomParams{gamma, rabi, detuning}; }),
             py::arg("gamma"), py::arg("rabi"), py::arg("detuning"))
        .def_readwrite("gamma", &AtomParams::gamma)
        .def_readwrite("rabi", &AtomParams::rabi)
        .def_readwrite("detuning", &AtomParams::detuning)
        .def("validate", &AtomParams::validate)
        .def("__repr__", [](const AtomParams& a) {
            return "AtomParams(gamma=" + std::to_string(a.gamma) + ", rabi=" + std::to_string(a.rabi) +
                   ", detuning=" + std::to_string(a.detuning) + ")";
        });

    m.def("default_rabi", &default_rabi);
    m.def("rabi_for_emission_rate", &rabi_for_emission_rate, py::arg("gamma"), py::arg("detuning"), py::arg("rate"));
    m.def(
        "steady_state",
        [](const AtomParams& a) {
            const auto s = steady_state(a);
            return py::dict(py::arg("rho_gg") = s.rho_gg, py::arg("rho_ee") = s.rho_ee, py::arg("rho_ge") = s.rho_ge);
        },
        py::arg("atom"));
    m.def(
        "g2_cw",
        [](const AtomParams& a, const py::array_t<double, py::array::c_style | py::array::forcecast>& delays) {
            return to_array(g2_cw(a, to_vector(delays)).values);
        },
        py::arg("atom"), py::arg("delays"));
    m.def(
        "sample_waiting_times",
        [](const AtomParams& a, std::size_t n, std::uint64_t seed) {
            const WaitingTimeSampler s(a);
            Rng rng(seed);
            std::vector<double> out(n);
            for (auto& v : out) v = s.sample(rng);
            return to_array(out);
        },
        py::arg("atom"), py::arg("n"), py::arg("seed"));

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_property(
            "mode", [](const ExperimentConfig& c) { return c.mode == ExcitationMode::Cw ? "cw" : "pulsed"; },
            [](ExperimentConfig& c, const std::string& v) {
                require(v == "cw" || v == "pulsed", "mode must be cw or pulsed");
                c.mode = v == "cw" ? ExcitationMode::Cw : ExcitationMode::Pulsed;
            })
        .def_readwrite("n_ions", &ExperimentConfig::n_ions)
        .def_readwrite("span", &ExperimentConfig::span)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("atom", &ExperimentConfig::atom)
        .def("validate", &ExperimentConfig::validate, py::arg("require_seed") = true)
        .def("expected_signal_rate_per_channel", &ExperimentConfig::expected_signal_rate_per_channel)
        .def("to_text", [](const ExperimentConfig& c) { return to_config_text(c); });
    m.def("parse_config", [](const std::string& text) { return parse_config(text); }, py::arg("text"));
    m.def("load_config", &load_config, py::arg("path"));
    m.def("fig3_one_ion_config", &fig3_one_ion_config, py::arg("seed"), py::arg("scale") = 1.0);
    m.def("fig3_two_ion_config", &fig3_two_ion_config, py::arg("overlap"), py::arg("seed"), py::arg("scale") = 1.0);
    m.def("fig2_config", &fig2_config, py::arg("seed"), py::arg("scale") = 1.0);

    m.def(
        "simulate",
        [](const ExperimentConfig& c) {
            SimulatedRun run;
            {
                py::gil_scoped_release release;
                run = simulate_tags(c);
            }
            const auto arrays = tags_to_arrays(run.tags);
            return py::dict(py::arg("channels") = arrays[0], py::arg("times_ps") = arrays[1], py::arg("span_ps") = run.span,
                            py::arg("live_time") = run.live_time, py::arg("emitted") = run.emitted);
        },
        py::arg("config"), "Detected clicks as numpy arrays (channels uint8, times_ps int64).");
    m.def("run_simulate", &run_simulate, py::arg("config"), py::arg("out"));

    m.def(
        "read_timetags",
        [](const std::filesystem::path& p) { return tags_to_arrays(read_timetag_file(p).records); }, py::arg("path"));
    m.def(
        "write_timetags",
        [](const std::filesystem::path& p, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& ch,
           const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& t) {
            TimeTagFile f;
            f.records = to_tags(ch, t);
            write_timetag_file(p, f);
        },
        py::arg("path"), py::arg("channels"), py::arg("times_ps"));

    py::class_<CorrelationHistogram>(m, "CorrelationHistogram")
        .def_readonly("bin_width", &CorrelationHistogram::bin_width)
        .def_readonly("window", &CorrelationHistogram::window)
        .def_readonly("n_start", &CorrelationHistogram::n_start)
        .def_readonly("n_stop", &CorrelationHistogram::n_stop)
        .def_readonly("span", &CorrelationHistogram::span)
        .def_property_readonly("counts", [](const CorrelationHistogram& h) { return to_array(h.counts); })
        .def_property_readonly("delays", [](const CorrelationHistogram& h) {
            std::vector<double> d;
            for (std::size_t k = 0; k < h.counts.size(); ++k) d.push_back(h.bin_center(k) / kPsPerSecond);
            return to_array(d);
        })
        .def("zero_bin", &CorrelationHistogram::zero_bin)
        .def("total", &CorrelationHistogram::total);

    py::class_<NormalizedCurve>(m, "NormalizedCurve")
        .def(py::init(&make_curve), py::arg("delays"), py::arg("values"), py::arg("stat_err"))
        .def_property_readonly("delays", [](const NormalizedCurve& c) { return to_array(c.delays); })
        .def_property_readonly("values", [](const NormalizedCurve& c) { return to_array(c.values); })
        .def_property_readonly("stat_err", [](const NormalizedCurve& c) { return to_array(c.stat_err); })
        .def("zero_index", &NormalizedCurve::zero_index);

    m.def(
        "cross_correlate",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& ch,
           const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& t, Picoseconds bin,
           Picoseconds window, std::optional<Picoseconds> span) {
            const auto tags = to_tags(ch, t);
            py::gil_scoped_release release;
            return span ? cross_correlate(tags, bin, window, *span) : cross_correlate(tags, bin, window);
        },
        py::arg("channels"), py::arg("times_ps"), py::arg("bin_ps"), py::arg("window_ps"), py::arg("span_ps") = py::none());
    m.def(
        "cross_correlate_brute_force",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& ch,
           const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& t, Picoseconds bin,
           Picoseconds window, Picoseconds span) {
            const auto tags = to_tags(ch, t);
            py::gil_scoped_release release;
            return cross_correlate_brute_force(tags, bin, window, span);
        },
        py::arg("channels"), py::arg("times_ps"), py::arg("bin_ps"), py::arg("window_ps"), py::arg("span_ps"));
    m.def("normalize", &normalize, py::arg("hist"), py::arg("live_time") = py::none());
    m.def("rebin", &rebin, py::arg("hist"), py::arg("factor"));
    m.def("decompose_p2", &decompose_p2, py::arg("p2"), py::arg("g2"));
    m.def("compose_p2", &compose_p2, py::arg("g2"), py::arg("p2_cross"));
    m.def(
        "zero_peak_ratio",
        [](const CorrelationHistogram& h, double rep) { return zero_peak_ratio(peak_metrics(h, rep)); }, py::arg("hist"),
        py::arg("rep_period"));

    py::class_<FitResult>(m, "FitResult")
        .def_readonly("converged", &FitResult::converged)
        .def_readonly("iterations", &FitResult::iterations)
        .def_readonly("residual_norm", &FitResult::residual_norm)
        .def_readonly("message", &FitResult::message)
        .def_readonly("residual_history", &FitResult::residual_history)
        .def("value", &FitResult::value, py::arg("name"))
        .def("error", &FitResult::error, py::arg("name"))
        .def_property_readonly("params", [](const FitResult& f) {
            py::dict d;
            for (const auto& p : f.params) d[py::str(p.name)] = py::make_tuple(p.value, p.std_err);
            return d;
        });

    m.def(
        "fit_gaussian_dip",
        [](const NormalizedCurve& c, std::optional<double> center, std::optional<double> half_width) {
            DipGuess g;
            g.center = center;
            g.half_width = half_width;
            return fit_gaussian_dip(c, g);
        },
        py::arg("curve"), py::arg("center") = py::none(), py::arg("half_width") = py::none());
    m.def(
        "fit_exponential_peak",
        [](const CorrelationHistogram& h, double center, double half_range, double irf_sigma) {
            PeakFitOptions o;
            o.half_range = half_range;
            o.irf_sigma = irf_sigma;
            return fit_exponential_peak(h, center, o);
        },
        py::arg("hist"), py::arg("center"), py::arg("half_range") = 18.75e-9, py::arg("irf_sigma") = 0.0);
    m.def(
        "fit_damped_rabi",
        [](const NormalizedCurve& c, const AtomParams& guess, double irf_sigma_guess) {
            RabiFitOptions o;
            o.irf_sigma_guess = irf_sigma_guess;
            py::gil_scoped_release release;
            return fit_damped_rabi(c, guess, o);
        },
        py::arg("curve"), py::arg("guess") = AtomParams{}, py::arg("irf_sigma_guess") = 1.41e-9);
    m.def("blurred_two_sided_exponential", &blurred_two_sided_exponential, py::arg("t"), py::arg("amplitude"),
          py::arg("lifetime"), py::arg("sigma"));

    py::class_<Headline>(m, "Headline")
        .def_readonly("name", &Headline::name)
        .def_readonly("value", &Headline::value)
        .def_readonly("stat_err", &Headline::stat_err)
        .def_readonly("target", &Headline::target)
        .def_readonly("tolerance", &Headline::tolerance)
        .def_readonly("passed", &Headline::pass)
        .def_readonly("note", &Headline::note)
        .def("__repr__", &format_headline);
    m.def(
        "run_figure",
        [](const std::string& name, std::uint64_t seed, const std::filesystem::path& out_dir, double scale) {
            py::gil_scoped_release release;
            return run_figure(name, seed, out_dir, scale);
        },
        py::arg("name"), py::arg("seed"), py::arg("out_dir"), py::arg("scale") = 1.0);
}
