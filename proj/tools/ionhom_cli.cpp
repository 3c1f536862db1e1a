#include <CLI11.hpp>

#include <iostream>

#include "ionhom/pipeline.hpp"

using namespace ionhom;

namespace {

ExperimentConfig config_with_seed(const std::string& path, std::optional<std::uint64_t> seed) {
    auto cfg = load_config(path);
    if (seed) cfg.seed = *seed;
    cfg.validate(true);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-ion photon interference simulator: simulate, correlate, fit, figure"};
    app.require_subcommand(1);

    std::string config_path, in_path, out_path, model_name = "dip", figure_name;
    std::optional<std::uint64_t> seed;
    Picoseconds bin = kCwBin, window = kCwWindow;
    std::optional<Picoseconds> span_ps;
    std::optional<double> live_time_s, center_ns, irf_ns;
    bool oracle = false;
    double scale = 1.0;

    auto* sim = app.add_subcommand("simulate", "simulate detector clicks into a time-tag file");
    sim->add_option("--config", config_path, "config file (key=value)")->required();
    sim->add_option("--seed", seed, "run seed (overrides the config)");
    sim->add_option("--out", out_path, "output time-tag file")->required();

    auto* cor = app.add_subcommand("correlate", "histogram start-stop delays into CSV");
    cor->add_option("in", in_path, "input time-tag file")->required();
    cor->add_option("--bin", bin, "bin width in ps")->capture_default_str();
    cor->add_option("--window", window, "half window in ps")->capture_default_str();
    cor->add_flag("--oracle", oracle, "check against the brute-force correlator");
    cor->add_option("--span-ps", span_ps, "normalization span (default: last tag + 1 ps)");
    cor->add_option("--live-time", live_time_s, "normalization live time in s (gated runs)");
    cor->add_option("--out", out_path, "output CSV")->required();

    auto* fit = app.add_subcommand("fit", "fit a histogram CSV");
    fit->add_option("in", in_path, "input histogram CSV")->required();
    fit->add_option("--model", model_name, "dip, peak or rabi")->capture_default_str();
    fit->add_option("--center-ns", center_ns, "peak center in ns (peak model)");
    fit->add_option("--irf-ns", irf_ns, "coincidence IRF sigma in ns (peak, rabi models)");
    fit->add_option("--out", out_path, "report path; model curve goes to <stem>_model.csv")->required();

    auto* fig = app.add_subcommand("figure", "run a canned figure pipeline");
    fig->add_option("name", figure_name, "fig2, fig3 or fig4")->required();
    fig->add_option("--seed", seed, "run seed")->required();
    fig->add_option("--out", out_path, "output directory")->required();
    fig->add_option("--scale", scale, "multiplies the simulated span")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*sim) {
            const auto cfg = config_with_seed(config_path, seed);
            const auto n = run_simulate(cfg, out_path);
            std::cout << "wrote " << n << " records to " << out_path << "\n";
        } else if (*cor) {
            CorrelateOptions o{bin, window, oracle, span_ps, live_time_s};
            const auto h = run_correlate(in_path, out_path, o);
            std::cout << "correlated " << h.n_start << " starts x " << h.n_stop << " stops, " << h.total()
                      << " pairs" << (oracle ? ", oracle agrees" : "") << "\n";
        } else if (*fit) {
            FitRunOptions o;
            if (center_ns) o.center = *center_ns * 1e-9;
            if (irf_ns) o.irf_sigma = *irf_ns * 1e-9;
            const auto r = run_fit(in_path, parse_fit_model(model_name), out_path, o);
            for (const auto& p : r.params) std::cout << p.name << " = " << p.value << " +- " << p.std_err << "\n";
        } else if (*fig) {
            const auto heads = run_figure(figure_name, *seed, out_path, scale, &std::cout);
            for (const auto& h : heads)
                if (!h.pass) return 3;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}
