// cspdc: simulate -> correlate -> fit -> report pipeline for cavity-enhanced
// SPDC photon-pair sources.
//
// Exit codes: 0 success, 1 runtime or convergence failure, 2 invalid input.

#include "cspdc/biphoton_model.hpp"
#include "cspdc/correlator.hpp"
#include "cspdc/errors.hpp"
#include "cspdc/fit.hpp"
#include "cspdc/io.hpp"
#include "cspdc/metrology.hpp"
#include "cspdc/timetag_sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace
{
using nlohmann::json;
using namespace cspdc;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;

std::string dump(const json &j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------- simulate

struct SimulateArgs
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
};

int cmd_simulate(const SimulateArgs &args)
{
    const json raw = read_json_file(args.config);
    RunConfig cfg = run_config_from_json(raw);
    if (args.seed)
        cfg.source.seed = *args.seed;
    if (args.output)
        cfg.output_prefix = *args.output;

    const auto result = simulate(cfg.source, cfg.detectors[0], cfg.detectors[1]);

    const json canonical = run_config_to_json(cfg);
    json manifest;
    manifest["config_hash"] = config_hash(canonical);
    manifest["seed"] = cfg.source.seed;
    manifest["duration_s"] = cfg.source.duration;
    manifest["pairs_generated"] = result.stats.pairs_generated;
    manifest["delay_fallbacks"] = result.stats.delay_fallbacks;
    manifest["channels"] = json::array();
    for (int ch = 0; ch < 2; ++ch)
    {
        const auto &stream = result.streams[ch];
        const auto &cs = result.stats.channels[ch];
        const std::string file = cfg.output_prefix + "_ch" + std::to_string(ch) + ".ttg";
        write_timetags(file, stream);
        manifest["channels"].push_back(
            {{"channel", ch},
             {"file", std::filesystem::path(file).filename().string()},
             {"tags", stream.tags.size()},
             {"singles_rate_hz", static_cast<double>(stream.tags.size()) / cfg.source.duration},
             {"expected_singles_rate_hz", expected_singles_rate(cfg.source, cfg.detectors[ch])},
             {"photons_detected", cs.photons_detected},
             {"dark_counts", cs.dark_counts},
             {"afterpulses", cs.afterpulses},
             {"dead_time_losses", cs.dead_time_losses}});
    }
    manifest["config"] = canonical;
    write_text_file(cfg.output_prefix + "_manifest.json", dump(manifest));
    return kExitOk;
}

// --------------------------------------------------------------- correlate

struct CorrelateArgs
{
    std::string file_a, file_b;
    std::int64_t bin_width_ps = 128;
    std::optional<std::int64_t> tau_max_ps;
    std::optional<double> duration_s;
    std::string output = "histogram";
    unsigned threads = 0;
};

int cmd_correlate(const CorrelateArgs &args)
{
    const auto a = read_timetags(args.file_a, args.duration_s);
    const auto b = read_timetags(args.file_b, args.duration_s);
    // The 40 ns default spans about 21 comb teeth at a 1.9 ns round trip.
    const std::int64_t tau_max = args.tau_max_ps ? *args.tau_max_ps : round_up_to_bins(40000, args.bin_width_ps);
    CorrelatorOptions opts;
    opts.threads = args.threads;
    const auto h = correlate(a, b, args.bin_width_ps, tau_max, opts);
    write_text_file(args.output + ".csv", histogram_to_csv(h));
    write_text_file(args.output + ".json", dump(histogram_to_json(h)));
    return kExitOk;
}

// --------------------------------------------------------------------- fit

struct ReportArgs
{
    std::optional<double> pump_mw;
    std::optional<double> system_jitter_ps;
    std::optional<double> single_pass_brightness;
    double t1 = 0.96, f = 0.58, t2 = 0.97, d = 0.05;
    std::optional<std::string> efficiencies_config;
};

DetectionEfficiencies efficiencies_of(const ReportArgs &r)
{
    if (r.efficiencies_config)
    {
        const json j = read_json_file(*r.efficiencies_config);
        return efficiencies_from_json(j.contains("efficiencies") ? j.at("efficiencies") : j);
    }
    DetectionEfficiencies e{r.t1, r.f, r.t2, r.d};
    e.validate();
    return e;
}

struct FitArgs
{
    std::string histogram;
    std::optional<std::string> init;
    bool allow_nonconverged = false;
    std::string output = "fit";
    std::optional<std::string> plot_csv;
    int max_iterations = 200;
    ReportArgs report;
};

int cmd_fit(const FitArgs &args)
{
    const auto h = histogram_from_json(read_json_file(args.histogram));
    std::optional<CombModelParams> init;
    if (args.init)
    {
        const json j = read_json_file(*args.init);
        init = params_from_json(j.contains("params") ? j.at("params") : j);
    }
    FitOptions opts;
    opts.max_iterations = args.max_iterations;
    const auto result = fit_comb(h, init, opts);
    write_text_file(args.output + "_fit.json", dump(fit_to_json(result)));

    if (args.plot_csv)
    {
        std::ostringstream os;
        os << "delay_ps,count,model\n";
        char buf[96];
        for (std::size_t k = 0; k < h.n_bins(); ++k)
        {
            const double tau = h.bin_center_ps(k) / kPicosecondsPerSecond;
            const double m = comb_model_gradient(result.params, tau, opts.tooth_truncation).value;
            std::snprintf(buf, sizeof buf, "%.1f,%llu,%.10g\n", h.bin_center_ps(k),
                          static_cast<unsigned long long>(h.counts[k]), m);
            os << buf;
        }
        write_text_file(*args.plot_csv, os.str());
    }

    if (!result.converged)
    {
        std::cerr << "cspdc fit: fit did not converge after " << result.n_iterations << " iterations\n";
        return args.allow_nonconverged ? kExitOk : kExitRuntime;
    }
    if (args.report.pump_mw && args.report.system_jitter_ps)
    {
        ReportInputs in;
        in.efficiencies = efficiencies_of(args.report);
        in.duration_s = h.duration;
        in.pump_mw = *args.report.pump_mw;
        in.system_jitter_fwhm_s = *args.report.system_jitter_ps / kPicosecondsPerSecond;
        in.single_pass_brightness = args.report.single_pass_brightness;
        const auto report = build_report(h, result, in);
        write_text_file(args.output + "_report.json", dump(report_to_json(report)));
    }
    return kExitOk;
}

// ------------------------------------------------------------------ report

struct ReportCmdArgs
{
    std::string fit;
    std::optional<double> counts;
    std::optional<std::string> histogram;
    std::optional<double> duration_s;
    ReportArgs report;
    std::string output = "report.json";
};

int cmd_report(const ReportCmdArgs &args)
{
    const json fj = read_json_file(args.fit);
    CombFitResult fit;
    if (fj.contains("params"))
    {
        fit = fit_from_json(fj);
    }
    else
    {
        // A bare parameter document stands for an externally obtained fit.
        fit.params = params_from_json(fj);
        fit.converged = true;
    }
    if (!args.report.pump_mw || !args.report.system_jitter_ps)
        throw ConfigError("report needs --pump-mw and --system-jitter-ps");

    ReportInputs in;
    in.efficiencies = efficiencies_of(args.report);
    in.pump_mw = *args.report.pump_mw;
    in.system_jitter_fwhm_s = *args.report.system_jitter_ps / kPicosecondsPerSecond;
    in.single_pass_brightness = args.report.single_pass_brightness;
    in.total_coincidences = args.counts;

    SourceReport report;
    if (args.histogram)
    {
        const auto h = histogram_from_json(read_json_file(*args.histogram));
        in.duration_s = args.duration_s ? *args.duration_s : h.duration;
        report = build_report(h, fit, in);
    }
    else
    {
        if (!args.counts)
            throw ConfigError("report needs --counts or --histogram");
        if (!args.duration_s)
            throw ConfigError("report needs --duration-s when no histogram is given");
        in.duration_s = *args.duration_s;
        report = build_report(fit, in);
    }
    write_text_file(args.output, dump(report_to_json(report)));
    return kExitOk;
}

// -------------------------------------------------------------- model-eval

struct ModelEvalArgs
{
    std::optional<std::string> params;
    double c1 = 1.0, c2 = 0.0;
    double tau_f_ps = 1900.0, tau_w_ps = 561.0, linewidth_hz = 2.4e6;
    int n_modes = 3;
    double tau_min_ps = -10000.0, tau_max_ps = 10000.0, step_ps = 16.0;
    int truncation = kDefaultToothTruncation;
    std::optional<std::string> output;
};

int cmd_model_eval(const ModelEvalArgs &args)
{
    CombModelParams p;
    if (args.params)
    {
        const json j = read_json_file(*args.params);
        p = params_from_json(j.contains("params") ? j.at("params") : j);
    }
    else
    {
        p = {args.c1, args.c2, args.tau_f_ps / kPicosecondsPerSecond, args.tau_w_ps / kPicosecondsPerSecond,
             kTwoPi * args.linewidth_hz, args.n_modes};
    }
    p.validate();
    if (!(args.step_ps > 0.0) || !(args.tau_max_ps >= args.tau_min_ps))
        throw ConfigError("model-eval needs step > 0 and tau_max >= tau_min");

    std::ostringstream os;
    os << "delay_ps,g2_ideal,g2_convolved\n";
    char buf[128];
    const auto steps = static_cast<long long>(std::floor((args.tau_max_ps - args.tau_min_ps) / args.step_ps + 1e-9));
    for (long long i = 0; i <= steps; ++i)
    {
        const double tau_ps = args.tau_min_ps + static_cast<double>(i) * args.step_ps;
        const double tau = tau_ps / kPicosecondsPerSecond;
        std::snprintf(buf, sizeof buf, "%.6g,%.12g,%.12g\n", tau_ps, eval_g2_ideal(p, tau),
                      eval_g2_convolved(p, tau, args.truncation));
        os << buf;
    }
    if (args.output)
        write_text_file(*args.output, os.str());
    else
        std::cout << os.str();
    return kExitOk;
}

void add_report_options(CLI::App *cmd, ReportArgs &r)
{
    cmd->add_option("--pump-mw", r.pump_mw, "Pump power in mW");
    cmd->add_option("--system-jitter-ps", r.system_jitter_ps, "Two-detector system jitter FWHM in ps");
    cmd->add_option("--single-pass-brightness", r.single_pass_brightness,
                    "Single-pass brightness for the enhancement factor, pairs/(s MHz mW)");
    cmd->add_option("--t1", r.t1, "Optics-to-fibre transmittance")->capture_default_str();
    cmd->add_option("--f", r.f, "Fibre coupling efficiency")->capture_default_str();
    cmd->add_option("--t2", r.t2, "Transmittance after the beam splitter")->capture_default_str();
    cmd->add_option("--d", r.d, "Detector efficiency")->capture_default_str();
    cmd->add_option("--efficiencies", r.efficiencies_config, "JSON file with t1/f/t2/d (overrides the flags)");
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Cavity-enhanced SPDC source simulation, correlation and comb fitting"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto *simulate_cmd = app.add_subcommand("simulate", "Generate two detector time-tag files from a run config");
    simulate_cmd->add_option("--config,config", sim.config, "Run configuration JSON")->required();
    simulate_cmd->add_option("--seed", sim.seed, "Override source.seed");
    simulate_cmd->add_option("--output", sim.output, "Output prefix (overrides output.prefix)");

    CorrelateArgs corr;
    auto *correlate_cmd = app.add_subcommand("correlate", "Coincidence histogram of two time-tag files");
    correlate_cmd->add_option("a", corr.file_a, "Start-channel tag file")->required();
    correlate_cmd->add_option("b", corr.file_b, "Stop-channel tag file")->required();
    correlate_cmd->add_option("--bin-width-ps", corr.bin_width_ps, "Bin width in ps")->capture_default_str();
    correlate_cmd->add_option("--tau-max-ps", corr.tau_max_ps,
                              "Half window in ps (default 40 ns rounded up to whole bins)");
    correlate_cmd->add_option("--duration-s", corr.duration_s, "Record duration (default: from the last tag)");
    correlate_cmd->add_option("--threads", corr.threads, "Worker threads (0 = hardware)");
    correlate_cmd->add_option("--output", corr.output, "Output prefix for .csv and .json")->capture_default_str();

    FitArgs fit;
    auto *fit_cmd = app.add_subcommand("fit", "Fit the jitter-convolved comb model to a histogram");
    fit_cmd->add_option("histogram", fit.histogram, "Histogram JSON document")->required();
    fit_cmd->add_option("--init", fit.init, "Initial parameters JSON (skips auto-initialisation)");
    fit_cmd->add_flag("--allow-nonconverged", fit.allow_nonconverged, "Exit 0 even if the fit does not converge");
    fit_cmd->add_option("--output", fit.output, "Output prefix")->capture_default_str();
    fit_cmd->add_option("--plot-csv", fit.plot_csv, "Write data and model curve per bin");
    fit_cmd->add_option("--max-iterations", fit.max_iterations)->capture_default_str();
    add_report_options(fit_cmd, fit.report);

    ReportCmdArgs rep;
    auto *report_cmd = app.add_subcommand("report", "Derived source metrics from a fit");
    report_cmd->add_option("--fit", rep.fit, "Fit JSON or bare parameter JSON")->required();
    report_cmd->add_option("--counts", rep.counts, "Background-free coincidence total");
    report_cmd->add_option("--histogram", rep.histogram, "Histogram JSON to derive counts and g2(0)");
    report_cmd->add_option("--duration-s", rep.duration_s, "Measurement duration in s");
    report_cmd->add_option("--output", rep.output, "Report JSON path")->capture_default_str();
    add_report_options(report_cmd, rep.report);

    ModelEvalArgs me;
    auto *model_cmd = app.add_subcommand("model-eval", "Evaluate the ideal and jitter-convolved models on a grid");
    model_cmd->add_option("--params", me.params, "Parameter JSON (overrides the flags)");
    model_cmd->add_option("--c1", me.c1)->capture_default_str();
    model_cmd->add_option("--c2", me.c2)->capture_default_str();
    model_cmd->add_option("--tau-f-ps", me.tau_f_ps)->capture_default_str();
    model_cmd->add_option("--tau-w-ps", me.tau_w_ps)->capture_default_str();
    model_cmd->add_option("--linewidth-hz", me.linewidth_hz)->capture_default_str();
    model_cmd->add_option("--n-modes", me.n_modes)->capture_default_str();
    model_cmd->add_option("--tau-min-ps", me.tau_min_ps)->capture_default_str();
    model_cmd->add_option("--tau-max-ps", me.tau_max_ps)->capture_default_str();
    model_cmd->add_option("--step-ps", me.step_ps)->capture_default_str();
    model_cmd->add_option("--truncation", me.truncation)->capture_default_str();
    model_cmd->add_option("--output", me.output, "CSV path (default stdout)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::Success &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        app.exit(e);
        return kExitInput;
    }

    try
    {
        if (app.got_subcommand(simulate_cmd))
            return cmd_simulate(sim);
        if (app.got_subcommand(correlate_cmd))
            return cmd_correlate(corr);
        if (app.got_subcommand(fit_cmd))
            return cmd_fit(fit);
        if (app.got_subcommand(report_cmd))
            return cmd_report(rep);
        if (app.got_subcommand(model_cmd))
            return cmd_model_eval(me);
    }
    catch (const std::invalid_argument &e)
    {
        std::cerr << "cspdc: " << e.what() << "\n";
        return kExitInput;
    }
    catch (const nlohmann::json::exception &e)
    {
        std::cerr << "cspdc: malformed JSON input: " << e.what() << "\n";
        return kExitInput;
    }
    catch (const std::exception &e)
    {
        std::cerr << "cspdc: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
