// pathqkd command-line tool: simulate, tomo, skr, calibrate, sweep.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pathqkd/calibrate.hpp"
#include "pathqkd/pipeline.hpp"
#include "pathqkd/report.hpp"
#include "pathqkd/scenario.hpp"
#include "pathqkd/version.hpp"

namespace fs = std::filesystem;
using namespace pathqkd;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "text";
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
    cmd->add_option("--seed", c.seed, "RNG seed (defaults to the input's seed)");
    auto* o = cmd->add_option("--out", c.out, "output directory");
    if (out_required) o->required();
    cmd->add_option("--format", c.format, "stdout report format")->check(CLI::IsMember({"text", "structured"}));
}

void ensure_dir(const std::string& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string csv_header(const OutputMeta& m) {
    std::ostringstream os;
    os << "# tool=pathqkd version=" << kVersion << " seed=" << m.seed << " scenario=" << m.scenario_name
       << " scenario_digest=" << m.scenario_digest << '\n';
    return os.str();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

std::string pct(double v) { return fmt(100.0 * v, 2); }

void emit(const Common& c, const Json& report, const std::string& text, const std::string& basename) {
    const std::string body = c.format == "structured" ? report.dump(2) + "\n" : text;
    std::cout << body;
    if (!c.out.empty()) write_file(path_in(c.out, basename + (c.format == "structured" ? ".json" : ".txt")), body);
}

std::string key_text(const KeyAnalysis& k, const std::string& label) {
    std::ostringstream os;
    os << "QBER (%)        Z        X        Y\n";
    os << std::left << std::setw(12) << label << std::right;
    for (Basis b : kBases) os << std::setw(9) << (k.qber.has(b) ? pct(k.qber[b]) : std::string("-"));
    os << "\n";
    if (k.key_bases)
        os << "key bases       " << basis_name(k.key_bases->first) << " (key) / " << basis_name(k.key_bases->second)
           << " (check)\n";
    os << "Z/X average QBER " << pct(0.5 * (k.qber.z() + k.qber.x())) << " %\n";
    os << "R_r " << fmt(k.coincidence_rate_hz, 3) << " Hz, sifted " << fmt(k.sifted_rate_bps, 3) << " bit/s\n";
    os << "SKR asymptotic  " << fmt(k.skr_asymptotic_bps, 4) << " bit/s\n";
    os << "block size      SKR_fin (bit/s)\n";
    for (const auto& f : k.finite) {
        std::ostringstream n;
        n << std::scientific << std::setprecision(0) << f.block_size;
        os << std::left << std::setw(16) << n.str() << std::right << fmt(f.skr_fin_bps, 4)
           << (f.block_too_small ? "  (block too small)" : "") << "\n";
    }
    return os.str();
}

std::string tomo_text(const TomographyAnalysis& t) {
    std::ostringstream os;
    os << "fidelity        " << fmt(t.fidelity, 4);
    if (t.monte_carlo) os << "  MC " << fmt(t.monte_carlo->mean, 4) << " +- " << fmt(t.monte_carlo->std, 4);
    os << "\nCHSH            " << fmt(t.chsh, 4);
    if (t.monte_carlo) os << "  MC " << fmt(t.monte_carlo->chsh_mean, 4) << " +- " << fmt(t.monte_carlo->chsh_std, 4);
    os << "\noverlap (Z/X)   " << fmt(t.overlap, 4) << "\n";
    os << "MLE             " << t.mle.iterations << " iterations, "
       << (t.mle.converged ? "converged" : "not converged")
       << (t.mle.physical_inversion ? ", linear inversion physical" : ", linear inversion not physical") << "\n";
    if (t.monte_carlo) os << "MC runs kept    " << t.monte_carlo->samples.size() << " (excluded " << t.monte_carlo->excluded << ")\n";
    os << "joint probabilities (rows Alice ZZ.. blocks Z,X; cols Bob)\n";
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) os << std::setw(9) << fmt(t.joint(r, c), 4);
        os << "\n";
    }
    return os.str();
}

// ---- simulate ---------------------------------------------------------------

int cmd_simulate(const std::string& scenario_path, const std::string& which, const Common& c) {
    const auto t0 = std::chrono::steady_clock::now();
    Scenario s = load_scenario(scenario_path);
    if (c.seed) s.seed = *c.seed;
    ensure_dir(c.out);
    const OutputMeta meta{s.seed, scenario_digest(s), s.name};

    Json record;
    record["format"] = "pathqkd.run_record/1";
    record["meta"] = meta_json(meta);
    record["scenario"] = to_json(s);
    Json report;
    report["meta"] = meta_json(meta);
    std::ostringstream text;
    text << "scenario " << s.name << "  seed " << s.seed << "  digest " << meta.scenario_digest << "\n";

    for (CampaignKind kind : {CampaignKind::Key, CampaignKind::Tomography}) {
        const std::string name = campaign_name(kind);
        if (which != "all" && which != name) continue;
        const auto& camp = kind == CampaignKind::Key ? s.key : s.tomography;
        if (!camp) {
            if (which == name) require_campaign(s, kind);
            continue;
        }
        const CampaignRun run = run_campaign(s, kind);
        write_file(path_in(c.out, "counts_" + name + ".json"), counts_to_json(run.sim.table, meta, name).dump(2) + "\n");
        std::ostringstream trace;
        trace << csv_header(meta);
        write_trace_csv(trace, run.sim.trace);
        write_file(path_in(c.out, "trace_" + name + ".csv"), trace.str());

        Json cj;
        cj["campaign_seed"] = run.seed;
        cj["config"] = to_json(run.config);
        cj["rates"] = rates_json(run.sim.rates);
        cj["phase_trace"] = trace_summary_json(run.sim.summary, 1.0 / run.config.pll.loop_rate_hz);
        cj["counts"] = counts_to_json(run.sim.table, meta, name)["settings"];
        text << "\n[" << name << " campaign]\n";
        text << "true coincidences " << fmt(run.sim.rates.true_coincidence_hz, 3) << " Hz, accidentals "
             << fmt(run.sim.rates.accidental_hz, 5) << " Hz\n";
        text << "PLL unlocked fraction " << fmt(run.sim.summary.unlocked_fraction(), 5) << ", locked residual std "
             << fmt(run.sim.summary.locked_residual_std(), 4) << " rad\n";
        if (kind == CampaignKind::Key) {
            const KeyAnalysis k = analyze_key(run.sim.table, s.analysis);
            cj["analysis"] = key_analysis_json(k);
            text << key_text(k, s.name);
        } else {
            const TomographyAnalysis t =
                analyze_tomography(run.sim.table, target_state(s.analysis.target_state), 0, 0);
            cj["analysis"] = tomography_json(t);
            text << tomo_text(t);
        }
        report[name] = cj["analysis"];
        record["campaigns"][name] = cj;
    }
    record["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file(path_in(c.out, "run_record.json"), record.dump(2) + "\n");
    emit(c, report, text.str(), "simulate_report");
    return 0;
}

// ---- tomo -------------------------------------------------------------------

int cmd_tomo(const std::string& counts_path, const std::string& target, int runs, double variance_scale,
             unsigned threads, const Common& c) {
    const CountsFile cf = load_counts(counts_path);
    validate_tomography(cf.table);
    const std::uint64_t seed = c.seed.value_or(1);
    OutputMeta meta{seed, cf.meta.value("scenario_digest", std::string()), cf.meta.value("scenario", std::string())};
    MonteCarloOptions mc;
    mc.variance_scale = variance_scale;
    mc.threads = threads;
    const TomographyAnalysis t = analyze_tomography(cf.table, target_state(target), runs, monte_carlo_seed(seed), mc);
    ensure_dir(c.out);
    if (!c.out.empty()) {
        std::ostringstream d, p, h;
        d << csv_header(meta);
        write_density_csv(d, t.mle.rho);
        write_file(path_in(c.out, "density.csv"), d.str());
        p << csv_header(meta);
        write_density_polar_csv(p, t.mle.rho);
        write_file(path_in(c.out, "density_polar.csv"), p.str());
        h << csv_header(meta) << "run,fidelity,chsh\n";
        h.precision(17);
        for (std::size_t i = 0; i < t.monte_carlo->samples.size(); ++i)
            h << i << ',' << t.monte_carlo->samples[i] << ',' << t.monte_carlo->chsh_samples[i] << '\n';
        write_file(path_in(c.out, "fidelity_samples.csv"), h.str());
    }
    Json report;
    report["meta"] = meta_json(meta);
    report["counts_file_meta"] = cf.meta;
    report["target"] = target;
    report["runs"] = runs;
    report["variance_scale"] = variance_scale;
    report["tomography"] = tomography_json(t);
    const auto& mc_h = *t.monte_carlo;
    if (mc_h.excluded > 0)
        std::cerr << "warning: " << mc_h.excluded << " of " << runs << " Monte Carlo runs did not converge (excluded)\n";
    emit(c, report, tomo_text(t), "tomo_report");
    return 0;
}

// ---- skr --------------------------------------------------------------------

AnalysisParams load_params(const std::string& path) {
    AnalysisParams a;
    if (path.empty()) return a;
    const std::string text = read_file(path);
    const Json j = detail::parse_text(text, path);
    if (j.contains("analysis")) return parse_scenario(text, path).analysis;
    const detail::Reader r(text, path);
    r.object(j, "");
    r.only(j, "", {"f", "sift_ratio", "raw_rate_hz", "alpha", "eta", "eps_sec", "eps_cor", "block_sizes"});
    r.number(j, "", "f", a.skr.f);
    r.number(j, "", "sift_ratio", a.skr.sift_ratio);
    r.number(j, "", "raw_rate_hz", a.skr.raw_rate_hz);
    r.number(j, "", "alpha", a.skr.alpha);
    r.number(j, "", "eta", a.skr.eta);
    r.number(j, "", "eps_sec", a.skr.eps_sec);
    r.number(j, "", "eps_cor", a.skr.eps_cor);
    if (j.contains("block_sizes")) a.block_sizes = j.at("block_sizes").get<std::vector<double>>();
    return a;
}

int cmd_skr(const std::vector<std::string>& counts, std::optional<double> qz, std::optional<double> qx,
            std::optional<double> qy, std::optional<double> raw_rate, const std::string& params_path,
            const std::vector<double>& blocks, const Common& c) {
    AnalysisParams params = load_params(params_path);
    if (!blocks.empty()) params.block_sizes = blocks;
    if (raw_rate) params.skr.raw_rate_hz = *raw_rate;
    ensure_dir(c.out);
    Json report;
    report["meta"] = meta_json({c.seed.value_or(0), "", ""});
    Json rows = Json::array();
    std::ostringstream text;

    if (counts.empty()) {
        if (!qz || !qx) throw ValidationError("skr needs --counts or both --qber-z and --qber-x");
        KeyAnalysis k;
        k.qber.qber[0] = *qz;
        k.qber.qber[1] = *qx;
        if (qy) k.qber.qber[2] = *qy;
        if (qy) k.key_bases = select_key_bases(k.qber, params.skr.f);
        k.skr = params.skr;
        k.coincidence_rate_hz = params.skr.raw_rate_hz;
        k.sifted_rate_bps = sifted_rate(params.skr);
        k.skr_asymptotic_bps = skr_asymptotic(*qz, *qx, params.skr);
        if (k.sifted_rate_bps > 0)
            for (double n : params.block_sizes) k.finite.push_back(skr_finite(*qz, *qx, params.skr, n, k.sifted_rate_bps));
        Json row = key_analysis_json(k);
        row["label"] = "input";
        rows.push_back(row);
        text << key_text(k, "input");
    } else {
        for (const auto& path : counts) {
            const CountsFile cf = load_counts(path);
            const KeyAnalysis k = analyze_key(cf.table, params);
            const std::string label = cf.meta.value("scenario", fs::path(path).stem().string());
            Json row = key_analysis_json(k);
            row["label"] = label;
            row["counts_file_meta"] = cf.meta;
            rows.push_back(row);
            text << key_text(k, label) << "\n";
        }
    }
    report["rows"] = rows;
    emit(c, report, text.str(), "skr_report");
    return 0;
}

// ---- calibrate --------------------------------------------------------------

int cmd_calibrate(const std::string& targets_path, const Common& c) {
    CalibrationSpec spec = load_calibration(targets_path);
    if (c.seed) spec.scenario.seed = *c.seed;
    const CalibrationResult r = calibrate(spec);
    ensure_dir(c.out);
    const std::string name = r.fitted.name;
    const OutputMeta meta{r.fitted.seed, scenario_digest(r.fitted), name};
    Json res = residuals_to_json(r);
    res["meta"] = meta_json(meta);
    write_file(path_in(c.out, name + ".json"), serialize(r.fitted));
    write_file(path_in(c.out, name + ".residuals.json"), res.dump(2) + "\n");
    std::ostringstream text;
    text << "calibration of " << name << ": " << (r.converged ? "converged" : "NOT converged") << " after "
         << r.iterations << " iterations (" << r.evaluations << " evaluations)\n";
    for (const auto& t : r.residuals) {
        text << std::left << std::setw(14) << t.metric << std::right << " target " << std::setw(12) << t.target
             << "  achieved " << std::setw(12) << t.achieved << "  rel.err " << fmt(t.relative_error, 5)
             << "  tol " << t.tolerance;
        for (const auto& [k, v] : t.overrides) text << "  [" << k << "=" << v << "]";
        text << "\n";
    }
    for (const auto& f : spec.free) text << f.path << " = " << *scenario_param(const_cast<Scenario&>(r.fitted), f.path) << "\n";
    emit(c, res, text.str(), name + ".calibration");
    if (!r.converged) {
        std::ostringstream msg;
        msg << "calibration did not reach all targets; best residuals:";
        for (const auto& t : r.residuals)
            if (!t.ok()) msg << " " << t.metric << " rel.err " << t.relative_error << " (tol " << t.tolerance << ")";
        throw NoConvergence(msg.str());
    }
    return 0;
}

// ---- sweep ------------------------------------------------------------------

int cmd_sweep(const std::string& scenario_path, const std::vector<double>& lengths, bool simulate, const Common& c) {
    Scenario s = load_scenario(scenario_path);
    if (c.seed) s.seed = *c.seed;
    const Campaign& key = require_campaign(s, CampaignKind::Key);
    const LinkConfig base = campaign_config(s, key);
    double cs = 0.0, n = 0.0;
    {
        SimulationOptions o;
        o.max_trace_samples = 1;
        const PhaseHistory h = run_phase_history(base, key.schedule(), campaign_seed(s.seed, CampaignKind::Key), o);
        for (const auto& x : h.exposure) {
            cs += x.cos_sum;
            n += static_cast<double>(x.cycles);
        }
    }
    const auto pts = skr_vs_distance(base, s.analysis.skr, lengths, cs / n);
    ensure_dir(c.out);
    const OutputMeta meta{s.seed, scenario_digest(s), s.name};
    std::ostringstream csv;
    csv << csv_header(meta) << "length_km,skr_analytic,skr_simulated,qber_z_analytic,qber_x_analytic\n";
    csv.precision(17);
    Json rows = Json::array();
    std::ostringstream text;
    text << "length_km   SKR analytic   SKR simulated   (bit/s)\n";
    for (const auto& p : pts) {
        double sim = std::nan("");
        if (simulate) {
            Scenario v = s;
            v.link.channel.length_km = p.length_km;
            const CampaignRun run = run_campaign(v, CampaignKind::Key);
            sim = analyze_key(run.sim.table, v.analysis).skr_asymptotic_bps;
        }
        csv << p.length_km << ',' << p.skr_bps << ',' << sim << ',' << p.qber_z << ',' << p.qber_x << '\n';
        rows.push_back({{"length_km", p.length_km},
                        {"skr_analytic", p.skr_bps},
                        {"skr_simulated", simulate ? Json(sim) : Json(nullptr)},
                        {"qber_z_analytic", p.qber_z},
                        {"qber_x_analytic", p.qber_x},
                        {"sifted_rate_bps", p.sifted_rate_bps}});
        text << std::setw(9) << p.length_km << std::setw(15) << fmt(p.skr_bps, 4) << std::setw(16)
             << (simulate ? fmt(sim, 4) : std::string("-")) << "\n";
    }
    if (!c.out.empty()) write_file(path_in(c.out, "sweep.csv"), csv.str());
    Json report;
    report["meta"] = meta_json(meta);
    report["rows"] = rows;
    emit(c, report, text.str(), "sweep_report");
    return 0;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("field 'list': '" + item + "' is not a number");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pathqkd: chip-to-chip entanglement distribution simulator and QKD analysis"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Common c_sim, c_tomo, c_skr, c_cal, c_sweep;

    std::string scenario, campaign = "all";
    auto* sim = app.add_subcommand("simulate", "simulate coincidence counts for a scenario");
    sim->add_option("scenario", scenario, "scenario file")->required();
    sim->add_option("--campaign", campaign, "campaign to run")->check(CLI::IsMember({"all", "key", "tomography"}));
    add_common(sim, c_sim, true);

    std::string counts_file, target = "phi_plus";
    int runs = 2000;
    double variance_scale = 1.0;
    unsigned threads = 0;
    auto* tomo = app.add_subcommand("tomo", "reconstruct the state from a 9-setting counts file");
    tomo->add_option("counts", counts_file, "counts file")->required();
    tomo->add_option("--target", target, "target state (phi_plus, phi_minus, mixed)");
    tomo->add_option("--runs", runs, "Monte Carlo runs")->check(CLI::PositiveNumber);
    tomo->add_option("--variance-scale", variance_scale, "count variance multiplier (0 disables resampling)");
    tomo->add_option("--threads", threads, "worker threads (0 = all cores)");
    add_common(tomo, c_tomo, false);

    std::vector<std::string> skr_counts;
    std::optional<double> qz, qx, qy, raw_rate;
    std::string params_file, blocks_str;
    auto* skr = app.add_subcommand("skr", "QBER and secret key rates from counts or QBER values");
    skr->add_option("--counts", skr_counts, "counts file(s) with ZZ and XX settings");
    skr->add_option("--qber-z", qz, "QBER in Z");
    skr->add_option("--qber-x", qx, "QBER in X");
    skr->add_option("--qber-y", qy, "QBER in Y");
    skr->add_option("--raw-rate", raw_rate, "R_r in Hz when QBER values are given");
    skr->add_option("--params", params_file, "key-rate parameter file or scenario file");
    skr->add_option("--block-sizes", blocks_str, "comma-separated block sizes");
    add_common(skr, c_skr, false);

    std::string targets_file;
    auto* cal = app.add_subcommand("calibrate", "fit free scenario parameters to targets");
    cal->add_option("targets", targets_file, "targets file")->required();
    add_common(cal, c_cal, true);

    std::string sweep_scenario, lengths_str = "0.004,10,20,30,40,50,60,70,80";
    bool no_sim = false;
    auto* sweep = app.add_subcommand("sweep", "secret key rate versus fiber length");
    sweep->add_option("scenario", sweep_scenario, "template scenario file")->required();
    sweep->add_option("--lengths", lengths_str, "comma-separated lengths in km");
    sweep->add_flag("--no-simulate", no_sim, "analytic column only");
    add_common(sweep, c_sweep, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() != 0) std::cerr << "error: UsageError: ";
        return app.exit(e);
    }

    try {
        if (*sim) return cmd_simulate(scenario, campaign, c_sim);
        if (*tomo) return cmd_tomo(counts_file, target, runs, variance_scale, threads, c_tomo);
        if (*skr)
            return cmd_skr(skr_counts, qz, qx, qy, raw_rate, params_file,
                           blocks_str.empty() ? std::vector<double>{} : parse_list(blocks_str), c_skr);
        if (*cal) return cmd_calibrate(targets_file, c_cal);
        if (*sweep) return cmd_sweep(sweep_scenario, parse_list(lengths_str), !no_sim, c_sweep);
    } catch (const pathqkd::Error& e) {
        std::cerr << "error: " << e.error_class() << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: InternalError: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
