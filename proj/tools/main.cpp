// nvdnp: command-line front end for the hyperpolarization toolkit.
// Subcommands map onto the library modules; every stochastic command takes
// an explicit --seed and derives task-local streams from it, so reruns are
// byte identical.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nvdnp/config.hpp"
#include "nvdnp/csv.hpp"
#include "nvdnp/dnp.hpp"
#include "nvdnp/fit.hpp"
#include "nvdnp/plan.hpp"
#include "nvdnp/rng.hpp"
#include "nvdnp/signal.hpp"
#include "nvdnp/spectra.hpp"
#include "nvdnp/spin.hpp"

namespace {

using namespace nvdnp;

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

Branch branch_from_string(const std::string& s) {
    if (s == "plus") return Branch::ToPlusOne;
    if (s == "minus") return Branch::ToMinusOne;
    throw std::invalid_argument("branch must be 'plus' or 'minus', got '" + s + "'");
}

std::array<HyperfineTensor, 3> secular_tensors(const PhysicsConfig& physics);

std::array<HyperfineTensor, 3> active_tensors(const PhysicsConfig& physics, bool secular) {
    return secular ? secular_tensors(physics) : physics.site_tensors();
}

// Grid centered on the selected branch, padded past the outermost
// full-occupancy satellite so the broadening precondition always holds.
// DNP work needs the wider pad: the kernel requires the line tails to have
// died off before the grid ends. The grid must come from the same tensor
// set that later synthesizes the spectrum, or its center drifts off the
// pattern's symmetry point.
GridSpec auto_grid(const PhysicsConfig& physics, Branch branch, std::size_t n_points,
                   double pad_GHz = 0.1, bool secular = false) {
    const auto tensors = active_tensors(physics, secular);
    FirstShellConfig shell;
    shell.occupied_sites.assign(tensors.begin(), tensors.end());
    const auto es = eigendecompose(build_hamiltonian(physics.nv, shell));
    const auto lines = transition_lines(es, physics.nv, {physics.mixing_threshold});
    double lo = 0.0, hi = 0.0;
    bool seen = false;
    for (const auto& line : lines) {
        if (line.branch != branch) continue;
        if (!seen) {
            lo = hi = line.frequency_GHz;
            seen = true;
        }
        lo = std::min(lo, line.frequency_GHz);
        hi = std::max(hi, line.frequency_GHz);
    }
    if (!seen) throw std::invalid_argument("no transitions found on the requested branch");
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo) + pad_GHz;
    return GridSpec{mid - half, mid + half, n_points};
}

std::array<HyperfineTensor, 3> secular_tensors(const PhysicsConfig& physics) {
    const double Azz = physics.site_tensors()[0].A_MHz(2, 2);
    return {HyperfineTensor::secular(Azz), HyperfineTensor::secular(Azz),
            HyperfineTensor::secular(Azz)};
}

nlohmann::json param_json(const ParamEstimate& p) {
    return {{"value", p.value},
            {"std_error", p.std_error},
            {"ci_low", p.ci_low},
            {"ci_high", p.ci_high}};
}

void emit_json(const std::string& out, const nlohmann::json& j) {
    const std::string text = j.dump(2) + "\n";
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    std::filesystem::path p(out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open " + out + " for writing");
    f << text;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Leading `# key = value` lines, without committing to a column layout.
std::string probe_csv_kind(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] != '#') break;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t#");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        if (trim(line.substr(0, eq)) == "kind") return trim(line.substr(eq + 1));
    }
    return {};
}

struct DnpInputs {
    SpectrumGrid odmr;
    DnpSpectrum dnp;
    double nu_n_MHz = 0.0;
};

DnpInputs make_dnp(const PhysicsConfig& physics, double p, Branch branch, bool secular,
                   double nu_n_MHz, double scale, const GridSpec& grid) {
    DnpInputs out;
    OdmrOptions opts;
    opts.branch = branch;
    opts.mixing_threshold = physics.mixing_threshold;
    const auto tensors = active_tensors(physics, secular);
    out.odmr = synthesize_odmr(Enrichment{p}, physics.nv, tensors, physics.lineshape, grid, opts);
    out.nu_n_MHz = nu_n_MHz;
    out.dnp = dnp_spectrum(out.odmr, nu_n_MHz, scale);
    return out;
}

// ---- subcommand bodies ----

int cmd_odmr(const std::string& data_dir, std::vector<double> ps, const std::string& branch_name,
             double fwhm_MHz, const std::string& profile, double grid_min, double grid_max,
             std::size_t grid_points, const std::string& out_dir) {
    ToolkitConfig cfg = load_config(data_dir);
    if (fwhm_MHz > 0.0) cfg.physics.lineshape.fwhm_MHz = fwhm_MHz;
    if (!profile.empty()) {
        if (profile == "lorentzian")
            cfg.physics.lineshape.profile = LineProfile::Lorentzian;
        else if (profile == "gaussian")
            cfg.physics.lineshape.profile = LineProfile::Gaussian;
        else
            throw std::invalid_argument("profile must be 'lorentzian' or 'gaussian'");
    }
    cfg.physics.validate();
    const Branch branch = branch_from_string(branch_name);
    if (ps.empty()) ps.push_back(0.011);

    GridSpec grid;
    if (grid_points > 0 && grid_max > grid_min)
        grid = GridSpec{grid_min, grid_max, grid_points};
    else
        grid = auto_grid(cfg.physics, branch, 4001);

    OdmrOptions opts;
    opts.branch = branch;
    opts.mixing_threshold = cfg.physics.mixing_threshold;
    const auto tensors = cfg.physics.site_tensors();

    std::filesystem::create_directories(out_dir);
    for (double p : ps) {
        const SpectrumGrid spec =
            synthesize_odmr(Enrichment{p}, cfg.physics.nv, tensors, cfg.physics.lineshape, grid,
                            opts);
        const auto w = occupancy_weights(Enrichment{p});
        CsvMetadata meta;
        meta.set("kind", "odmr");
        meta.set("p", p);
        meta.set("branch", branch_name);
        meta.set("profile", cfg.physics.lineshape.profile == LineProfile::Lorentzian
                                ? "lorentzian"
                                : "gaussian");
        meta.set("fwhm_MHz", cfg.physics.lineshape.fwhm_MHz);
        meta.set("B_T", cfg.physics.nv.B_T);
        for (std::size_t k = 0; k < 4; ++k) meta.set("w" + std::to_string(k), w[k]);
        const std::string path = out_dir + "/odmr_p" + format_double(p) + ".csv";
        write_spectrum_csv(path, spec, meta);
        std::cout << path << "\n";
    }
    return 0;
}

int cmd_dnp_sweep(const std::string& data_dir, const std::string& sample_label, double p_override,
                  const std::string& branch_name, bool secular, double nu_n_MHz, double scale,
                  std::size_t grid_points, bool verify, const std::string& out) {
    ToolkitConfig cfg = load_config(data_dir);
    const Branch branch = branch_from_string(branch_name);

    double p = p_override;
    double B_T = cfg.physics.nv.B_T;
    std::string label = "custom";
    if (p < 0.0) {
        const SampleRecord& rec = cfg.find_sample(sample_label);
        p = rec.sample.p;
        B_T = rec.sample.B_T;
        label = rec.sample.label;
    }
    cfg.physics.nv.B_T = B_T;
    if (nu_n_MHz < 0.0) nu_n_MHz = cfg.physics.nv.gamma_n_MHz_per_T * B_T;

    const GridSpec grid = auto_grid(cfg.physics, branch, grid_points, 0.25, secular);
    const DnpInputs in = make_dnp(cfg.physics, p, branch, secular, nu_n_MHz, scale, grid);

    if (verify) {
        const auto& s = in.dnp.signal;
        double smax = 0.0, asym = 0.0;
        for (double v : s) smax = std::max(smax, std::abs(v));
        for (std::size_t i = 0; i < s.size(); ++i)
            asym = std::max(asym, std::abs(s[i] + s[s.size() - 1 - i]));
        const double ratio = smax > 0.0 ? asym / smax : 0.0;
        std::cout << "antisymmetry: max |S(f0+d) + S(f0-d)| = " << format_double(asym)
                  << " (ratio " << format_double(ratio) << " of max |S|)\n";
        if (!(ratio <= 1e-9)) {
            std::cerr << "verification failed: spectrum is not antisymmetric at 1e-9\n";
            return 3;
        }
    }

    CsvMetadata meta;
    meta.set("kind", "dnp");
    meta.set("sample", label);
    meta.set("p", p);
    meta.set("B_T", B_T);
    meta.set("nu_n_MHz", nu_n_MHz);
    meta.set("scale", scale);
    meta.set("branch", branch_name);
    meta.set("secular", secular ? "true" : "false");
    const std::string path = out.empty() ? "dnp_" + label + ".csv" : out;
    write_dnp_csv(path, in.dnp, meta);
    std::cout << path << "\n";
    return 0;
}

int cmd_fit(const std::string& in_path, std::string kind, bool free_baseline, double theta_deg,
            double tau_s, double confidence, const std::string& out) {
    if (kind == "auto") {
        kind = probe_csv_kind(in_path);
        if (kind == "odmr" || kind == "dnp")
            throw std::invalid_argument("no fitter for spectra of kind '" + kind + "'");
        if (kind.empty())
            throw std::invalid_argument(
                "cannot infer fit kind from " + in_path + "; pass --kind");
    }

    nlohmann::json report;
    report["input"] = in_path;
    report["kind"] = kind;

    if (kind == "buildup") {
        const BuildupCurve curve = read_buildup_csv(in_path);
        BuildupFitOptions opts;
        opts.free_baseline = free_baseline;
        opts.confidence = confidence;
        const BuildupFit fit = fit_buildup(curve, opts);
        report["T_DNP_s"] = param_json(fit.T_DNP_s);
        report["P_max"] = param_json(fit.P_max);
        report["baseline"] = param_json(fit.baseline);
        report["residual_norm"] = fit.residual_norm;
        report["iterations"] = fit.iterations;
    } else if (kind == "biexp" || kind == "echo_envelope") {
        std::vector<double> times, values;
        read_series_csv(in_path, times, values);
        BiexpFitOptions opts;
        opts.confidence = confidence;
        const BiexpFit fit = fit_biexponential(times, values, opts);
        report["kind"] = "biexp";
        report["A1"] = param_json(fit.A1);
        report["T2_1_s"] = param_json(fit.T2_1_s);
        report["A2"] = param_json(fit.A2);
        report["T2_2_s"] = param_json(fit.T2_2_s);
        report["degenerate"] = fit.degenerate;
        if (!fit.degeneracy_note.empty()) report["note"] = fit.degeneracy_note;
        report["residual_norm"] = fit.residual_norm;
    } else if (kind == "t1" || kind == "small_flip") {
        std::vector<double> times, values;
        read_series_csv(in_path, times, values);
        if (!(theta_deg > 0.0))
            throw std::invalid_argument("t1 fit needs --theta (degrees)");
        double tau = tau_s;
        if (!(tau > 0.0)) {
            if (times.size() < 2)
                throw std::invalid_argument("t1 fit needs --tau or at least two samples");
            tau = times[1] - times[0];
        }
        T1FitOptions opts;
        opts.confidence = confidence;
        const T1Fit fit = fit_t1_small_flip(values, theta_deg * kDegToRad, tau, opts);
        report["kind"] = "t1";
        report["theta_deg"] = theta_deg;
        report["tau_s"] = tau;
        report["T1_s"] = param_json(fit.T1_s);
        report["T1_observed_s"] = param_json(fit.T1_observed_s);
        report["amplitude"] = param_json(fit.amplitude);
        report["residual_norm"] = fit.residual_norm;
    } else {
        throw std::invalid_argument("unknown fit kind '" + kind +
                                    "' (expected buildup, biexp, or t1)");
    }
    emit_json(out, report);
    return 0;
}

int cmd_bootstrap(const std::string& dir, std::size_t n_resamples, std::uint64_t seed,
                  const std::string& mode_name, double confidence, double margin_sigmas,
                  const std::string& out) {
    const std::string manifest_path = dir + "/manifest.json";
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(manifest_path + ": " + e.what());
    }

    const DatasetStore store = load_dataset_store(dir);
    const std::string model_name = manifest.value("model", std::string());
    if (model_name.empty())
        throw std::invalid_argument(manifest_path + ": needs a 'model' FID entry");
    const FidRecord model = read_fid_csv(dir + "/" + model_name);
    const double hp_amplitude = manifest.value("hp_amplitude", 1.0);
    const double correction = manifest.value("correction_factor", 1.0);

    BootstrapOptions opts;
    opts.n_resamples = n_resamples;
    opts.seed = derive_seed(seed, "bootstrap");
    opts.confidence = confidence;
    const BootstrapResult thermal = bootstrap_amplitude(
        store, [&](const FidRecord& f) { return fit_scaling_factor(f, model).value; }, opts);

    EnhancementOptions eopts;
    if (mode_name == "auto")
        eopts.mode = EnhancementMode::Auto;
    else if (mode_name == "asymmetric")
        eopts.mode = EnhancementMode::ForceAsymmetric;
    else
        throw std::invalid_argument("mode must be 'auto' or 'asymmetric'");
    eopts.margin_sigmas = margin_sigmas;
    const EnhancementResult enh = enhancement_with_ci(hp_amplitude, thermal, correction, eopts);

    nlohmann::json report;
    report["dataset"] = dir;
    report["n_blocks"] = store.blocks.size();
    report["n_resamples"] = thermal.n_resamples;
    report["seed"] = seed;
    report["confidence"] = confidence;
    report["hp_amplitude"] = hp_amplitude;
    report["correction_factor"] = correction;
    report["thermal"] = {{"mean", thermal.mean},
                         {"sigma", thermal.sigma},
                         {"ci_low", thermal.ci_low},
                         {"ci_high", thermal.ci_high}};
    report["enhancement"] = {{"epsilon", enh.epsilon},
                             {"lower", enh.lower},
                             {"upper", enh.upper},
                             {"symmetric", enh.symmetric}};
    nlohmann::json warnings = nlohmann::json::array();
    if (thermal.sigma == 0.0) {
        warnings.push_back("degenerate confidence interval: bootstrap sigma is zero");
        std::cerr << "warning: degenerate confidence interval (bootstrap sigma is zero)\n";
    }
    report["warnings"] = warnings;
    emit_json(out, report);
    return 0;
}

struct SimulatePhysicsFlags {
    std::string sample = "D1";
    double t_dnp_s = -1.0;
    double t1n_s = -1.0;
    double p_asymptote = 1.0;
    double noise_sigma = 0.0;
    double t2star_s = 1e-4;
    double offset_Hz = 0.0;
    double nu_n_MHz = -1.0;
    bool secular = false;
    std::string branch = "plus";
};

PlanPhysics build_plan_physics(const ToolkitConfig& cfg, const SimulatePhysicsFlags& flags,
                               std::string* label_out) {
    const SampleRecord& rec = cfg.find_sample(flags.sample);
    if (label_out) *label_out = rec.sample.label;
    PhysicsConfig physics = cfg.physics;
    physics.nv.B_T = rec.sample.B_T;
    const double nu_n = flags.nu_n_MHz >= 0.0 ? flags.nu_n_MHz
                                              : physics.nv.gamma_n_MHz_per_T * rec.sample.B_T;
    const Branch branch = branch_from_string(flags.branch);
    const GridSpec grid = auto_grid(physics, branch, 2001, 0.25, flags.secular);
    const DnpInputs in =
        make_dnp(physics, rec.sample.p, branch, flags.secular, nu_n, 1.0, grid);

    PlanPhysics out;
    out.spectrum = in.dnp;
    out.P_asymptote = flags.p_asymptote;
    out.T_DNP_s = flags.t_dnp_s > 0.0 ? flags.t_dnp_s : rec.sample.T_DNP_s;
    out.T1n_s = flags.t1n_s > 0.0 ? flags.t1n_s : rec.sample.T1n_s;
    out.fid.T2star_s = flags.t2star_s;
    out.fid.freq_offset_Hz = flags.offset_Hz;
    out.noise_sigma = flags.noise_sigma;
    return out;
}

int cmd_simulate(const std::string& data_dir, const std::string& plan_path,
                 const SimulatePhysicsFlags& flags, double spacing_ms, bool sweep,
                 double sweep_min, double sweep_max, std::size_t sweep_points, std::uint64_t seed,
                 const std::string& out_dir) {
    const ToolkitConfig cfg = load_config(data_dir);
    std::string label;
    const PlanPhysics physics = build_plan_physics(cfg, flags, &label);
    const PlanAst ast = parse_plan(read_text_file(plan_path));
    CompileDefaults defaults;
    defaults.saturate_spacing_s = spacing_ms * 1e-3;

    std::filesystem::create_directories(out_dir);
    nlohmann::json manifest;
    manifest["plan"] = plan_path;
    manifest["sample"] = label;
    manifest["seed"] = seed;

    if (sweep) {
        std::vector<double> freqs;
        if (sweep_points < 2) sweep_points = 81;
        if (!(sweep_max > sweep_min)) {
            const GridSpec g = auto_grid(cfg.physics, branch_from_string(flags.branch), 81);
            sweep_min = g.f_min_GHz;
            sweep_max = g.f_max_GHz;
        }
        freqs.resize(sweep_points);
        for (std::size_t i = 0; i < sweep_points; ++i)
            freqs[i] = sweep_min + (sweep_max - sweep_min) * double(i) / double(sweep_points - 1);

        const SweepResult res = run_fmw_sweep(ast, freqs, physics, defaults, seed);
        CsvMetadata meta;
        meta.set("kind", "dnp");
        meta.set("sample", label);
        meta.set("seed", std::to_string(seed));
        meta.set("model_index", double(res.model_index));
        const std::string path = out_dir + "/sweep.csv";
        write_dnp_csv(path, res.curve, meta);
        manifest["sweep"] = "sweep.csv";
        manifest["model_index"] = res.model_index;
        emit_json(out_dir + "/manifest.json", manifest);
        std::cout << path << "\n";
        return 0;
    }

    const Timeline timeline = compile_timeline(ast, defaults);
    const ExecutionResult res = execute_plan(timeline, physics, seed);
    nlohmann::json acq = nlohmann::json::array();
    for (std::size_t i = 0; i < res.acquisitions.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "fid_%03zu.csv", i);
        CsvMetadata meta;
        meta.set("kind", "fid");
        meta.set("sample", label);
        meta.set("acquisition", double(i));
        write_fid_csv(out_dir + "/" + name, res.acquisitions[i], meta);
        acq.push_back(name);
    }
    manifest["acquisitions"] = acq;
    nlohmann::json warnings = nlohmann::json::array();
    for (const auto& w : res.warnings) {
        warnings.push_back(w);
        std::cerr << "warning: " << w << "\n";
    }
    if (res.acquisitions.empty()) {
        warnings.push_back("plan contains no acquire statement; nothing recorded");
        std::cerr << "warning: plan contains no acquire statement; nothing recorded\n";
    }
    manifest["warnings"] = warnings;
    manifest["total_duration_s"] = timeline.total_duration_s;
    manifest["final_polarization"] = res.final_state.polarization;
    emit_json(out_dir + "/manifest.json", manifest);
    std::cout << out_dir << "/manifest.json\n";
    return 0;
}

int cmd_synth_buildup(const std::string& data_dir, const std::string& sample_label, double t_dnp,
                      double p_max, double t_max, std::size_t n_points, double sigma,
                      std::uint64_t seed, const std::string& out) {
    if (t_dnp <= 0.0) {
        const ToolkitConfig cfg = load_config(data_dir);
        t_dnp = cfg.find_sample(sample_label).sample.T_DNP_s;
    }
    if (t_max <= 0.0) t_max = 5.0 * t_dnp;
    std::vector<double> times(n_points);
    for (std::size_t i = 0; i < n_points; ++i)
        times[i] = t_max * double(i) / double(n_points - 1);
    const BuildupCurve curve =
        simulate_buildup(t_dnp, p_max, times, sigma, derive_seed(seed, "buildup"));
    CsvMetadata meta;
    meta.set("kind", "buildup");
    meta.set("true_T_DNP_s", t_dnp);
    meta.set("true_P_max", p_max);
    meta.set("sigma", sigma);
    meta.set("seed", std::to_string(seed));
    write_buildup_csv(out, curve, meta);
    std::cout << out << "\n";
    return 0;
}

int cmd_synth_echo(const std::string& data_dir, const std::string& sample_label, double a1,
                   double t2_1_ms, double a2, double t2_2_ms, double tau_ms, std::size_t n_echoes,
                   double sigma, std::uint64_t seed, const std::string& out) {
    if (t2_1_ms <= 0.0 || t2_2_ms <= 0.0) {
        const ToolkitConfig cfg = load_config(data_dir);
        const SampleRecord& rec = cfg.find_sample(sample_label);
        t2_1_ms = rec.T2_short_ms;
        t2_2_ms = rec.T2_long_ms;
    }
    EchoTrainParams params;
    params.envelope = BiexpParams{a1, t2_1_ms * 1e-3, a2, t2_2_ms * 1e-3};
    params.tau_s = tau_ms * 1e-3;
    params.n_echoes = n_echoes;
    const EchoTrain train = synthesize_echo_train(params, sigma, derive_seed(seed, "echo"));
    const EchoEnvelope env = echo_envelope(train);
    CsvMetadata meta;
    meta.set("kind", "echo_envelope");
    meta.set("true_A1", a1);
    meta.set("true_T2_1_s", t2_1_ms * 1e-3);
    meta.set("true_A2", a2);
    meta.set("true_T2_2_s", t2_2_ms * 1e-3);
    meta.set("tau_s", params.tau_s);
    meta.set("sigma", sigma);
    meta.set("seed", std::to_string(seed));
    write_series_csv(out, env.times_s, env.values, meta);
    std::cout << out << "\n";
    return 0;
}

int cmd_synth_thermal(const std::string& dir, std::size_t n_blocks, double thermal_amplitude,
                      double sigma, double hp_amplitude, double correction, std::size_t n_points,
                      std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    FidParams model_params;
    model_params.amplitude = 1.0;
    const FidRecord model = synthesize_fid(model_params, n_points, 0.5e-6);
    CsvMetadata mmeta;
    mmeta.set("kind", "fid");
    write_fid_csv(dir + "/model.csv", model, mmeta);

    nlohmann::json blocks = nlohmann::json::array();
    FidParams block_params;
    block_params.amplitude = thermal_amplitude;
    for (std::size_t k = 0; k < n_blocks; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "block_%03zu.csv", k);
        const FidRecord fid = synthesize_fid(block_params, n_points, 0.5e-6, sigma,
                                             derive_seed(seed, "block/" + std::to_string(k)));
        CsvMetadata meta;
        meta.set("kind", "fid");
        meta.set("block", double(k));
        write_fid_csv(dir + "/" + std::string(name), fid, meta);
        blocks.push_back(name);
    }
    nlohmann::json manifest;
    manifest["blocks"] = blocks;
    manifest["model"] = "model.csv";
    manifest["hp_amplitude"] = hp_amplitude;
    manifest["correction_factor"] = correction;
    manifest["true_thermal_amplitude"] = thermal_amplitude;
    manifest["sigma"] = sigma;
    manifest["seed"] = seed;
    emit_json(dir + "/manifest.json", manifest);
    std::cout << dir << "/manifest.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NV-driven 13C hyperpolarization: spectra, buildup, fits, and plan simulation"};
    app.require_subcommand(1);

    std::string data_dir = default_data_dir();
    app.add_option("--data-dir", data_dir, "directory holding constants.json and samples.json");

    int rc = 0;

    // odmr
    {
        auto* c = app.add_subcommand("odmr", "synthesize composite ODMR spectra");
        auto ps = std::make_shared<std::vector<double>>();
        auto branch = std::make_shared<std::string>("plus");
        auto fwhm = std::make_shared<double>(0.0);
        auto profile = std::make_shared<std::string>();
        auto gmin = std::make_shared<double>(0.0);
        auto gmax = std::make_shared<double>(0.0);
        auto gpts = std::make_shared<std::size_t>(0);
        auto out_dir = std::make_shared<std::string>(".");
        c->add_option("--p", *ps, "13C enrichment(s), repeatable");
        c->add_option("--branch", *branch, "plus | minus");
        c->add_option("--fwhm-MHz", *fwhm, "override lineshape width");
        c->add_option("--profile", *profile, "lorentzian | gaussian");
        c->add_option("--grid-min", *gmin, "grid start, GHz");
        c->add_option("--grid-max", *gmax, "grid end, GHz");
        c->add_option("--grid-points", *gpts, "grid point count");
        c->add_option("--out-dir", *out_dir, "output directory");
        c->callback([=, &rc, &data_dir] {
            rc = cmd_odmr(data_dir, *ps, *branch, *fwhm, *profile, *gmin, *gmax, *gpts, *out_dir);
        });
    }

    // dnp-sweep
    {
        auto* c = app.add_subcommand("dnp-sweep", "model DNP signal vs microwave frequency");
        auto sample = std::make_shared<std::string>("D1");
        auto p = std::make_shared<double>(-1.0);
        auto branch = std::make_shared<std::string>("plus");
        auto secular = std::make_shared<bool>(false);
        auto nu_n = std::make_shared<double>(-1.0);
        auto scale = std::make_shared<double>(1.0);
        auto gpts = std::make_shared<std::size_t>(4001);
        auto verify = std::make_shared<bool>(false);
        auto out = std::make_shared<std::string>();
        c->add_option("--sample", *sample, "sample label from the registry");
        c->add_option("--p", *p, "override enrichment instead of using a sample");
        c->add_option("--branch", *branch, "plus | minus");
        c->add_flag("--secular", *secular, "use pure Sz Iz site tensors");
        c->add_option("--nu-n", *nu_n, "nuclear Larmor frequency, MHz (default from B)");
        c->add_option("--scale", *scale, "overall scale factor");
        c->add_option("--grid-points", *gpts, "grid point count");
        c->add_flag("--verify", *verify, "check the spectrum is antisymmetric about the center");
        c->add_option("--out", *out, "output CSV path");
        c->callback([=, &rc, &data_dir] {
            rc = cmd_dnp_sweep(data_dir, *sample, *p, *branch, *secular, *nu_n, *scale, *gpts,
                               *verify, *out);
        });
    }

    // fit
    {
        auto* c = app.add_subcommand("fit", "fit buildup, echo-envelope, or small-flip data");
        auto in = std::make_shared<std::string>();
        auto kind = std::make_shared<std::string>("auto");
        auto free_baseline = std::make_shared<bool>(false);
        auto theta = std::make_shared<double>(0.0);
        auto tau = std::make_shared<double>(0.0);
        auto conf = std::make_shared<double>(0.95);
        auto out = std::make_shared<std::string>();
        c->add_option("--in", *in, "input CSV")->required();
        c->add_option("--kind", *kind, "auto | buildup | biexp | t1");
        c->add_flag("--free-baseline", *free_baseline, "fit a free baseline (buildup only)");
        c->add_option("--theta", *theta, "flip angle in degrees (t1 only)");
        c->add_option("--tau", *tau, "pulse spacing in seconds (t1 only)");
        c->add_option("--confidence", *conf, "confidence level for intervals");
        c->add_option("--out", *out, "report path ('-' for stdout)");
        c->callback([=, &rc] {
            rc = cmd_fit(*in, *kind, *free_baseline, *theta, *tau, *conf, *out);
        });
    }

    // bootstrap
    {
        auto* c = app.add_subcommand("bootstrap", "bootstrap thermal amplitude and enhancement");
        auto dir = std::make_shared<std::string>();
        auto n = std::make_shared<std::size_t>(10000);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto mode = std::make_shared<std::string>("auto");
        auto conf = std::make_shared<double>(0.95);
        auto margin = std::make_shared<double>(4.0);
        auto out = std::make_shared<std::string>();
        c->add_option("--dir", *dir, "dataset directory with manifest.json")->required();
        c->add_option("--resamples", *n, "number of bootstrap resamples");
        c->add_option("--seed", *seed, "master seed")->required();
        c->add_option("--mode", *mode, "auto | asymmetric");
        c->add_option("--confidence", *conf, "confidence level");
        c->add_option("--margin-sigmas", *margin, "sigma margin required for symmetric CI");
        c->add_option("--out", *out, "report path ('-' for stdout)");
        c->callback([=, &rc] {
            rc = cmd_bootstrap(*dir, *n, *seed, *mode, *conf, *margin, *out);
        });
    }

    // simulate
    {
        auto* c = app.add_subcommand("simulate", "compile and run an experiment plan");
        auto plan = std::make_shared<std::string>();
        auto flags = std::make_shared<SimulatePhysicsFlags>();
        auto spacing_ms = std::make_shared<double>(10.0);
        auto sweep = std::make_shared<bool>(false);
        auto smin = std::make_shared<double>(0.0);
        auto smax = std::make_shared<double>(0.0);
        auto spts = std::make_shared<std::size_t>(0);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto out_dir = std::make_shared<std::string>("sim_out");
        c->add_option("--plan", *plan, "plan file")->required();
        c->add_option("--sample", flags->sample, "sample label");
        c->add_option("--t-dnp", flags->t_dnp_s, "override buildup time, s");
        c->add_option("--t1n", flags->t1n_s, "override nuclear T1, s");
        c->add_option("--p-asymptote", flags->p_asymptote, "polarization at the model peak");
        c->add_option("--noise-sigma", flags->noise_sigma, "acquisition noise sigma");
        c->add_option("--t2star", flags->t2star_s, "FID decay time, s");
        c->add_option("--offset-Hz", flags->offset_Hz, "FID frequency offset");
        c->add_option("--nu-n", flags->nu_n_MHz, "nuclear Larmor frequency, MHz");
        c->add_flag("--secular", flags->secular, "use pure Sz Iz site tensors");
        c->add_option("--branch", flags->branch, "plus | minus");
        c->add_option("--spacing-ms", *spacing_ms, "saturation comb spacing");
        c->add_flag("--sweep", *sweep, "run once per microwave frequency");
        c->add_option("--sweep-min", *smin, "sweep start, GHz");
        c->add_option("--sweep-max", *smax, "sweep end, GHz");
        c->add_option("--sweep-points", *spts, "sweep point count");
        c->add_option("--seed", *seed, "master seed")->required();
        c->add_option("--out-dir", *out_dir, "output directory");
        c->callback([=, &rc, &data_dir] {
            rc = cmd_simulate(data_dir, *plan, *flags, *spacing_ms, *sweep, *smin, *smax, *spts,
                              *seed, *out_dir);
        });
    }

    // synth-buildup
    {
        auto* c = app.add_subcommand("synth-buildup", "write a synthetic buildup CSV");
        auto sample = std::make_shared<std::string>("D1");
        auto t_dnp = std::make_shared<double>(-1.0);
        auto p_max = std::make_shared<double>(1.0);
        auto t_max = std::make_shared<double>(-1.0);
        auto n = std::make_shared<std::size_t>(60);
        auto sigma = std::make_shared<double>(0.01);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto out = std::make_shared<std::string>("buildup.csv");
        c->add_option("--sample", *sample, "sample label for the true T_DNP");
        c->add_option("--t-dnp", *t_dnp, "true buildup time, s");
        c->add_option("--p-max", *p_max, "asymptotic polarization");
        c->add_option("--t-max", *t_max, "last sample time, s (default 5 T_DNP)");
        c->add_option("--points", *n, "number of samples");
        c->add_option("--sigma", *sigma, "additive noise sigma");
        c->add_option("--seed", *seed, "master seed")->required();
        c->add_option("--out", *out, "output CSV path");
        c->callback([=, &rc, &data_dir] {
            rc = cmd_synth_buildup(data_dir, *sample, *t_dnp, *p_max, *t_max, *n, *sigma, *seed,
                                   *out);
        });
    }

    // synth-echo
    {
        auto* c = app.add_subcommand("synth-echo", "write a synthetic echo-envelope CSV");
        auto sample = std::make_shared<std::string>("D1");
        auto a1 = std::make_shared<double>(0.5);
        auto t2_1 = std::make_shared<double>(-1.0);
        auto a2 = std::make_shared<double>(0.5);
        auto t2_2 = std::make_shared<double>(-1.0);
        auto tau_ms = std::make_shared<double>(1.0);
        auto n = std::make_shared<std::size_t>(600);
        auto sigma = std::make_shared<double>(0.0);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto out = std::make_shared<std::string>("echo_envelope.csv");
        c->add_option("--sample", *sample, "sample label for the true T2 pair");
        c->add_option("--a1", *a1, "short-component amplitude");
        c->add_option("--t2-1-ms", *t2_1, "short T2, ms");
        c->add_option("--a2", *a2, "long-component amplitude");
        c->add_option("--t2-2-ms", *t2_2, "long T2, ms");
        c->add_option("--tau-ms", *tau_ms, "echo spacing, ms");
        c->add_option("--echoes", *n, "number of echoes");
        c->add_option("--sigma", *sigma, "per-sample noise sigma");
        c->add_option("--seed", *seed, "master seed")->required();
        c->add_option("--out", *out, "output CSV path");
        c->callback([=, &rc, &data_dir] {
            rc = cmd_synth_echo(data_dir, *sample, *a1, *t2_1, *a2, *t2_2, *tau_ms, *n, *sigma,
                                *seed, *out);
        });
    }

    // synth-thermal
    {
        auto* c = app.add_subcommand("synth-thermal", "write a thermal dataset for bootstrap");
        auto dir = std::make_shared<std::string>("thermal_data");
        auto blocks = std::make_shared<std::size_t>(25);
        auto amp = std::make_shared<double>(0.002);
        auto sigma = std::make_shared<double>(0.01);
        auto hp = std::make_shared<double>(1.0);
        auto corr = std::make_shared<double>(1.758);
        auto n_points = std::make_shared<std::size_t>(64);
        auto seed = std::make_shared<std::uint64_t>(0);
        c->add_option("--dir", *dir, "output dataset directory");
        c->add_option("--blocks", *blocks, "number of stored block averages");
        c->add_option("--amplitude", *amp, "true thermal amplitude (model units)");
        c->add_option("--sigma", *sigma, "per-sample noise sigma");
        c->add_option("--hp-amplitude", *hp, "hyperpolarized amplitude (model units)");
        c->add_option("--correction", *corr, "recovery correction factor");
        c->add_option("--points", *n_points, "samples per FID");
        c->add_option("--seed", *seed, "master seed")->required();
        c->callback([=, &rc] {
            rc = cmd_synth_thermal(*dir, *blocks, *amp, *sigma, *hp, *corr, *n_points, *seed);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const FitError& e) {
        std::cerr << "fit failed: " << e.what() << " (residual norm "
                  << format_double(e.residual_norm) << " after " << e.iterations
                  << " iterations)\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "plan error: " << e.what() << "\n";
        return 2;
    } catch (const CompileError& e) {
        std::cerr << "compile error: " << e.what() << "\n";
        return 2;
    } catch (const CsvError& e) {
        std::cerr << "csv error";
        if (e.row > 0) std::cerr << " (row " << e.row << ")";
        std::cerr << ": " << e.what() << "\n";
        return 2;
    } catch (const AmbiguousBranchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
