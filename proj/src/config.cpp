#include "nvdnp/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace nvdnp {
namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: " + path + ": " + e.what());
    }
}

double require_number(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number())
        throw std::invalid_argument("config: " + where + " needs numeric field '" + key + "'");
    return j[key].get<double>();
}

}  // namespace

std::array<HyperfineTensor, 3> PhysicsConfig::site_tensors() const {
    constexpr double kPi = 3.14159265358979323846;
    const double ct = -1.0 / 3.0;
    const double st = std::sqrt(1.0 - ct * ct);
    std::array<HyperfineTensor, 3> out;
    for (int j = 0; j < 3; ++j) {
        const double phi = 2.0 * kPi * double(j) / 3.0;
        const Eigen::Vector3d axis(st * std::cos(phi), st * std::sin(phi), ct);
        out[static_cast<std::size_t>(j)] = HyperfineTensor::axial(A_parallel_MHz, A_perp_MHz, axis);
    }
    return out;
}

void PhysicsConfig::validate() const {
    nv.validate();
    lineshape.validate();
    if (!std::isfinite(A_parallel_MHz) || !std::isfinite(A_perp_MHz))
        throw std::invalid_argument("PhysicsConfig: hyperfine values must be finite");
    if (!(mixing_threshold > 0.0 && mixing_threshold <= 1.0))
        throw std::invalid_argument("PhysicsConfig: mixing threshold must lie in (0, 1]");
}

void SampleRecord::validate() const {
    sample.validate();
    if (!(mass_mg > 0.0)) throw std::invalid_argument("SampleRecord: mass must be positive");
    if (!(enhancement_low > 0.0) || !(enhancement_high >= enhancement_low))
        throw std::invalid_argument("SampleRecord: enhancement range is inverted");
    if (!(correction_factor > 1.0))
        throw std::invalid_argument("SampleRecord: correction factor must exceed 1");
    if (!(T2_short_ms > 0.0) || !(T2_long_ms >= T2_short_ms))
        throw std::invalid_argument("SampleRecord: T2 pair must be positive and ordered");
    if (t1_flip_deg < 0.0 || t1_flip_deg >= 90.0)
        throw std::invalid_argument("SampleRecord: flip angle must lie in [0, 90)");
    if (!(t1_tau_s > 0.0)) throw std::invalid_argument("SampleRecord: tau must be positive");
}

const SampleRecord& ToolkitConfig::find_sample(const std::string& label) const {
    for (const auto& s : samples)
        if (s.sample.label == label) return s;
    std::string known;
    for (const auto& s : samples) {
        if (!known.empty()) known += ", ";
        known += s.sample.label;
    }
    throw std::invalid_argument("unknown sample '" + label + "' (have: " + known + ")");
}

ToolkitConfig load_config(const std::string& dir) {
    ToolkitConfig cfg;

    const nlohmann::json jc = load_json(dir + "/constants.json");
    const auto& jn = jc.contains("nv") ? jc["nv"] : nlohmann::json::object();
    cfg.physics.nv.D_GHz = require_number(jn, "zero_field_splitting_GHz", "nv");
    cfg.physics.nv.gamma_e_GHz_per_T = require_number(jn, "gamma_e_GHz_per_T", "nv");
    cfg.physics.nv.gamma_n_MHz_per_T = require_number(jn, "gamma_n_MHz_per_T", "nv");
    cfg.physics.nv.B_T = require_number(jn, "B_T", "nv");
    cfg.physics.nv.theta_rad = jn.value("theta_rad", 0.0);

    const auto& jh = jc.contains("hyperfine") ? jc["hyperfine"] : nlohmann::json::object();
    cfg.physics.A_parallel_MHz = require_number(jh, "A_parallel_MHz", "hyperfine");
    cfg.physics.A_perp_MHz = require_number(jh, "A_perp_MHz", "hyperfine");

    const auto& jl = jc.contains("lineshape") ? jc["lineshape"] : nlohmann::json::object();
    const std::string profile = jl.value("profile", std::string("lorentzian"));
    if (profile == "lorentzian")
        cfg.physics.lineshape.profile = LineProfile::Lorentzian;
    else if (profile == "gaussian")
        cfg.physics.lineshape.profile = LineProfile::Gaussian;
    else
        throw std::invalid_argument("config: unknown lineshape profile '" + profile + "'");
    cfg.physics.lineshape.fwhm_MHz = require_number(jl, "fwhm_MHz", "lineshape");
    cfg.physics.mixing_threshold = jc.value("mixing_threshold", 0.5);
    cfg.physics.validate();

    const nlohmann::json js = load_json(dir + "/samples.json");
    if (!js.contains("samples") || !js["samples"].is_array())
        throw std::invalid_argument("config: samples.json needs a 'samples' array");
    for (const auto& j : js["samples"]) {
        SampleRecord r;
        if (!j.contains("label") || !j["label"].is_string())
            throw std::invalid_argument("config: sample entry needs a string 'label'");
        r.sample.label = j["label"].get<std::string>();
        const std::string where = "sample " + r.sample.label;
        r.sample.p = require_number(j, "enrichment", where);
        r.sample.T_DNP_s = require_number(j, "T_DNP_s", where);
        r.sample.T1n_s = require_number(j, "T1n_s", where);
        r.sample.enhancement = require_number(j, "enhancement", where);
        r.sample.B_T = j.value("B_T", 0.472);
        r.mass_mg = require_number(j, "mass_mg", where);
        r.enhancement_low = require_number(j, "enhancement_low", where);
        r.enhancement_high = require_number(j, "enhancement_high", where);
        r.p_enh_percent = require_number(j, "p_enh_percent", where);
        r.p_enh_err_percent = j.value("p_enh_err_percent", 0.0);
        r.correction_factor = require_number(j, "correction_factor", where);
        r.T2_short_ms = require_number(j, "T2_short_ms", where);
        r.T2_long_ms = require_number(j, "T2_long_ms", where);
        r.t1_flip_deg = j.value("t1_flip_deg", 0.0);
        r.t1_tau_s = j.value("t1_tau_s", 1.0);
        r.validate();
        cfg.samples.push_back(std::move(r));
    }
    if (cfg.samples.empty()) throw std::invalid_argument("config: samples.json lists no samples");
    return cfg;
}

std::string default_data_dir() {
    if (const char* env = std::getenv("NVDNP_DATA_DIR"); env && *env) return env;
#ifdef NVDNP_DATA_DIR
    return NVDNP_DATA_DIR;
#else
    return "data";
#endif
}

}  // namespace nvdnp
