#pragma once

#include <array>
#include <string>
#include <vector>

#include "nvdnp/dnp.hpp"
#include "nvdnp/spectra.hpp"
#include "nvdnp/spin.hpp"

namespace nvdnp {

// Shared physics settings for the CLI tools. The hyperfine values describe
// one axially symmetric first-shell tensor; the three occupied-site tensors
// differ only by the bond direction.
struct PhysicsConfig {
    NvParameters nv;
    double A_parallel_MHz = 199.7;
    double A_perp_MHz = 120.3;
    LineshapeParams lineshape;
    double mixing_threshold = 0.5;

    // Tensors for the three first-shell carbon sites. In the frame whose z
    // axis is the NV bond, the neighbor bonds sit at polar angle
    // arccos(-1/3) with azimuths 0, 120 and 240 degrees.
    std::array<HyperfineTensor, 3> site_tensors() const;

    void validate() const;
};

// One diamond sample as characterized on the bench: buildup and relaxation
// times, the reported enhancement with its confidence range, and the small
// bookkeeping numbers needed to reproduce the derived quantities.
struct SampleRecord {
    SampleParams sample;
    double mass_mg = 0.0;
    double enhancement_low = 0.0;    // 95% range on the enhancement
    double enhancement_high = 0.0;
    double p_enh_percent = 0.0;      // reported enhanced polarization
    double p_enh_err_percent = 0.0;  // 0 when the range is asymmetric
    double correction_factor = 1.0;  // incomplete-recovery correction
    double T2_short_ms = 0.0;
    double T2_long_ms = 0.0;
    double t1_flip_deg = 0.0;        // 0 when T1 was measured point by point
    double t1_tau_s = 1.0;
    void validate() const;
};

struct ToolkitConfig {
    PhysicsConfig physics;
    std::vector<SampleRecord> samples;

    const SampleRecord& find_sample(const std::string& label) const;
};

// Reads constants.json and samples.json from `dir`. Throws
// std::invalid_argument on missing files or malformed content.
ToolkitConfig load_config(const std::string& dir);

// The data directory baked in at build time, overridable at runtime through
// the NVDNP_DATA_DIR environment variable.
std::string default_data_dir();

}  // namespace nvdnp
