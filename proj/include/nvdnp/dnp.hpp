#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "nvdnp/fit.hpp"
#include "nvdnp/spectra.hpp"

namespace nvdnp {

// Signed DNP response versus microwave frequency.
struct DnpSpectrum {
    std::vector<double> mw_frequencies_GHz;  // ascending
    std::vector<double> signal;              // normalized NMR signal units
    void validate() const;
};

struct BuildupCurve {
    std::vector<double> times_s;        // ascending, >= 0
    std::vector<double> polarization;   // fraction
    std::vector<double> sigma;          // optional per-point uncertainty (empty or same length)
    void validate() const;
};

enum class PolarizationConvention { TanhHalf, HighTemperatureNoHalf };

// Static description of one sample (diamonds D1..D5 in the shipped registry).
struct SampleParams {
    std::string label;
    double p = 0.011;       // 13C enrichment
    double T_DNP_s = 1.0;   // polarization buildup time
    double T1n_s = 1.0;     // 13C spin-lattice relaxation time
    double enhancement = 1.0;
    double B_T = 0.472;
    void validate() const;
};

// Solid-effect difference kernel S(f) = scale * [L(f - nu_n) - L(f + nu_n)]
// evaluated on the input grid, with L linearly interpolated and taken as 0
// outside the grid. The ODMR support must stay nu_n clear of both grid ends
// (edge intensity below 1e-3 of the maximum), otherwise the shifted lobes
// would be truncated.
DnpSpectrum dnp_spectrum(const SpectrumGrid& odmr, double nu_n_MHz, double scale = 1.0);

// Equilibrium 13C polarization. TanhHalf evaluates tanh(h nu / 2kT); the
// high-temperature convention drops both the tanh and the 1/2.
double thermal_polarization(double B_T, double temperature_K, double gamma_n_MHz_per_T,
                            PolarizationConvention convention);

double enhanced_polarization(double enhancement, double thermal);

// P(t) = P_max (1 - exp(-t/T_DNP)) plus optional i.i.d. Gaussian noise.
BuildupCurve simulate_buildup(double T_DNP_s, double P_max, const std::vector<double>& times_s,
                              double noise_sigma = 0.0, std::uint64_t seed = 0);

struct BuildupFitOptions {
    bool free_baseline = false;  // fit y0 + P_max (1 - exp(-t/T)) when true
    double confidence = 0.95;
    LmOptions lm;
};

struct BuildupFit {
    ParamEstimate T_DNP_s;
    ParamEstimate P_max;
    ParamEstimate baseline;  // zero-width at 0 unless free_baseline
    double residual_norm = 0.0;
    int iterations = 0;
};

BuildupFit fit_buildup(const BuildupCurve& curve, const BuildupFitOptions& opts = {});

// Amplitude correction for thermal signals acquired after a finite recovery
// wait: factor = 1 / (1 - exp(-t_rec/T1n)).
double recovery_correction_factor(double t_rec_s, double T1n_s);

// Inverse of the above: the recovery time that yields a given factor.
double recovery_time_from_factor(double factor, double T1n_s);

// Spherically symmetric radial diffusion with relaxation:
//   dP/dt = D_sd (1/r^2) d/dr (r^2 dP/dr) - P/T1n
// between a barrier radius (optionally held at a source polarization) and a
// reflecting outer radius. Returns the volume-averaged bulk polarization.
struct DiffusionGeometry {
    double r_barrier_m = 1e-9;
    double r_outer_m = 10e-9;
    std::size_t n_shells = 100;
    void validate() const;
};

enum class InnerBoundary { DirichletSource, Reflecting };
enum class DiffusionScheme { CrankNicolson, Explicit };

struct DiffusionOptions {
    DiffusionScheme scheme = DiffusionScheme::CrankNicolson;
    InnerBoundary inner = InnerBoundary::DirichletSource;
    double source_value = 1.0;
    double dt_s = 1e-3;
    double t_end_s = 1.0;
    std::size_t save_every = 1;
    // Starting profile per shell; empty means everywhere zero.
    std::vector<double> initial_polarization;
};

BuildupCurve diffusion_buildup(double D_sd_m2_per_s, double T1n_s, const DiffusionGeometry& geom,
                               const DiffusionOptions& opts);

// Per-shell snapshot of the final profile, for inspection and tests.
struct DiffusionProfile {
    std::vector<double> r_m;
    std::vector<double> polarization;
};
DiffusionProfile diffusion_final_profile(double D_sd_m2_per_s, double T1n_s,
                                         const DiffusionGeometry& geom,
                                         const DiffusionOptions& opts);

}  // namespace nvdnp
