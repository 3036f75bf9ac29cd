#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nvdnp/fit.hpp"

namespace nvdnp {

struct FidRecord {
    std::vector<std::complex<double>> samples;
    double dwell_s = 0.5e-6;
    double start_time_s = 0.0;
    void validate() const;
    double time_at(std::size_t i) const { return start_time_s + double(i) * dwell_s; }
};

struct EchoTrain {
    std::vector<std::vector<std::complex<double>>> echoes;  // n_echoes x points_per_echo
    double tau_s = 40e-6;
    double dwell_s = 0.5e-6;
    std::vector<double> phase_cycle_deg = {180.0, 0.0, 0.0, 180.0};
    void validate() const;
};

struct EchoEnvelope {
    std::vector<double> times_s;  // echo index * tau
    std::vector<double> values;
};

// Rotating-frame FID model: A exp(-t/T2*) exp(i (2 pi f t + phi)).
struct FidParams {
    double amplitude = 1.0;
    double T2star_s = 1e-4;  // +infinity disables decay
    double freq_offset_Hz = 0.0;
    double phase_rad = 0.0;
};

FidRecord synthesize_fid(const FidParams& params, std::size_t n_points, double dwell_s,
                         double noise_sigma = 0.0, std::uint64_t seed = 0,
                         double start_time_s = 0.0);

struct BiexpParams {
    double A1 = 1.0;
    double T2_1_s = 1.0;
    double A2 = 0.0;
    double T2_2_s = 1.0;
};

// Solid-echo train whose echo-k envelope follows the biexponential
// A1 exp(-k tau/T2_1) + A2 exp(-k tau/T2_2), k = 0-based, with the phase
// cycle applied multiplicatively per echo.
struct EchoTrainParams {
    BiexpParams envelope;
    double tau_s = 40e-6;
    std::size_t n_echoes = 500;
    std::size_t points_per_echo = 32;
    double dwell_s = 0.5e-6;
    double intra_echo_T2_s = std::numeric_limits<double>::infinity();
    double freq_offset_Hz = 0.0;
    std::vector<double> phase_cycle_deg = {180.0, 0.0, 0.0, 180.0};
};

EchoTrain synthesize_echo_train(const EchoTrainParams& params, double noise_sigma = 0.0,
                                std::uint64_t seed = 0);

// Per-echo amplitude: mean of the first quarter of each echo's samples after
// undoing the phase cycle, real component.
EchoEnvelope echo_envelope(const EchoTrain& train);

// Centered box average; the window rounds to a whole odd number of samples
// (half-width floor(round(window/dt)/2) each side), truncated at the edges.
std::vector<double> moving_average(const std::vector<double>& series, double window_s,
                                   double sample_period_s);

struct BiexpFitOptions {
    double degeneracy_ratio_threshold = 3.0;  // warn when T2_2/T2_1 falls below this
    double confidence = 0.95;
    LmOptions lm;
};

struct BiexpFit {
    ParamEstimate A1, T2_1_s, A2, T2_2_s;  // canonical order T2_1 <= T2_2
    bool degenerate = false;
    std::string degeneracy_note;
    double residual_norm = 0.0;
};

BiexpFit fit_biexponential(const std::vector<double>& times_s, const std::vector<double>& values,
                           const BiexpFitOptions& opts = {});

// Least-squares scalar fit of target ~ scale * model on the real channel.
ParamEstimate fit_scaling_factor(const FidRecord& target, const FidRecord& model,
                                 double confidence = 0.95);

struct DatasetStore {
    std::vector<FidRecord> blocks;  // each block is one stored average set
    void validate() const;          // homogeneous shapes
};

struct BootstrapResult {
    double mean = 0.0;
    double sigma = 0.0;
    std::size_t n_resamples = 0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::vector<double> distribution;  // kept only on request
};

struct BootstrapOptions {
    std::size_t n_resamples = 10000;
    std::uint64_t seed = 0;
    double confidence = 0.95;
    bool keep_distribution = false;
};

// Statistic evaluated on each resampled average (usually a scaling-factor
// fit against a fixed model FID).
using AmplitudeStatistic = std::function<double(const FidRecord&)>;

// Resample whole blocks with replacement, average sample-wise, and fit; the
// spread of the fitted amplitudes estimates the uncertainty of the mean.
// Per-resample seeds derive from (seed, resample index), so the result does
// not depend on how resamples are scheduled.
BootstrapResult bootstrap_amplitude(const DatasetStore& store, const AmplitudeStatistic& statistic,
                                    const BootstrapOptions& opts = {});

enum class EnhancementMode { Auto, ForceAsymmetric };

struct EnhancementOptions {
    EnhancementMode mode = EnhancementMode::Auto;
    // Symmetric reporting requires the thermal mean to clear zero by this
    // many bootstrap sigmas; below it the reciprocal transform is used.
    double margin_sigmas = 4.0;
};

struct EnhancementResult {
    double epsilon = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool symmetric = true;
};

EnhancementResult enhancement_with_ci(double hp_amplitude, const BootstrapResult& thermal,
                                      double correction_factor,
                                      const EnhancementOptions& opts = {});

// Small-flip-angle readout: sample k (1-based) follows
//   M_k = M0 sin(theta) cos(theta)^(k-1) exp(-(k-1) tau / T1)
// so the observed decay time obeys 1/T_obs = 1/T1 - ln(cos theta)/tau.
std::vector<double> small_flip_series(double theta_rad, double tau_s, double T1_s, double M0,
                                      std::size_t n_points);
double small_flip_observed_time(double theta_rad, double tau_s, double T1_s);

struct T1FitOptions {
    double confidence = 0.95;
    LmOptions lm;
};

struct T1Fit {
    ParamEstimate T1_s;           // corrected
    ParamEstimate T1_observed_s;  // raw exponential decay time
    ParamEstimate amplitude;
    double residual_norm = 0.0;
};

T1Fit fit_t1_small_flip(const std::vector<double>& amplitudes, double theta_rad, double tau_s,
                        const T1FitOptions& opts = {});

}  // namespace nvdnp
