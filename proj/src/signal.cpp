#include "nvdnp/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nvdnp/rng.hpp"

namespace nvdnp {
namespace {

constexpr double kTwoPi = 6.28318530717958647692;

double safe_exp(double arg) { return std::exp(std::min(arg, 100.0)); }

// Ordinary least-squares line through (x, y); returns {slope, intercept}.
std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    if (det == 0.0) return {0.0, y.empty() ? 0.0 : sy / n};
    return {(n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det};
}

struct MonoFit {
    ParamEstimate A, T;
    double residual_norm = 0.0;
    int iterations = 0;
};

// A exp(-t/T) via damped least squares, seeded from a log-linear regression
// over the positive samples.
MonoFit fit_monoexponential(const std::vector<double>& t, const std::vector<double>& y,
                            double confidence, const LmOptions& lm_in) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] > 0.0) {
            lx.push_back(t[i]);
            ly.push_back(std::log(y[i]));
        }
    const double span = t.back() - t.front();
    double A_seed, T_seed;
    if (lx.size() >= 2) {
        const auto [slope, intercept] = line_fit(lx, ly);
        T_seed = slope < 0.0 ? -1.0 / slope : span;
        A_seed = std::exp(intercept);
    } else {
        // Mostly/all negative data: fit the mirrored series instead.
        double peak = 0.0;
        for (double v : y) peak = std::abs(v) > std::abs(peak) ? v : peak;
        A_seed = peak == 0.0 ? 1.0 : peak;
        T_seed = span / 3.0;
    }
    if (!(T_seed > 0.0) || !std::isfinite(T_seed)) T_seed = span / 3.0;

    ModelFn model = [&t](const Eigen::VectorXd& p, Eigen::VectorXd& yv, Eigen::MatrixXd* J) {
        for (Eigen::Index i = 0; i < yv.size(); ++i) {
            const double ti = t[static_cast<std::size_t>(i)];
            const double e = safe_exp(-ti / p(1));
            yv(i) = p(0) * e;
            if (J) {
                (*J)(i, 0) = e;
                (*J)(i, 1) = p(0) * e * ti / (p(1) * p(1));
            }
        }
    };
    Eigen::VectorXd p0(2);
    p0 << A_seed, T_seed;
    LmOptions lm = lm_in;
    lm.confidence = confidence;
    const CurveFit fit = lm_fit(
        model, p0, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())),
        lm);
    MonoFit out;
    out.A = fit.estimate(0);
    out.T = fit.estimate(1);
    out.residual_norm = fit.residual_norm;
    out.iterations = fit.iterations;
    return out;
}

FidRecord average_blocks(const DatasetStore& store, const std::vector<std::size_t>& picks) {
    const FidRecord& first = store.blocks.front();
    FidRecord avg;
    avg.dwell_s = first.dwell_s;
    avg.start_time_s = first.start_time_s;
    avg.samples.assign(first.samples.size(), {0.0, 0.0});
    for (std::size_t idx : picks)
        for (std::size_t i = 0; i < avg.samples.size(); ++i)
            avg.samples[i] += store.blocks[idx].samples[i];
    const double inv = 1.0 / double(picks.size());
    for (auto& s : avg.samples) s *= inv;
    return avg;
}

}  // namespace

void FidRecord::validate() const {
    if (!(dwell_s > 0.0) || !std::isfinite(dwell_s))
        throw std::invalid_argument("FidRecord: dwell must be positive");
    if (!std::isfinite(start_time_s))
        throw std::invalid_argument("FidRecord: start time must be finite");
    for (const auto& s : samples)
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
            throw std::invalid_argument("FidRecord: samples must be finite");
}

void EchoTrain::validate() const {
    if (!(tau_s > 0.0) || !std::isfinite(tau_s))
        throw std::invalid_argument("EchoTrain: tau must be positive");
    if (!(dwell_s > 0.0) || !std::isfinite(dwell_s))
        throw std::invalid_argument("EchoTrain: dwell must be positive");
    if (phase_cycle_deg.empty())
        throw std::invalid_argument("EchoTrain: phase cycle must be non-empty");
    const std::size_t m = echoes.empty() ? 0 : echoes.front().size();
    for (const auto& echo : echoes)
        if (echo.size() != m)
            throw std::invalid_argument("EchoTrain: ragged echo lengths");
}

void DatasetStore::validate() const {
    if (blocks.empty()) return;
    const FidRecord& first = blocks.front();
    for (const auto& b : blocks) {
        b.validate();
        if (b.samples.size() != first.samples.size() || b.dwell_s != first.dwell_s ||
            b.start_time_s != first.start_time_s)
            throw std::invalid_argument("DatasetStore: blocks must share one grid");
    }
}

FidRecord synthesize_fid(const FidParams& params, std::size_t n_points, double dwell_s,
                         double noise_sigma, std::uint64_t seed, double start_time_s) {
    if (n_points < 1) throw std::invalid_argument("synthesize_fid: need at least 1 point");
    if (!(dwell_s > 0.0) || !std::isfinite(dwell_s))
        throw std::invalid_argument("synthesize_fid: dwell must be positive");
    if (!(params.T2star_s > 0.0))
        throw std::invalid_argument("synthesize_fid: T2* must be positive");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw std::invalid_argument("synthesize_fid: noise sigma must be >= 0");

    FidRecord out;
    out.dwell_s = dwell_s;
    out.start_time_s = start_time_s;
    out.samples.resize(n_points);
    Rng rng(seed);
    for (std::size_t i = 0; i < n_points; ++i) {
        const double t = start_time_s + double(i) * dwell_s;
        const double decay =
            std::isfinite(params.T2star_s) ? std::exp(-t / params.T2star_s) : 1.0;
        const double arg = kTwoPi * params.freq_offset_Hz * t + params.phase_rad;
        std::complex<double> v = params.amplitude * decay *
                                 std::complex<double>(std::cos(arg), std::sin(arg));
        if (noise_sigma > 0.0) v += rng.complex_gaussian(noise_sigma);
        out.samples[i] = v;
    }
    return out;
}

EchoTrain synthesize_echo_train(const EchoTrainParams& params, double noise_sigma,
                                std::uint64_t seed) {
    if (params.n_echoes < 1 || params.points_per_echo < 1)
        throw std::invalid_argument("synthesize_echo_train: need at least one echo and point");
    if (!(params.tau_s > 0.0) || !(params.dwell_s > 0.0))
        throw std::invalid_argument("synthesize_echo_train: tau and dwell must be positive");
    if (!(params.envelope.T2_1_s > 0.0) || !(params.envelope.T2_2_s > 0.0))
        throw std::invalid_argument("synthesize_echo_train: T2 values must be positive");
    if (!(params.intra_echo_T2_s > 0.0))
        throw std::invalid_argument("synthesize_echo_train: intra-echo T2 must be positive");
    if (params.phase_cycle_deg.empty())
        throw std::invalid_argument("synthesize_echo_train: phase cycle must be non-empty");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw std::invalid_argument("synthesize_echo_train: noise sigma must be >= 0");

    EchoTrain out;
    out.tau_s = params.tau_s;
    out.dwell_s = params.dwell_s;
    out.phase_cycle_deg = params.phase_cycle_deg;
    out.echoes.resize(params.n_echoes);
    Rng rng(seed);
    for (std::size_t k = 0; k < params.n_echoes; ++k) {
        const double tk = double(k) * params.tau_s;
        const double env = params.envelope.A1 * std::exp(-tk / params.envelope.T2_1_s) +
                           params.envelope.A2 * std::exp(-tk / params.envelope.T2_2_s);
        const double phase_deg = params.phase_cycle_deg[k % params.phase_cycle_deg.size()];
        const std::complex<double> cycle = std::polar(1.0, phase_deg * kTwoPi / 360.0);
        auto& echo = out.echoes[k];
        echo.resize(params.points_per_echo);
        for (std::size_t j = 0; j < params.points_per_echo; ++j) {
            const double tj = double(j) * params.dwell_s;
            const double intra =
                std::isfinite(params.intra_echo_T2_s) ? std::exp(-tj / params.intra_echo_T2_s) : 1.0;
            const double arg = kTwoPi * params.freq_offset_Hz * tj;
            std::complex<double> v =
                env * intra * std::complex<double>(std::cos(arg), std::sin(arg)) * cycle;
            if (noise_sigma > 0.0) v += rng.complex_gaussian(noise_sigma);
            echo[j] = v;
        }
    }
    return out;
}

EchoEnvelope echo_envelope(const EchoTrain& train) {
    train.validate();
    EchoEnvelope out;
    out.times_s.reserve(train.echoes.size());
    out.values.reserve(train.echoes.size());
    for (std::size_t k = 0; k < train.echoes.size(); ++k) {
        const auto& echo = train.echoes[k];
        if (echo.empty()) throw std::invalid_argument("echo_envelope: empty echo");
        const std::size_t q = std::max<std::size_t>(1, echo.size() / 4);
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t j = 0; j < q; ++j) acc += echo[j];
        acc /= double(q);
        const double phase_deg = train.phase_cycle_deg[k % train.phase_cycle_deg.size()];
        acc *= std::polar(1.0, -phase_deg * kTwoPi / 360.0);
        out.times_s.push_back(double(k) * train.tau_s);
        out.values.push_back(acc.real());
    }
    return out;
}

std::vector<double> moving_average(const std::vector<double>& series, double window_s,
                                   double sample_period_s) {
    if (!(sample_period_s > 0.0) || !std::isfinite(sample_period_s))
        throw std::invalid_argument("moving_average: sample period must be positive");
    if (!(window_s >= sample_period_s * (1.0 - 1e-12)))
        throw std::invalid_argument("moving_average: window shorter than one sample");
    const auto w = static_cast<std::size_t>(std::llround(window_s / sample_period_s));
    const std::size_t half = std::max<std::size_t>(w, 1) / 2;
    const std::size_t n = series.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        double acc = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) acc += series[j];
        out[i] = acc / double(hi - lo + 1);
    }
    return out;
}

BiexpFit fit_biexponential(const std::vector<double>& times_s, const std::vector<double>& values,
                           const BiexpFitOptions& opts) {
    if (times_s.size() != values.size())
        throw std::invalid_argument("fit_biexponential: time and value lengths differ");
    if (times_s.size() < 6) throw std::invalid_argument("fit_biexponential: need at least 6 points");
    for (std::size_t i = 0; i < times_s.size(); ++i) {
        if (!std::isfinite(times_s[i]) || !std::isfinite(values[i]))
            throw std::invalid_argument("fit_biexponential: values must be finite");
        if (times_s[i] < 0.0 || (i > 0 && !(times_s[i] > times_s[i - 1])))
            throw std::invalid_argument("fit_biexponential: times must be ascending and >= 0");
    }

    const double span = times_s.back() - times_s.front();

    // Two-segment log-linear seeding: the tail sees only the slow component;
    // its extrapolated remainder seeds the fast one.
    double A2_seed = 0.0, T2_seed = span / 2.0;
    {
        std::vector<double> lx, ly;
        const std::size_t tail_from = times_s.size() - times_s.size() * 2 / 5;
        for (std::size_t i = tail_from; i < times_s.size(); ++i)
            if (values[i] > 0.0) {
                lx.push_back(times_s[i]);
                ly.push_back(std::log(values[i]));
            }
        if (lx.size() >= 2) {
            const auto [slope, intercept] = line_fit(lx, ly);
            if (slope < 0.0) {
                T2_seed = -1.0 / slope;
                A2_seed = std::exp(intercept);
            }
        }
    }
    double A1_seed = 0.0, T1_seed = T2_seed / 10.0;
    {
        std::vector<double> lx, ly;
        const std::size_t head_to = std::max<std::size_t>(3, times_s.size() * 2 / 5);
        for (std::size_t i = 0; i < head_to && i < times_s.size(); ++i) {
            const double r = values[i] - A2_seed * safe_exp(-times_s[i] / T2_seed);
            if (r > 0.0) {
                lx.push_back(times_s[i]);
                ly.push_back(std::log(r));
            }
        }
        if (lx.size() >= 2) {
            const auto [slope, intercept] = line_fit(lx, ly);
            if (slope < 0.0) {
                T1_seed = -1.0 / slope;
                A1_seed = std::exp(intercept);
            }
        }
    }
    if (A1_seed == 0.0) A1_seed = std::max(values.front() - A2_seed, 0.1 * std::abs(values.front()));
    if (A2_seed == 0.0) A2_seed = 0.5 * std::abs(values.front());
    if (!(T1_seed > 0.0) || !std::isfinite(T1_seed)) T1_seed = span / 10.0;
    if (T1_seed >= T2_seed) T1_seed = T2_seed / 4.0;

    ModelFn model = [&times_s](const Eigen::VectorXd& p, Eigen::VectorXd& yv, Eigen::MatrixXd* J) {
        for (Eigen::Index i = 0; i < yv.size(); ++i) {
            const double t = times_s[static_cast<std::size_t>(i)];
            const double e1 = safe_exp(-t / p(1));
            const double e2 = safe_exp(-t / p(3));
            yv(i) = p(0) * e1 + p(2) * e2;
            if (J) {
                (*J)(i, 0) = e1;
                (*J)(i, 1) = p(0) * e1 * t / (p(1) * p(1));
                (*J)(i, 2) = e2;
                (*J)(i, 3) = p(2) * e2 * t / (p(3) * p(3));
            }
        }
    };

    BiexpFit out;
    LmOptions lm = opts.lm;
    lm.confidence = opts.confidence;
    try {
        Eigen::VectorXd p0(4);
        p0 << A1_seed, T1_seed, A2_seed, T2_seed;
        const CurveFit fit = lm_fit(model, p0,
                                    Eigen::Map<const Eigen::VectorXd>(
                                        values.data(), static_cast<Eigen::Index>(values.size())),
                                    lm);
        out.A1 = fit.estimate(0);
        out.T2_1_s = fit.estimate(1);
        out.A2 = fit.estimate(2);
        out.T2_2_s = fit.estimate(3);
        out.residual_norm = fit.residual_norm;
        if (out.T2_1_s.value > out.T2_2_s.value) {
            std::swap(out.A1, out.A2);
            std::swap(out.T2_1_s, out.T2_2_s);
        }
        const double ratio = out.T2_2_s.value / out.T2_1_s.value;
        if (!(ratio >= opts.degeneracy_ratio_threshold)) {
            out.degenerate = true;
            out.degeneracy_note = "time constants nearly degenerate (ratio " +
                                  std::to_string(ratio) + " below threshold " +
                                  std::to_string(opts.degeneracy_ratio_threshold) + ")";
        }
        return out;
    } catch (const FitError& err) {
        // Collapsed second component: report the monoexponential model the
        // data actually supports.
        const MonoFit mono = fit_monoexponential(times_s, values, opts.confidence, opts.lm);
        out.A1 = mono.A;
        out.T2_1_s = mono.T;
        out.A2 = ParamEstimate{0.0, 0.0, 0.0, 0.0};
        out.T2_2_s = mono.T;
        out.residual_norm = mono.residual_norm;
        out.degenerate = true;
        out.degeneracy_note =
            std::string("biexponential fit collapsed to monoexponential (") + err.what() + ")";
        return out;
    }
}

ParamEstimate fit_scaling_factor(const FidRecord& target, const FidRecord& model,
                                 double confidence) {
    target.validate();
    model.validate();
    if (target.samples.size() != model.samples.size() || target.dwell_s != model.dwell_s ||
        target.start_time_s != model.start_time_s)
        throw std::invalid_argument("fit_scaling_factor: records must share one grid");
    const std::size_t n = target.samples.size();
    if (n < 2) throw std::invalid_argument("fit_scaling_factor: need at least 2 samples");

    double mm = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mm += model.samples[i].real() * model.samples[i].real();
        my += model.samples[i].real() * target.samples[i].real();
    }
    if (mm == 0.0)
        throw std::invalid_argument("fit_scaling_factor: model real channel has zero norm");
    const double scale = my / mm;

    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = target.samples[i].real() - scale * model.samples[i].real();
        ssr += r * r;
    }
    const int dof = static_cast<int>(n) - 1;
    const double se = std::sqrt(ssr / double(dof) / mm);
    const double tq = t_quantile(dof, confidence);
    return ParamEstimate{scale, se, scale - tq * se, scale + tq * se};
}

BootstrapResult bootstrap_amplitude(const DatasetStore& store, const AmplitudeStatistic& statistic,
                                    const BootstrapOptions& opts) {
    store.validate();
    if (store.blocks.empty()) throw std::invalid_argument("bootstrap_amplitude: empty store");
    if (store.blocks.size() < 2)
        throw std::invalid_argument("bootstrap_amplitude: need at least 2 blocks");
    if (opts.n_resamples < 1)
        throw std::invalid_argument("bootstrap_amplitude: need at least 1 resample");
    if (!statistic) throw std::invalid_argument("bootstrap_amplitude: statistic must be callable");
    if (!(opts.confidence > 0.0 && opts.confidence < 1.0))
        throw std::invalid_argument("bootstrap_amplitude: confidence must lie in (0, 1)");

    const std::size_t N = store.blocks.size();
    std::vector<double> amplitudes(opts.n_resamples);
    std::vector<std::size_t> picks(N);
    // One independent generator per resample keeps the draw sequence tied to
    // the resample index, not to execution order.
    for (std::size_t r = 0; r < opts.n_resamples; ++r) {
        Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
        for (std::size_t i = 0; i < N; ++i) picks[i] = rng.integer(N);
        amplitudes[r] = statistic(average_blocks(store, picks));
        if (!std::isfinite(amplitudes[r]))
            throw FitError("bootstrap_amplitude: statistic returned a non-finite value");
    }

    BootstrapResult out;
    out.n_resamples = opts.n_resamples;
    out.mean = std::accumulate(amplitudes.begin(), amplitudes.end(), 0.0) / double(amplitudes.size());
    double ss = 0.0;
    for (double a : amplitudes) ss += (a - out.mean) * (a - out.mean);
    out.sigma = amplitudes.size() > 1 ? std::sqrt(ss / double(amplitudes.size() - 1)) : 0.0;

    std::vector<double> sorted = amplitudes;
    std::sort(sorted.begin(), sorted.end());
    auto percentile = [&sorted](double q) {
        const double pos = q * double(sorted.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        if (lo + 1 >= sorted.size()) return sorted.back();
        const double frac = pos - double(lo);
        return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
    };
    const double alpha = 1.0 - opts.confidence;
    out.ci_low = std::min(percentile(0.5 * alpha), out.mean);
    out.ci_high = std::max(percentile(1.0 - 0.5 * alpha), out.mean);
    if (opts.keep_distribution) out.distribution = std::move(amplitudes);
    return out;
}

EnhancementResult enhancement_with_ci(double hp_amplitude, const BootstrapResult& thermal,
                                      double correction_factor, const EnhancementOptions& opts) {
    if (!std::isfinite(hp_amplitude))
        throw std::invalid_argument("enhancement_with_ci: hp amplitude must be finite");
    if (!(correction_factor > 0.0) || !std::isfinite(correction_factor))
        throw std::invalid_argument("enhancement_with_ci: correction factor must be positive");
    if (!(thermal.mean > 0.0))
        throw std::invalid_argument("enhancement_with_ci: thermal mean amplitude must be positive");
    if (!(thermal.ci_low <= thermal.mean && thermal.mean <= thermal.ci_high))
        throw std::invalid_argument("enhancement_with_ci: thermal bounds must bracket the mean");

    EnhancementResult out;
    out.epsilon = hp_amplitude / (thermal.mean * correction_factor);

    const bool clears_zero = thermal.ci_low > 0.0;
    const bool with_margin =
        clears_zero && thermal.mean - opts.margin_sigmas * thermal.sigma > 0.0;

    if (opts.mode == EnhancementMode::Auto && with_margin) {
        const double rel = 0.5 * (thermal.ci_high - thermal.ci_low) / thermal.mean;
        const double half = std::abs(out.epsilon) * rel;
        out.lower = out.epsilon - half;
        out.upper = out.epsilon + half;
        out.symmetric = true;
        return out;
    }
    if (clears_zero) {
        // Reciprocal transform of the thermal amplitude bounds; wide thermal
        // intervals map to strongly asymmetric enhancement intervals.
        const double a = hp_amplitude / (thermal.ci_high * correction_factor);
        const double b = hp_amplitude / (thermal.ci_low * correction_factor);
        out.lower = std::min(a, b);
        out.upper = std::max(a, b);
        out.symmetric = false;
        return out;
    }
    if (opts.mode == EnhancementMode::ForceAsymmetric) {
        const double a = hp_amplitude / (thermal.ci_high * correction_factor);
        out.lower = std::min(a, out.epsilon);
        out.upper = std::numeric_limits<double>::infinity();
        out.symmetric = false;
        return out;
    }
    throw std::invalid_argument(
        "enhancement_with_ci: thermal amplitude interval contains zero, enhancement is unbounded "
        "above; request asymmetric mode to report an open interval");
}

std::vector<double> small_flip_series(double theta_rad, double tau_s, double T1_s, double M0,
                                      std::size_t n_points) {
    if (!(theta_rad > 0.0 && theta_rad < 1.57079632679489662))
        throw std::invalid_argument("small_flip_series: theta must lie in (0, pi/2)");
    if (!(tau_s > 0.0) || !(T1_s > 0.0))
        throw std::invalid_argument("small_flip_series: tau and T1 must be positive");
    if (n_points < 1) throw std::invalid_argument("small_flip_series: need at least 1 point");
    std::vector<double> out(n_points);
    const double s = std::sin(theta_rad);
    const double c = std::cos(theta_rad);
    for (std::size_t k = 0; k < n_points; ++k)
        out[k] = M0 * s * std::pow(c, double(k)) * std::exp(-double(k) * tau_s / T1_s);
    return out;
}

double small_flip_observed_time(double theta_rad, double tau_s, double T1_s) {
    if (!(theta_rad > 0.0 && theta_rad < 1.57079632679489662))
        throw std::invalid_argument("small_flip_observed_time: theta must lie in (0, pi/2)");
    if (!(tau_s > 0.0) || !(T1_s > 0.0))
        throw std::invalid_argument("small_flip_observed_time: tau and T1 must be positive");
    return 1.0 / (1.0 / T1_s - std::log(std::cos(theta_rad)) / tau_s);
}

T1Fit fit_t1_small_flip(const std::vector<double>& amplitudes, double theta_rad, double tau_s,
                        const T1FitOptions& opts) {
    if (!(theta_rad > 0.0) || theta_rad >= 1.57079632679489662)
        throw std::invalid_argument("fit_t1_small_flip: theta must lie in (0, pi/2)");
    if (!(tau_s > 0.0) || !std::isfinite(tau_s))
        throw std::invalid_argument("fit_t1_small_flip: tau must be positive");
    if (amplitudes.size() < 4)
        throw std::invalid_argument("fit_t1_small_flip: need at least 4 points");
    for (double v : amplitudes)
        if (!std::isfinite(v))
            throw std::invalid_argument("fit_t1_small_flip: amplitudes must be finite");

    std::vector<double> t(amplitudes.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = double(k) * tau_s;
    const MonoFit mono = fit_monoexponential(t, amplitudes, opts.confidence, opts.lm);

    // Undo the pulse-depletion contribution: 1/T1 = 1/T_obs + ln(cos th)/tau.
    const double depletion = -std::log(std::cos(theta_rad)) / tau_s;
    auto corrected = [depletion](double T_obs) {
        const double inv = 1.0 / T_obs - depletion;
        return inv > 0.0 ? 1.0 / inv : std::numeric_limits<double>::infinity();
    };
    const double inv = 1.0 / mono.T.value - depletion;
    if (!(mono.T.value > 0.0) || !(inv > 0.0))
        throw FitError("fit_t1_small_flip: observed decay is not faster than the pulse-depletion "
                       "limit; T1 is unresolved",
                       mono.residual_norm, mono.iterations);

    T1Fit out;
    out.T1_observed_s = mono.T;
    out.amplitude = mono.A;
    out.residual_norm = mono.residual_norm;
    out.T1_s.value = 1.0 / inv;
    // The map T_obs -> T1 is monotone increasing, so interval ends transform
    // directly; the delta method supplies the standard error.
    out.T1_s.std_error = mono.T.std_error * (out.T1_s.value * out.T1_s.value) /
                         (mono.T.value * mono.T.value);
    out.T1_s.ci_low = mono.T.ci_low > 0.0 ? corrected(mono.T.ci_low) : 0.0;
    out.T1_s.ci_high = corrected(mono.T.ci_high);
    return out;
}

}  // namespace nvdnp
