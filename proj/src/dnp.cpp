#include "nvdnp/dnp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "nvdnp/constants.hpp"
#include "nvdnp/rng.hpp"

namespace nvdnp {
namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string(name) + " must be positive and finite");
}

// Piecewise-linear lookup, zero outside the grid.
double interp_or_zero(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (xs.empty() || x < xs.front() || x > xs.back()) return 0.0;
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    if (it == xs.begin()) return ys.front();
    if (it == xs.end()) return ys.back();
    const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    const std::size_t lo = hi - 1;
    const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

// Saturating-exponential model shared by fit_buildup; exponent clamped so a
// wandering line search cannot overflow before damping reins it in.
double safe_exp(double arg) { return std::exp(std::min(arg, 100.0)); }

struct TriDiag {
    std::vector<double> sub, diag, super;
};

// Thomas elimination for a tridiagonal system; overwrites rhs with the
// solution.
void solve_tridiag(const TriDiag& m, std::vector<double>& rhs) {
    const std::size_t n = m.diag.size();
    std::vector<double> cp(n, 0.0);
    double denom = m.diag[0];
    cp[0] = m.super[0] / denom;
    rhs[0] /= denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = m.diag[i] - m.sub[i] * cp[i - 1];
        if (i + 1 < n) cp[i] = m.super[i] / denom;
        rhs[i] = (rhs[i] - m.sub[i] * rhs[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= cp[i] * rhs[i + 1];
}

}  // namespace

void DnpSpectrum::validate() const {
    if (mw_frequencies_GHz.size() != signal.size())
        throw std::invalid_argument("DnpSpectrum: frequency and signal lengths differ");
    for (std::size_t i = 0; i < mw_frequencies_GHz.size(); ++i) {
        if (!std::isfinite(mw_frequencies_GHz[i]) || !std::isfinite(signal[i]))
            throw std::invalid_argument("DnpSpectrum: values must be finite");
        if (i > 0 && !(mw_frequencies_GHz[i] > mw_frequencies_GHz[i - 1]))
            throw std::invalid_argument("DnpSpectrum: frequencies must be ascending");
    }
}

void BuildupCurve::validate() const {
    if (times_s.size() != polarization.size())
        throw std::invalid_argument("BuildupCurve: time and polarization lengths differ");
    if (!sigma.empty() && sigma.size() != times_s.size())
        throw std::invalid_argument("BuildupCurve: sigma length mismatch");
    for (std::size_t i = 0; i < times_s.size(); ++i) {
        if (!std::isfinite(times_s[i]) || !std::isfinite(polarization[i]))
            throw std::invalid_argument("BuildupCurve: values must be finite");
        if (times_s[i] < 0.0) throw std::invalid_argument("BuildupCurve: times must be >= 0");
        if (i > 0 && !(times_s[i] > times_s[i - 1]))
            throw std::invalid_argument("BuildupCurve: times must be strictly ascending");
    }
}

void SampleParams::validate() const {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("SampleParams: enrichment must lie in [0, 1]");
    require_positive(T_DNP_s, "SampleParams::T_DNP_s");
    require_positive(T1n_s, "SampleParams::T1n_s");
    require_positive(B_T, "SampleParams::B_T");
    if (!std::isfinite(enhancement))
        throw std::invalid_argument("SampleParams: enhancement must be finite");
}

DnpSpectrum dnp_spectrum(const SpectrumGrid& odmr, double nu_n_MHz, double scale) {
    odmr.validate();
    if (odmr.frequencies_GHz.size() < 2)
        throw std::invalid_argument("dnp_spectrum: need at least 2 grid points");
    if (!(nu_n_MHz >= 0.0) || !std::isfinite(nu_n_MHz))
        throw std::invalid_argument("dnp_spectrum: nu_n must be >= 0");
    if (!std::isfinite(scale)) throw std::invalid_argument("dnp_spectrum: scale must be finite");

    const double nu_GHz = nu_n_MHz * 1e-3;
    double max_abs = 0.0;
    for (double v : odmr.intensities) max_abs = std::max(max_abs, std::abs(v));

    // The shifted lobes sample L at +/- nu_n; any appreciable intensity
    // within nu_n of a grid end would be silently truncated. "Appreciable"
    // is 1e-3 of the peak: tight enough to catch clipped lines, loose
    // enough that slowly decaying Lorentzian tails do not demand grids many
    // GHz wide.
    if (max_abs > 0.0 && nu_GHz > 0.0) {
        const double lo = odmr.frequencies_GHz.front() + nu_GHz;
        const double hi = odmr.frequencies_GHz.back() - nu_GHz;
        if (!(lo < hi))
            throw std::invalid_argument("dnp_spectrum: grid narrower than 2 nu_n");
        for (std::size_t i = 0; i < odmr.frequencies_GHz.size(); ++i) {
            const double f = odmr.frequencies_GHz[i];
            if ((f < lo || f > hi) && std::abs(odmr.intensities[i]) > 1e-3 * max_abs)
                throw std::invalid_argument(
                    "dnp_spectrum: ODMR support reaches within nu_n of the grid edge at " +
                    std::to_string(f) + " GHz; extend the grid");
        }
    }

    DnpSpectrum out;
    out.mw_frequencies_GHz = odmr.frequencies_GHz;
    out.signal.resize(odmr.frequencies_GHz.size());
    for (std::size_t i = 0; i < out.signal.size(); ++i) {
        const double f = odmr.frequencies_GHz[i];
        out.signal[i] =
            scale * (interp_or_zero(odmr.frequencies_GHz, odmr.intensities, f - nu_GHz) -
                     interp_or_zero(odmr.frequencies_GHz, odmr.intensities, f + nu_GHz));
    }
    return out;
}

double thermal_polarization(double B_T, double temperature_K, double gamma_n_MHz_per_T,
                            PolarizationConvention convention) {
    if (!(B_T >= 0.0) || !std::isfinite(B_T))
        throw std::invalid_argument("thermal_polarization: B must be >= 0");
    require_positive(temperature_K, "thermal_polarization: temperature");
    require_positive(gamma_n_MHz_per_T, "thermal_polarization: gamma_n");

    const double nu_Hz = gamma_n_MHz_per_T * 1e6 * B_T;
    const double x = kPlanckJs * nu_Hz / (kBoltzmannJPerK * temperature_K);
    if (convention == PolarizationConvention::TanhHalf) return std::tanh(0.5 * x);
    if (x >= 1.0)
        throw std::invalid_argument(
            "thermal_polarization: high-temperature convention invalid here (h nu / kT >= 1)");
    return x;
}

double enhanced_polarization(double enhancement, double thermal) {
    if (!std::isfinite(enhancement))
        throw std::invalid_argument("enhanced_polarization: enhancement must be finite");
    if (!(thermal >= 0.0 && thermal < 1.0))
        throw std::invalid_argument("enhanced_polarization: thermal polarization must be in [0, 1)");
    return enhancement * thermal;
}

BuildupCurve simulate_buildup(double T_DNP_s, double P_max, const std::vector<double>& times_s,
                              double noise_sigma, std::uint64_t seed) {
    require_positive(T_DNP_s, "simulate_buildup: T_DNP");
    if (!std::isfinite(P_max)) throw std::invalid_argument("simulate_buildup: P_max must be finite");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw std::invalid_argument("simulate_buildup: noise sigma must be >= 0");

    BuildupCurve out;
    out.times_s = times_s;
    out.polarization.resize(times_s.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < times_s.size(); ++i) {
        const double t = times_s[i];
        if (!(t >= 0.0) || !std::isfinite(t))
            throw std::invalid_argument("simulate_buildup: times must be >= 0");
        if (i > 0 && !(t > times_s[i - 1]))
            throw std::invalid_argument("simulate_buildup: times must be strictly ascending");
        double v = P_max * (1.0 - std::exp(-t / T_DNP_s));
        if (noise_sigma > 0.0) v += rng.gaussian(0.0, noise_sigma);
        out.polarization[i] = v;
    }
    if (noise_sigma > 0.0) out.sigma.assign(times_s.size(), noise_sigma);
    return out;
}

BuildupFit fit_buildup(const BuildupCurve& curve, const BuildupFitOptions& opts) {
    curve.validate();
    const std::size_t n = curve.times_s.size();
    const std::size_t n_params = opts.free_baseline ? 3 : 2;
    if (n < 4) throw std::invalid_argument("fit_buildup: need at least 4 points");
    if (n <= n_params) throw std::invalid_argument("fit_buildup: not enough points for the model");
    const auto& t = curve.times_s;
    const auto& y = curve.polarization;
    if (!(t.back() > t.front()))
        throw std::invalid_argument("fit_buildup: degenerate time grid");

    const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
    if (*ymax_it == *ymin_it)
        throw FitError("fit_buildup: constant input carries no time-constant information");

    const double y0_seed = opts.free_baseline ? y.front() : 0.0;
    double pmax_seed = y.back() - y0_seed;
    if (pmax_seed == 0.0) pmax_seed = (std::abs(*ymax_it) > std::abs(*ymin_it) ? *ymax_it : *ymin_it) - y0_seed;
    if (pmax_seed == 0.0) pmax_seed = 1.0;

    // Seed T from the first crossing of the 1 - 1/e level.
    const double level = y0_seed + (1.0 - std::exp(-1.0)) * pmax_seed;
    double T_seed = (t.back() - t.front()) / 3.0;
    for (std::size_t i = 1; i < n; ++i) {
        const bool crossed = (y[i - 1] - level) * (y[i] - level) <= 0.0 && y[i] != y[i - 1];
        if (crossed) {
            const double frac = (level - y[i - 1]) / (y[i] - y[i - 1]);
            const double tc = t[i - 1] + frac * (t[i] - t[i - 1]);
            if (tc > 0.0) T_seed = tc;
            break;
        }
    }
    if (!(T_seed > 0.0)) T_seed = (t.back() - t.front()) / 3.0;

    const bool free_baseline = opts.free_baseline;
    ModelFn model = [&t, free_baseline](const Eigen::VectorXd& p, Eigen::VectorXd& yv,
                                        Eigen::MatrixXd* J) {
        const double b = free_baseline ? p(0) : 0.0;
        const double A = p(free_baseline ? 1 : 0);
        const double T = p(free_baseline ? 2 : 1);
        for (Eigen::Index i = 0; i < yv.size(); ++i) {
            const double e = safe_exp(-t[static_cast<std::size_t>(i)] / T);
            yv(i) = b + A * (1.0 - e);
            if (J) {
                Eigen::Index c = 0;
                if (free_baseline) (*J)(i, c++) = 1.0;
                (*J)(i, c++) = 1.0 - e;
                (*J)(i, c) = -A * e * t[static_cast<std::size_t>(i)] / (T * T);
            }
        }
    };

    Eigen::VectorXd p0(static_cast<Eigen::Index>(n_params));
    if (free_baseline)
        p0 << y0_seed, pmax_seed, T_seed;
    else
        p0 << pmax_seed, T_seed;
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));

    LmOptions lm = opts.lm;
    lm.confidence = opts.confidence;
    const CurveFit fit = lm_fit(model, p0, yv, lm);

    BuildupFit out;
    Eigen::Index c = 0;
    if (free_baseline) out.baseline = fit.estimate(c++);
    out.P_max = fit.estimate(c++);
    out.T_DNP_s = fit.estimate(c);
    out.residual_norm = fit.residual_norm;
    out.iterations = fit.iterations;
    return out;
}

double recovery_correction_factor(double t_rec_s, double T1n_s) {
    require_positive(t_rec_s, "recovery_correction_factor: t_rec");
    require_positive(T1n_s, "recovery_correction_factor: T1n");
    return 1.0 / (1.0 - std::exp(-t_rec_s / T1n_s));
}

double recovery_time_from_factor(double factor, double T1n_s) {
    require_positive(T1n_s, "recovery_time_from_factor: T1n");
    if (!(factor > 1.0) || !std::isfinite(factor))
        throw std::invalid_argument("recovery_time_from_factor: factor must exceed 1");
    return -T1n_s * std::log(1.0 - 1.0 / factor);
}

void DiffusionGeometry::validate() const {
    require_positive(r_barrier_m, "DiffusionGeometry::r_barrier_m");
    if (!(r_outer_m > r_barrier_m) || !std::isfinite(r_outer_m))
        throw std::invalid_argument("DiffusionGeometry: outer radius must exceed barrier radius");
    if (n_shells < 3) throw std::invalid_argument("DiffusionGeometry: need at least 3 shells");
}

namespace {

struct DiffusionRun {
    std::vector<double> times_s;
    std::vector<double> bulk;
    std::vector<double> final_profile;
    std::vector<double> centers_m;
};

DiffusionRun run_diffusion(double D, double T1n_s, const DiffusionGeometry& geom,
                           const DiffusionOptions& opts) {
    geom.validate();
    if (!(D >= 0.0) || !std::isfinite(D))
        throw std::invalid_argument("diffusion_buildup: D_sd must be >= 0");
    if (!(T1n_s > 0.0))  // +infinity disables relaxation and is allowed
        throw std::invalid_argument("diffusion_buildup: T1n must be positive");
    if (!(opts.dt_s > 0.0) || !std::isfinite(opts.dt_s))
        throw std::invalid_argument("diffusion_buildup: dt must be positive");
    if (!(opts.t_end_s >= opts.dt_s))
        throw std::invalid_argument("diffusion_buildup: t_end must cover at least one step");
    if (opts.save_every < 1) throw std::invalid_argument("diffusion_buildup: save_every must be >= 1");
    if (!std::isfinite(opts.source_value))
        throw std::invalid_argument("diffusion_buildup: source value must be finite");

    const std::size_t N = geom.n_shells;
    const double dr = (geom.r_outer_m - geom.r_barrier_m) / double(N);
    const std::size_t n_steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opts.t_end_s / opts.dt_s)));
    const double dt = opts.t_end_s / double(n_steps);

    if (opts.scheme == DiffusionScheme::Explicit && D > 0.0) {
        const double dt_max = dr * dr / (6.0 * D);
        if (dt > dt_max)
            throw std::invalid_argument(
                "diffusion_buildup: explicit step unstable, dt = " + std::to_string(dt) +
                " s exceeds dr^2/(6 D) = " + std::to_string(dt_max) + " s; reduce dt or use the "
                "Crank-Nicolson scheme");
    }

    // Conservative finite volumes: V_j dP_j/dt = F_{j+1/2} - F_{j-1/2} with
    // F = D r_f^2 (dP/dr) across each face (4*pi factors cancel throughout).
    std::vector<double> face(N + 1), volume(N), centers(N);
    for (std::size_t j = 0; j <= N; ++j) face[j] = geom.r_barrier_m + double(j) * dr;
    for (std::size_t j = 0; j < N; ++j) {
        volume[j] = (std::pow(face[j + 1], 3) - std::pow(face[j], 3)) / 3.0;
        centers[j] = 0.5 * (face[j] + face[j + 1]);
    }

    // L P + c, with L tridiagonal.
    TriDiag L{std::vector<double>(N, 0.0), std::vector<double>(N, 0.0),
              std::vector<double>(N, 0.0)};
    std::vector<double> cvec(N, 0.0);
    for (std::size_t f = 1; f < N; ++f) {
        const double K = D * face[f] * face[f] / dr;
        L.diag[f - 1] -= K / volume[f - 1];
        L.super[f - 1] += K / volume[f - 1];
        L.diag[f] -= K / volume[f];
        L.sub[f] += K / volume[f];
    }
    if (opts.inner == InnerBoundary::DirichletSource) {
        const double K0 = 2.0 * D * face[0] * face[0] / dr;  // half-cell gradient to the wall
        L.diag[0] -= K0 / volume[0];
        cvec[0] += K0 * opts.source_value / volume[0];
    }
    if (std::isfinite(T1n_s))
        for (std::size_t j = 0; j < N; ++j) L.diag[j] -= 1.0 / T1n_s;

    std::vector<double> P(N, 0.0);
    if (!opts.initial_polarization.empty()) {
        if (opts.initial_polarization.size() != N)
            throw std::invalid_argument(
                "diffusion_buildup: initial profile length must equal n_shells");
        P = opts.initial_polarization;
    }

    const double vtot = std::accumulate(volume.begin(), volume.end(), 0.0);
    auto bulk_avg = [&] {
        double s = 0.0;
        for (std::size_t j = 0; j < N; ++j) s += volume[j] * P[j];
        return s / vtot;
    };

    // Crank-Nicolson matrix I - dt/2 L (identity when explicit).
    TriDiag M{std::vector<double>(N, 0.0), std::vector<double>(N, 1.0),
              std::vector<double>(N, 0.0)};
    if (opts.scheme == DiffusionScheme::CrankNicolson)
        for (std::size_t j = 0; j < N; ++j) {
            M.diag[j] = 1.0 - 0.5 * dt * L.diag[j];
            M.sub[j] = -0.5 * dt * L.sub[j];
            M.super[j] = -0.5 * dt * L.super[j];
        }

    DiffusionRun out;
    out.times_s.push_back(0.0);
    out.bulk.push_back(bulk_avg());
    std::vector<double> rhs(N);
    for (std::size_t step = 1; step <= n_steps; ++step) {
        auto apply_L = [&](const std::vector<double>& v, std::size_t j) {
            double s = L.diag[j] * v[j];
            if (j > 0) s += L.sub[j] * v[j - 1];
            if (j + 1 < N) s += L.super[j] * v[j + 1];
            return s;
        };
        if (opts.scheme == DiffusionScheme::Explicit) {
            for (std::size_t j = 0; j < N; ++j) rhs[j] = P[j] + dt * (apply_L(P, j) + cvec[j]);
            P.swap(rhs);
        } else {
            for (std::size_t j = 0; j < N; ++j)
                rhs[j] = P[j] + 0.5 * dt * apply_L(P, j) + dt * cvec[j];
            solve_tridiag(M, rhs);
            P.swap(rhs);
        }
        if (step % opts.save_every == 0 || step == n_steps) {
            out.times_s.push_back(double(step) * dt);
            out.bulk.push_back(bulk_avg());
        }
    }
    out.final_profile = P;
    out.centers_m = centers;
    return out;
}

}  // namespace

BuildupCurve diffusion_buildup(double D_sd_m2_per_s, double T1n_s, const DiffusionGeometry& geom,
                               const DiffusionOptions& opts) {
    DiffusionRun run = run_diffusion(D_sd_m2_per_s, T1n_s, geom, opts);
    BuildupCurve out;
    out.times_s = std::move(run.times_s);
    out.polarization = std::move(run.bulk);
    return out;
}

DiffusionProfile diffusion_final_profile(double D_sd_m2_per_s, double T1n_s,
                                         const DiffusionGeometry& geom,
                                         const DiffusionOptions& opts) {
    DiffusionRun run = run_diffusion(D_sd_m2_per_s, T1n_s, geom, opts);
    DiffusionProfile out;
    out.r_m = std::move(run.centers_m);
    out.polarization = std::move(run.final_profile);
    return out;
}

}  // namespace nvdnp
