#include "nvdnp/spectra.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

namespace nvdnp {
namespace {

constexpr double kPi = 3.14159265358979323846;

double lorentzian_pdf(double x, double fwhm) {
    const double hw = 0.5 * fwhm;
    return (hw / kPi) / (x * x + hw * hw);
}

double gaussian_pdf(double x, double fwhm) {
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double z = x / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * kPi));
}

void check_grid_against_lines(const std::vector<TransitionLine>& lines,
                              const LineshapeParams& shape, const GridSpec& grid,
                              GridResolutionPolicy policy) {
    const double fwhm_GHz = shape.fwhm_MHz * 1e-3;
    for (const auto& line : lines) {
        if (line.amplitude < 0.0)
            throw std::invalid_argument("broaden: line amplitudes must be non-negative");
        if (line.frequency_GHz - 3.0 * fwhm_GHz < grid.f_min_GHz ||
            line.frequency_GHz + 3.0 * fwhm_GHz > grid.f_max_GHz)
            throw std::invalid_argument(
                "broaden: grid must cover every line center by 3 fwhm; line at " +
                std::to_string(line.frequency_GHz) + " GHz falls outside [" +
                std::to_string(grid.f_min_GHz) + ", " + std::to_string(grid.f_max_GHz) + "]");
    }
    if (fwhm_GHz / grid.spacing_GHz() < 5.0) {
        const std::string msg = "grid resolves one fwhm with fewer than 5 points (spacing " +
                                std::to_string(grid.spacing_GHz() * 1e3) + " MHz vs fwhm " +
                                std::to_string(shape.fwhm_MHz) + " MHz)";
        if (policy == GridResolutionPolicy::Error) throw std::invalid_argument("broaden: " + msg);
        std::cerr << "nvdnp warning: " << msg << "\n";
    }
}

}  // namespace

void Enrichment::validate() const {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("Enrichment: p must lie in [0, 1], got " + std::to_string(p));
}

void LineshapeParams::validate() const {
    if (!(fwhm_MHz > 0.0) || !std::isfinite(fwhm_MHz))
        throw std::invalid_argument("LineshapeParams: fwhm must be positive");
}

void GridSpec::validate() const {
    if (n_points < 2) throw std::invalid_argument("GridSpec: need at least 2 points");
    if (!(f_min_GHz < f_max_GHz) || !std::isfinite(f_min_GHz) || !std::isfinite(f_max_GHz))
        throw std::invalid_argument("GridSpec: need finite f_min < f_max");
}

double GridSpec::spacing_GHz() const { return (f_max_GHz - f_min_GHz) / double(n_points - 1); }

void SpectrumGrid::validate() const {
    if (frequencies_GHz.size() != intensities.size())
        throw std::invalid_argument("SpectrumGrid: frequency and intensity lengths differ");
    for (std::size_t i = 0; i < frequencies_GHz.size(); ++i) {
        if (!std::isfinite(frequencies_GHz[i]) || !std::isfinite(intensities[i]))
            throw std::invalid_argument("SpectrumGrid: values must be finite");
        if (i > 0 && !(frequencies_GHz[i] > frequencies_GHz[i - 1]))
            throw std::invalid_argument("SpectrumGrid: frequencies must be strictly ascending");
    }
}

std::array<double, 4> occupancy_weights(Enrichment enrichment) {
    enrichment.validate();
    const double p = enrichment.p;
    const double q = 1.0 - p;
    return {q * q * q, 3.0 * p * q * q, 3.0 * p * p * q, p * p * p};
}

SpectrumGrid broaden(const std::vector<TransitionLine>& lines, const LineshapeParams& shape,
                     const GridSpec& grid, GridResolutionPolicy policy) {
    shape.validate();
    grid.validate();

    SpectrumGrid out;
    out.frequencies_GHz.resize(grid.n_points);
    out.intensities.assign(grid.n_points, 0.0);
    const double df = grid.spacing_GHz();
    for (std::size_t i = 0; i < grid.n_points; ++i)
        out.frequencies_GHz[i] = grid.f_min_GHz + df * double(i);
    if (lines.empty()) return out;

    check_grid_against_lines(lines, shape, grid, policy);

    const double fwhm_GHz = shape.fwhm_MHz * 1e-3;
    // Fixed line-then-point order keeps summation deterministic regardless
    // of any external partitioning of the work.
    for (std::size_t i = 0; i < grid.n_points; ++i) {
        double acc = 0.0;
        for (const auto& line : lines) {
            const double x = out.frequencies_GHz[i] - line.frequency_GHz;
            acc += line.amplitude * (shape.profile == LineProfile::Lorentzian
                                         ? lorentzian_pdf(x, fwhm_GHz)
                                         : gaussian_pdf(x, fwhm_GHz));
        }
        out.intensities[i] = acc;
    }
    return out;
}

SpectrumGrid occupancy_pattern(std::size_t k, const NvParameters& nv,
                               const std::array<HyperfineTensor, 3>& site_tensors,
                               const LineshapeParams& shape, const GridSpec& grid,
                               const OdmrOptions& opts) {
    if (k > 3) throw std::invalid_argument("occupancy_pattern: k must be 0..3");
    nv.validate();
    for (const auto& t : site_tensors) t.validate();

    // All C(3,k) site subsets, enumerated as bitmasks for determinism.
    std::vector<unsigned> subsets;
    for (unsigned mask = 0; mask < 8; ++mask)
        if (static_cast<std::size_t>(__builtin_popcount(mask)) == k) subsets.push_back(mask);

    TransitionOptions topts;
    topts.mixing_threshold = opts.mixing_threshold;

    std::vector<TransitionLine> pattern;
    const double norm = 1.0 / (double(subsets.size()) * double(std::size_t{1} << k));
    for (unsigned mask : subsets) {
        FirstShellConfig shell;
        for (unsigned site = 0; site < 3; ++site)
            if (mask & (1u << site)) shell.occupied_sites.push_back(site_tensors[site]);
        const auto es = eigendecompose(build_hamiltonian(nv, shell));
        for (auto line : transition_lines(es, nv, topts)) {
            if (line.branch != opts.branch) continue;
            line.amplitude *= norm;
            pattern.push_back(line);
        }
    }
    return broaden(pattern, shape, grid, opts.resolution);
}

SpectrumGrid synthesize_odmr(Enrichment enrichment, const NvParameters& nv,
                             const std::array<HyperfineTensor, 3>& site_tensors,
                             const LineshapeParams& shape, const GridSpec& grid,
                             const OdmrOptions& opts) {
    const auto weights = occupancy_weights(enrichment);

    SpectrumGrid out;
    for (std::size_t k = 0; k < 4; ++k) {
        SpectrumGrid pattern = occupancy_pattern(k, nv, site_tensors, shape, grid, opts);
        if (k == 0) {
            out.frequencies_GHz = std::move(pattern.frequencies_GHz);
            out.intensities.assign(out.frequencies_GHz.size(), 0.0);
        }
        for (std::size_t i = 0; i < out.intensities.size(); ++i)
            out.intensities[i] += weights[k] * pattern.intensities[i];
    }
    return out;
}

}  // namespace nvdnp
