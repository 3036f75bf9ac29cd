#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "nvdnp/spin.hpp"

namespace nvdnp {

// 13C fraction of the carbon lattice.
struct Enrichment {
    double p = 0.011;
    void validate() const;
};

enum class LineProfile { Lorentzian, Gaussian };

struct LineshapeParams {
    LineProfile profile = LineProfile::Lorentzian;
    double fwhm_MHz = 8.0;
    void validate() const;
};

// Uniform frequency grid specification, inclusive of both endpoints.
struct GridSpec {
    double f_min_GHz = 0.0;
    double f_max_GHz = 0.0;
    std::size_t n_points = 0;
    void validate() const;
    double spacing_GHz() const;
};

struct SpectrumGrid {
    std::vector<double> frequencies_GHz;  // strictly ascending
    std::vector<double> intensities;      // same length, finite
    void validate() const;
};

// What to do when the grid resolves a fwhm with fewer than 5 points.
enum class GridResolutionPolicy { Error, Warn };

// Probability of finding k = 0..3 of the three nearest-neighbour carbon
// sites occupied by 13C: C(3,k) p^k (1-p)^(3-k).
std::array<double, 4> occupancy_weights(Enrichment enrichment);

// Sum of unit-area profiles, one per line, scaled by the line amplitudes.
// Requires the grid to cover every line center by at least 3 fwhm on each
// side. An empty line list returns an all-zero spectrum.
SpectrumGrid broaden(const std::vector<TransitionLine>& lines, const LineshapeParams& shape,
                     const GridSpec& grid, GridResolutionPolicy policy = GridResolutionPolicy::Error);

struct OdmrOptions {
    // The composite is built from one ESR branch; Fig-2b-style spectra show
    // the upper (0 -> +1) transition.
    Branch branch = Branch::ToPlusOne;
    double mixing_threshold = 0.5;
    GridResolutionPolicy resolution = GridResolutionPolicy::Error;
};

// Composite ODMR spectrum at enrichment p. Occupancy patterns k = 0..3 are
// averaged over the C(3,k) site subsets drawn from site_tensors, weighted
// binomially, and each pattern is normalized to unit area per branch
// (uniform nuclear populations over its 2^k initial states).
SpectrumGrid synthesize_odmr(Enrichment enrichment, const NvParameters& nv,
                             const std::array<HyperfineTensor, 3>& site_tensors,
                             const LineshapeParams& shape, const GridSpec& grid,
                             const OdmrOptions& opts = {});

// Single-occupancy pattern (already subset-averaged and unit-normalized);
// building block of synthesize_odmr, exposed for decomposition work.
SpectrumGrid occupancy_pattern(std::size_t k, const NvParameters& nv,
                               const std::array<HyperfineTensor, 3>& site_tensors,
                               const LineshapeParams& shape, const GridSpec& grid,
                               const OdmrOptions& opts = {});

}  // namespace nvdnp
