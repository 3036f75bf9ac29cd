#pragma once

namespace nvdnp {

// CODATA 2018 exact values.
inline constexpr double kPlanckJs = 6.62607015e-34;
inline constexpr double kBoltzmannJPerK = 1.380649e-23;

// Ground-state NV- defaults. Together with B = 0.472 T these place the
// m_s = 0 -> +1 / -1 transitions at 16.098 / 10.358 GHz and the 13C Larmor
// frequency at 5.054 MHz.
inline constexpr double kDefaultZeroFieldSplittingGHz = 2.870;
inline constexpr double kDefaultGammaElectronGHzPerT = 28.025;
inline constexpr double kDefaultGammaC13MHzPerT = 10.708;

}  // namespace nvdnp
