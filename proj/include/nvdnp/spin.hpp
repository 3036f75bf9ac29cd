#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "nvdnp/constants.hpp"

namespace nvdnp {

// Static parameters of the NV- electron spin and the applied field.
// theta_rad is the angle between the field and the NV symmetry axis (z).
struct NvParameters {
    double D_GHz = kDefaultZeroFieldSplittingGHz;
    double gamma_e_GHz_per_T = kDefaultGammaElectronGHzPerT;
    double gamma_n_MHz_per_T = kDefaultGammaC13MHzPerT;
    double B_T = 0.472;
    double theta_rad = 0.0;

    void validate() const;

    // 13C Larmor frequency at this field.
    double nuclear_larmor_MHz() const { return gamma_n_MHz_per_T * B_T; }
};

// Hyperfine coupling tensor of one first-shell 13C site, expressed in the
// NV frame, in MHz. Must be exactly symmetric.
struct HyperfineTensor {
    Eigen::Matrix3d A_MHz = Eigen::Matrix3d::Zero();

    // Axially symmetric tensor A_perp*1 + (A_par - A_perp) n n^T with unit
    // symmetry axis n.
    static HyperfineTensor axial(double A_par_MHz, double A_perp_MHz,
                                 const Eigen::Vector3d& axis);

    // Pure S_z I_z coupling of strength Azz; the secular limit used by
    // reference patterns and tests.
    static HyperfineTensor secular(double Azz_MHz);

    void validate() const;
};

// Occupation of the three nearest-neighbour carbon sites: 0 to 3 entries.
struct FirstShellConfig {
    std::vector<HyperfineTensor> occupied_sites;

    std::size_t occupancy() const { return occupied_sites.size(); }
    void validate() const;
};

// Basis label for one product state: electron projection and the nuclear
// spin configuration packed as bits (bit j set means site j is spin-down).
struct BasisState {
    int m_s;                // +1, 0, -1
    unsigned nuclear_bits;  // 0 .. 2^k - 1
};

struct HamiltonianMatrix {
    Eigen::MatrixXcd H_GHz;  // Hermitian, dimension 3 * 2^k
    std::vector<BasisState> basis;
    std::size_t occupancy = 0;
};

// Full (non-secular) coupled Hamiltonian in GHz:
//   H = D Sz^2 + gamma_e B.S + sum_j ( S.A_j.I_j - gamma_n B.I_j )
// with B = B (sin theta, 0, cos theta).
HamiltonianMatrix build_hamiltonian(const NvParameters& nv, const FirstShellConfig& shell);

struct EigenSystem {
    Eigen::VectorXd values_GHz;  // ascending
    Eigen::MatrixXcd vectors;    // orthonormal columns, same order
    std::vector<BasisState> basis;
    std::size_t occupancy = 0;
};

// Dense Hermitian diagonalization. Throws std::invalid_argument if the
// input is non-Hermitian beyond 1e-10 relative.
EigenSystem eigendecompose(const HamiltonianMatrix& h);

enum class Branch { ToPlusOne, ToMinusOne };

// One ESR line. Amplitudes are scaled so the bare (k = 0) transition has
// amplitude 1; summed per branch over all transitions they equal the
// m_s = 0 manifold dimension 2^k.
struct TransitionLine {
    double frequency_GHz;
    double amplitude;
    Branch branch;
    std::size_t occupancy;
};

struct TransitionOptions {
    // Minimum weight of the dominant m_s component required to label an
    // eigenstate. Below this the manifold assignment is ambiguous.
    double mixing_threshold = 0.5;
};

class AmbiguousBranchError : public std::runtime_error {
  public:
    AmbiguousBranchError(const std::string& msg, std::vector<int> indices)
        : std::runtime_error(msg), state_indices(std::move(indices)) {}
    std::vector<int> state_indices;
};

// Enumerate m_s = 0 -> +/-1 lines with |<f|Sx|i>|^2 amplitudes, initial
// population confined to the m_s = 0 manifold. Eigenstates are assigned to
// manifolds by their dominant m_s weight (ties broken toward lower m_s).
std::vector<TransitionLine> transition_lines(const EigenSystem& es, const NvParameters& nv,
                                             const TransitionOptions& opts = {});

}  // namespace nvdnp
