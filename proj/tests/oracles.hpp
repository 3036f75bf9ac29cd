#pragma once

// Reference implementations the test suite checks the library against.
// Everything in this header is derived independently of src/: closed-form
// first-order expressions and direct enumeration, no matrix diagonalization.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nvdnp/spin.hpp"

namespace oracle {

struct Line {
    double frequency_GHz = 0.0;
    double amplitude = 0.0;
};

// First-order treatment of the aligned-field Hamiltonian
//   H = D Sz^2 + ge B Sz + sum_j (S.A_j.I_j - gn B.I_j)
// valid when the hyperfine couplings are small against the electron
// detuning. Within the electron manifold m_s each nucleus j sees the
// effective field (in GHz, treating spins as dimensionless)
//   h_j(m_s) = 1e-3 * (m_s A_zx, m_s A_zy, m_s A_zz - gn B)
// whose eigenlevels are +/- |h_j|/2. Transition amplitudes factor into the
// bare electronic weight (1 per branch, matching the library's scaling
// where the k = 0 line has amplitude 1) times a product of spin-1/2
// overlaps between the nuclear quantization axes of the two manifolds:
// cos^2(delta/2) for a preserved level index, sin^2(delta/2) for a flip,
// with delta the angle between h_j(m_s) and h_j(0).
inline std::vector<Line> perturbative_lines(const nvdnp::NvParameters& nv,
                                            const std::vector<Eigen::Matrix3d>& tensors_MHz,
                                            int branch_ms) {
    const std::size_t k = tensors_MHz.size();
    const double gnB_GHz = nv.gamma_n_MHz_per_T * nv.B_T * 1e-3;
    const double f_electron = nv.D_GHz + nv.gamma_e_GHz_per_T * nv.B_T * double(branch_ms);

    std::vector<Eigen::Vector3d> h0(k), h1(k);
    std::vector<double> cos_delta(k);
    for (std::size_t j = 0; j < k; ++j) {
        const Eigen::Matrix3d& A = tensors_MHz[j];
        h0[j] = Eigen::Vector3d(0.0, 0.0, -gnB_GHz);
        h1[j] = Eigen::Vector3d(double(branch_ms) * A(2, 0) * 1e-3,
                                double(branch_ms) * A(2, 1) * 1e-3,
                                double(branch_ms) * A(2, 2) * 1e-3 - gnB_GHz);
        const double n0 = h0[j].norm();
        const double n1 = h1[j].norm();
        // A vanishing effective field leaves the axis undefined; callers keep
        // B > 0 so this only guards pathological inputs.
        cos_delta[j] = (n0 > 0.0 && n1 > 0.0) ? h0[j].dot(h1[j]) / (n0 * n1) : 1.0;
    }

    const std::size_t dn = std::size_t{1} << k;
    std::vector<Line> lines;
    lines.reserve(dn * dn);
    for (std::size_t s0 = 0; s0 < dn; ++s0) {
        double e0 = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            e0 += ((s0 >> j) & 1u ? -0.5 : 0.5) * h0[j].norm();
        for (std::size_t s1 = 0; s1 < dn; ++s1) {
            double e1 = f_electron;
            double amp = 1.0;
            for (std::size_t j = 0; j < k; ++j) {
                e1 += ((s1 >> j) & 1u ? -0.5 : 0.5) * h1[j].norm();
                const bool same = ((s0 >> j) & 1u) == ((s1 >> j) & 1u);
                amp *= same ? 0.5 * (1.0 + cos_delta[j]) : 0.5 * (1.0 - cos_delta[j]);
            }
            lines.push_back({std::abs(e1 - e0), amp});
        }
    }
    return lines;
}

// Merge lines whose centers sit within tol of each other, dropping clusters
// of negligible total weight. Positions are amplitude-weighted means.
struct Cluster {
    double frequency_GHz = 0.0;
    double amplitude = 0.0;
};

inline std::vector<Cluster> cluster_lines(std::vector<Line> lines, double tol_GHz,
                                          double amplitude_floor = 1e-9) {
    std::sort(lines.begin(), lines.end(),
              [](const Line& a, const Line& b) { return a.frequency_GHz < b.frequency_GHz; });
    std::vector<Cluster> out;
    double weighted_f = 0.0, weight = 0.0, last_f = 0.0;
    auto flush = [&] {
        if (weight > amplitude_floor) out.push_back({weighted_f / weight, weight});
        weighted_f = weight = 0.0;
    };
    for (const Line& line : lines) {
        if (line.amplitude <= amplitude_floor) continue;
        if (weight > 0.0 && line.frequency_GHz - last_f > tol_GHz) flush();
        weighted_f += line.amplitude * line.frequency_GHz;
        weight += line.amplitude;
        last_f = line.frequency_GHz;
    }
    flush();
    return out;
}

inline std::vector<Line> to_lines(const std::vector<nvdnp::TransitionLine>& lines,
                                  nvdnp::Branch branch) {
    std::vector<Line> out;
    for (const auto& l : lines)
        if (l.branch == branch) out.push_back({l.frequency_GHz, l.amplitude});
    return out;
}

inline double span_of(const std::vector<Cluster>& clusters) {
    if (clusters.size() < 2) return 0.0;
    return clusters.back().frequency_GHz - clusters.front().frequency_GHz;
}

}  // namespace oracle
