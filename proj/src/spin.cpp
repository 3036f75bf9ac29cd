#include "nvdnp/spin.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>

namespace nvdnp {
namespace {

using Mat = Eigen::MatrixXcd;
using Cplx = std::complex<double>;

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Spin-1 operators in the (m_s = +1, 0, -1) basis.
Mat spin1_z() {
    Mat m = Mat::Zero(3, 3);
    m(0, 0) = 1.0;
    m(2, 2) = -1.0;
    return m;
}

Mat spin1_x() {
    Mat m = Mat::Zero(3, 3);
    m(0, 1) = m(1, 0) = m(1, 2) = m(2, 1) = kInvSqrt2;
    return m;
}

Mat spin1_y() {
    Mat m = Mat::Zero(3, 3);
    const Cplx i{0.0, 1.0};
    m(0, 1) = -i * kInvSqrt2;
    m(1, 0) = i * kInvSqrt2;
    m(1, 2) = -i * kInvSqrt2;
    m(2, 1) = i * kInvSqrt2;
    return m;
}

// Spin-1/2 operators in the (up, down) basis.
Mat half_x() {
    Mat m = Mat::Zero(2, 2);
    m(0, 1) = m(1, 0) = 0.5;
    return m;
}

Mat half_y() {
    Mat m = Mat::Zero(2, 2);
    m(0, 1) = Cplx{0.0, -0.5};
    m(1, 0) = Cplx{0.0, 0.5};
    return m;
}

Mat half_z() {
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = 0.5;
    m(1, 1) = -0.5;
    return m;
}

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Lift a single-site spin-1/2 operator onto the full nuclear register.
// Bit j of the basis index holds the state of site j (0 = up, 1 = down).
Mat embed_site(const Mat& op, std::size_t site, std::size_t k) {
    const std::size_t dn = std::size_t{1} << k;
    Mat out = Mat::Zero(dn, dn);
    for (std::size_t n = 0; n < dn; ++n) {
        const std::size_t s = (n >> site) & 1u;
        for (std::size_t sp = 0; sp < 2; ++sp) {
            const std::size_t np = (n & ~(std::size_t{1} << site)) | (sp << site);
            out(np, n) += op(sp, s);
        }
    }
    return out;
}

int ms_of_electron_index(std::size_t e) { return e == 0 ? 1 : (e == 1 ? 0 : -1); }

void require_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be finite");
}

}  // namespace

void NvParameters::validate() const {
    require_finite(D_GHz, "NvParameters::D_GHz");
    require_finite(gamma_e_GHz_per_T, "NvParameters::gamma_e_GHz_per_T");
    require_finite(gamma_n_MHz_per_T, "NvParameters::gamma_n_MHz_per_T");
    require_finite(B_T, "NvParameters::B_T");
    require_finite(theta_rad, "NvParameters::theta_rad");
    if (D_GHz <= 0.0) throw std::invalid_argument("NvParameters::D_GHz must be positive");
    if (gamma_e_GHz_per_T <= 0.0)
        throw std::invalid_argument("NvParameters::gamma_e_GHz_per_T must be positive");
    if (gamma_n_MHz_per_T <= 0.0)
        throw std::invalid_argument("NvParameters::gamma_n_MHz_per_T must be positive");
    if (B_T < 0.0) throw std::invalid_argument("NvParameters::B_T must be non-negative");
}

HyperfineTensor HyperfineTensor::axial(double A_par_MHz, double A_perp_MHz,
                                       const Eigen::Vector3d& axis) {
    require_finite(A_par_MHz, "HyperfineTensor A_par");
    require_finite(A_perp_MHz, "HyperfineTensor A_perp");
    const double len = axis.norm();
    if (!(len > 0.0) || !std::isfinite(len))
        throw std::invalid_argument("HyperfineTensor::axial: symmetry axis must be non-zero");
    const Eigen::Vector3d n = axis / len;
    HyperfineTensor t;
    t.A_MHz = A_perp_MHz * Eigen::Matrix3d::Identity();
    const double d = A_par_MHz - A_perp_MHz;
    // Assemble each off-diagonal pair from one product so the matrix is
    // symmetric bit for bit, not just up to rounding.
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            const double v = d * (n(i) * n(j));
            t.A_MHz(i, j) += v;
            if (i != j) t.A_MHz(j, i) += v;
        }
    return t;
}

HyperfineTensor HyperfineTensor::secular(double Azz_MHz) {
    require_finite(Azz_MHz, "HyperfineTensor Azz");
    HyperfineTensor t;
    t.A_MHz(2, 2) = Azz_MHz;
    return t;
}

void HyperfineTensor::validate() const {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (!std::isfinite(A_MHz(i, j)))
                throw std::invalid_argument("HyperfineTensor: entries must be finite");
            if (A_MHz(i, j) != A_MHz(j, i))
                throw std::invalid_argument("HyperfineTensor: tensor must be symmetric");
        }
}

void FirstShellConfig::validate() const {
    if (occupied_sites.size() > 3)
        throw std::invalid_argument(
            "FirstShellConfig: at most 3 first-shell sites can be occupied, got " +
            std::to_string(occupied_sites.size()));
    for (const auto& site : occupied_sites) site.validate();
}

HamiltonianMatrix build_hamiltonian(const NvParameters& nv, const FirstShellConfig& shell) {
    nv.validate();
    shell.validate();

    const std::size_t k = shell.occupancy();
    const std::size_t dn = std::size_t{1} << k;
    const std::size_t dim = 3 * dn;

    const Mat Sx = spin1_x();
    const Mat Sy = spin1_y();
    const Mat Sz = spin1_z();
    const Mat Ie = Mat::Identity(3, 3);
    const Mat In = Mat::Identity(static_cast<Eigen::Index>(dn), static_cast<Eigen::Index>(dn));

    // Field in the NV frame; theta tilts it within the xz plane.
    const double bx = nv.B_T * std::sin(nv.theta_rad);
    const double bz = nv.B_T * std::cos(nv.theta_rad);

    Mat H = Mat::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    H += nv.D_GHz * kron(Sz * Sz, In);
    H += nv.gamma_e_GHz_per_T * (bx * kron(Sx, In) + bz * kron(Sz, In));

    const double gn_GHz_per_T = nv.gamma_n_MHz_per_T * 1e-3;
    const Mat* S_ops[3] = {&Sx, &Sy, &Sz};
    for (std::size_t j = 0; j < k; ++j) {
        const Mat I_ops[3] = {embed_site(half_x(), j, k), embed_site(half_y(), j, k),
                              embed_site(half_z(), j, k)};
        const Eigen::Matrix3d& A = shell.occupied_sites[j].A_MHz;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                if (A(a, b) == 0.0) continue;
                H += (A(a, b) * 1e-3) * kron(*S_ops[a], I_ops[b]);
            }
        H -= gn_GHz_per_T * (bx * kron(Ie, I_ops[0]) + bz * kron(Ie, I_ops[2]));
    }

    HamiltonianMatrix out;
    out.H_GHz = std::move(H);
    out.occupancy = k;
    out.basis.reserve(dim);
    for (std::size_t e = 0; e < 3; ++e)
        for (unsigned n = 0; n < dn; ++n)
            out.basis.push_back(BasisState{ms_of_electron_index(e), n});
    return out;
}

EigenSystem eigendecompose(const HamiltonianMatrix& h) {
    const Mat& H = h.H_GHz;
    if (H.rows() == 0 || H.rows() != H.cols())
        throw std::invalid_argument("eigendecompose: matrix must be square and non-empty");
    if (h.basis.size() != static_cast<std::size_t>(H.rows()))
        throw std::invalid_argument("eigendecompose: basis labels do not match matrix dimension");
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument("eigendecompose: matrix is not Hermitian");

    Eigen::SelfAdjointEigenSolver<Mat> solver(H);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigendecompose: eigensolver failed to converge");

    EigenSystem out;
    out.values_GHz = solver.eigenvalues();
    out.vectors = solver.eigenvectors();
    out.basis = h.basis;
    out.occupancy = h.occupancy;
    return out;
}

std::vector<TransitionLine> transition_lines(const EigenSystem& es, const NvParameters& nv,
                                             const TransitionOptions& opts) {
    nv.validate();
    if (!(opts.mixing_threshold > 0.0) || opts.mixing_threshold > 1.0)
        throw std::invalid_argument("transition_lines: mixing_threshold must lie in (0, 1]");
    const Eigen::Index dim = es.vectors.rows();
    if (dim == 0 || es.vectors.cols() != dim || es.values_GHz.size() != dim ||
        es.basis.size() != static_cast<std::size_t>(dim))
        throw std::invalid_argument("transition_lines: inconsistent eigensystem");
    const std::size_t dn = std::size_t{1} << es.occupancy;
    if (static_cast<std::size_t>(dim) != 3 * dn)
        throw std::invalid_argument("transition_lines: dimension does not match occupancy");

    // Label every eigenstate by its dominant m_s weight. Iterating m_s in
    // ascending order keeps ties resolved toward the lower manifold.
    std::vector<int> label(static_cast<std::size_t>(dim));
    std::vector<int> ambiguous;
    for (Eigen::Index c = 0; c < dim; ++c) {
        double weight[3] = {0.0, 0.0, 0.0};  // index by m_s + 1
        for (Eigen::Index r = 0; r < dim; ++r)
            weight[es.basis[static_cast<std::size_t>(r)].m_s + 1] += std::norm(es.vectors(r, c));
        int best_ms = -1;
        double best_w = weight[0];
        for (int ms = 0; ms <= 1; ++ms)
            if (weight[ms + 1] > best_w) {
                best_w = weight[ms + 1];
                best_ms = ms;
            }
        if (best_w < opts.mixing_threshold) ambiguous.push_back(static_cast<int>(c));
        label[static_cast<std::size_t>(c)] = best_ms;
    }
    if (!ambiguous.empty()) {
        std::string msg = "transition_lines: manifold assignment ambiguous for eigenstates {";
        for (std::size_t i = 0; i < ambiguous.size(); ++i) {
            if (i) msg += ", ";
            msg += std::to_string(ambiguous[i]);
        }
        msg += "}: dominant m_s weight below threshold " + std::to_string(opts.mixing_threshold);
        throw AmbiguousBranchError(msg, std::move(ambiguous));
    }

    // Sx lifted to the full space, for transition amplitudes.
    const Mat Sx_full = kron(spin1_x(), Mat::Identity(static_cast<Eigen::Index>(dn),
                                                      static_cast<Eigen::Index>(dn)));

    std::vector<TransitionLine> lines;
    lines.reserve(2 * dn * dn);
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (label[static_cast<std::size_t>(i)] != 0) continue;
        const Eigen::VectorXcd driven = Sx_full * es.vectors.col(i);
        for (Eigen::Index f = 0; f < dim; ++f) {
            const int ms_f = label[static_cast<std::size_t>(f)];
            if (ms_f == 0) continue;
            const double overlap = std::norm(es.vectors.col(f).dot(driven));
            TransitionLine line;
            line.frequency_GHz = std::abs(es.values_GHz(f) - es.values_GHz(i));
            line.amplitude = 2.0 * overlap;
            line.branch = ms_f > 0 ? Branch::ToPlusOne : Branch::ToMinusOne;
            line.occupancy = es.occupancy;
            lines.push_back(line);
        }
    }

    std::sort(lines.begin(), lines.end(), [](const TransitionLine& a, const TransitionLine& b) {
        if (a.branch != b.branch) return a.branch < b.branch;
        return a.frequency_GHz < b.frequency_GHz;
    });
    return lines;
}

}  // namespace nvdnp
