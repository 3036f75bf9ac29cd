#include "nvdnp/fit.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

namespace nvdnp {

double t_quantile(int dof, double confidence) {
    if (dof < 1) throw FitError("confidence intervals need at least 1 residual degree of freedom");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("confidence level must lie in (0, 1)");
    boost::math::students_t_distribution<double> dist(static_cast<double>(dof));
    return boost::math::quantile(dist, 0.5 * (1.0 + confidence));
}

CurveFit lm_fit(const ModelFn& model, const Eigen::VectorXd& p0, const Eigen::VectorXd& y_obs,
                const LmOptions& opts) {
    const Eigen::Index n = y_obs.size();
    const Eigen::Index np = p0.size();
    if (np == 0) throw std::invalid_argument("lm_fit: no parameters to fit");
    if (n <= np)
        throw std::invalid_argument("lm_fit: need more data points than parameters");
    if (!p0.allFinite() || !y_obs.allFinite())
        throw std::invalid_argument("lm_fit: inputs must be finite");

    Eigen::VectorXd p = p0;
    Eigen::VectorXd y(n);
    Eigen::MatrixXd J(n, np);

    auto evaluate = [&](const Eigen::VectorXd& at, Eigen::VectorXd& y_out,
                        Eigen::MatrixXd* J_out) {
        model(at, y_out, J_out);
        if (y_out.size() != n) throw FitError("lm_fit: model output size mismatch");
        if (!y_out.allFinite() || (J_out && !J_out->allFinite()))
            throw FitError("lm_fit: model produced non-finite values");
    };

    evaluate(p, y, &J);
    Eigen::VectorXd r = y - y_obs;
    double ssr = r.squaredNorm();
    double lambda = opts.lambda_init;
    bool converged = false;
    int iter = 0;

    for (; iter < opts.max_iterations; ++iter) {
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;

        bool stepped = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            Eigen::MatrixXd damped = JtJ;
            for (Eigen::Index k = 0; k < np; ++k)
                damped(k, k) += lambda * std::max(JtJ(k, k), 1e-300);
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 4.0;
                continue;
            }
            const Eigen::VectorXd p_try = p + step;
            Eigen::VectorXd y_try(n);
            evaluate(p_try, y_try, nullptr);
            const double ssr_try = (y_try - y_obs).squaredNorm();
            if (ssr_try <= ssr) {
                const double rel_step = step.cwiseQuotient(
                                                p.cwiseAbs().cwiseMax(1e-12))
                                            .cwiseAbs()
                                            .maxCoeff();
                const double drop = ssr - ssr_try;
                p = p_try;
                evaluate(p, y, &J);
                r = y - y_obs;
                ssr = ssr_try;
                lambda = std::max(lambda / 3.0, 1e-14);
                stepped = true;
                if (drop <= opts.ftol * std::max(ssr, 1e-300) || rel_step <= opts.xtol)
                    converged = true;
                break;
            }
            lambda *= 4.0;
        }
        if (converged) break;
        if (!stepped) {
            // No downhill step found at any damping: either at a minimum
            // (small gradient) or genuinely stuck.
            if (g.cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, std::sqrt(ssr))) {
                converged = true;
                break;
            }
            throw FitError("lm_fit: no acceptable step found (residual norm " +
                               std::to_string(std::sqrt(ssr)) + " after " + std::to_string(iter) +
                               " iterations)",
                           std::sqrt(ssr), iter);
        }
    }
    if (!converged)
        throw FitError("lm_fit: did not converge within " + std::to_string(opts.max_iterations) +
                           " iterations (residual norm " + std::to_string(std::sqrt(ssr)) + ")",
                       std::sqrt(ssr), iter);

    CurveFit out;
    out.params = p;
    out.residual_norm = std::sqrt(ssr);
    out.iterations = iter;
    out.dof = static_cast<int>(n - np);

    const Eigen::MatrixXd JtJ = J.transpose() * J;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(JtJ);
    if (!lu.isInvertible())
        throw FitError("lm_fit: rank-deficient covariance (J^T J singular at the solution)",
                       out.residual_norm, iter);
    const double s2 = ssr / double(out.dof);
    const Eigen::MatrixXd cov = s2 * lu.inverse();

    const double tq = t_quantile(out.dof, opts.confidence);
    out.std_errors.resize(np);
    out.ci_low.resize(np);
    out.ci_high.resize(np);
    for (Eigen::Index k = 0; k < np; ++k) {
        out.std_errors(k) = std::sqrt(std::max(cov(k, k), 0.0));
        out.ci_low(k) = p(k) - tq * out.std_errors(k);
        out.ci_high(k) = p(k) + tq * out.std_errors(k);
    }
    return out;
}

}  // namespace nvdnp
