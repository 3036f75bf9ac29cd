#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>

namespace nvdnp {

// Numerical failure during a fit (non-convergence, rank-deficient
// covariance). Domain errors on inputs throw std::invalid_argument instead.
class FitError : public std::runtime_error {
  public:
    FitError(const std::string& msg, double residual_norm_in = 0.0, int iterations_in = 0)
        : std::runtime_error(msg), residual_norm(residual_norm_in), iterations(iterations_in) {}
    double residual_norm;
    int iterations;
};

// One fitted parameter with its 95% confidence interval.
struct ParamEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct CurveFit {
    Eigen::VectorXd params;
    Eigen::VectorXd std_errors;
    Eigen::VectorXd ci_low;
    Eigen::VectorXd ci_high;
    double residual_norm = 0.0;  // sqrt of the sum of squared residuals
    int iterations = 0;
    int dof = 0;

    ParamEstimate estimate(Eigen::Index i) const {
        return {params(i), std_errors(i), ci_low(i), ci_high(i)};
    }
};

// Evaluate the model at p: fill y(p) (size fixed by the data) and, when J is
// non-null, the Jacobian dy/dp (rows = points, cols = params).
using ModelFn =
    std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& y, Eigen::MatrixXd* J)>;

struct LmOptions {
    int max_iterations = 200;
    double ftol = 1e-14;      // relative decrease of the squared residual
    double xtol = 1e-12;      // relative step size
    double lambda_init = 1e-3;
    double confidence = 0.95;
};

// Damped least squares over a user model with analytic Jacobian. Confidence
// intervals come from the linearized covariance s^2 (J^T J)^{-1} with a
// Student-t quantile at n - p degrees of freedom.
CurveFit lm_fit(const ModelFn& model, const Eigen::VectorXd& p0, const Eigen::VectorXd& y_obs,
                const LmOptions& opts = {});

// 95% (or opts-level) two-sided t quantile helper shared by the fitters.
double t_quantile(int dof, double confidence);

}  // namespace nvdnp
