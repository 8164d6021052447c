#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nspanel/likelihood.hpp"
#include "nspanel/types.hpp"

namespace nspanel {

// Damped Newton maximizer for the naive log-likelihood kernel. The Hessian
// is an arrowhead matrix (constant diagonal over the mu block, a cross
// column against sigma2, and a sigma2 scalar), so each Newton solve is O(n)
// via the Schur complement instead of a dense factorization.

struct OptimizerConfig {
    double grad_tol = 1e-9;     // sup-norm stopping threshold on the score
    int max_iter = 200;
    double step_shrink = 0.5;   // backtracking factor, in (0, 1)
    double min_sigma2 = 1e-12;  // hard positivity barrier for sigma2
    bool record_trace = false;  // keep kernel values of accepted iterates
};

enum class OptimizeStatus {
    kConverged,
    kMaxIterations,
    kBoundaryFailure,  // sigma2 driven onto the positivity barrier
};

struct OptimizeResult {
    ThetaFull theta;
    int iterations = 0;
    bool converged = false;
    double final_grad_norm = 0.0;
    OptimizeStatus status = OptimizeStatus::kMaxIterations;
    std::vector<double> kernel_trace;  // init + accepted iterates, if recorded
};

/// Default starting point: group means for mu, overall variance of all
/// cells for sigma2.
ThetaFull default_init(const PanelData& data);

/// Maximizes the kernel from `init`. Accepted iterates never decrease the
/// kernel beyond its rounding resolution (sub-ulp ties are allowed near the
/// maximizer, where exact increase is not measurable); sigma2 is kept above
/// config.min_sigma2 by step clipping. Data with zero within-group
/// variation has its supremum on the boundary and is reported as a boundary
/// failure.
OptimizeResult maximize_naive_likelihood(const PanelData& data, const ThetaFull& init,
                                         const OptimizerConfig& config = {});

/// Central finite differences of a scalar function of ThetaFull, ordered
/// (mu_1, ..., mu_n, sigma2) like the analytic score. Throws
/// std::runtime_error if the function evaluates non-finite.
template <typename F>
Vector finite_diff_gradient(F&& f, const ThetaFull& theta, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_diff_gradient: step must be > 0");
    const Index n = theta.mu.size();
    Vector grad(n + 1);
    auto probe = [&f](const ThetaFull& point) {
        const double value = f(point);
        if (!std::isfinite(value)) {
            throw std::runtime_error("finite_diff_gradient: non-finite function value");
        }
        return value;
    };
    ThetaFull up = theta;
    ThetaFull down = theta;
    for (Index k = 0; k < n; ++k) {
        up.mu[k] = theta.mu[k] + step;
        down.mu[k] = theta.mu[k] - step;
        grad[k] = (probe(up) - probe(down)) / (2.0 * step);
        up.mu[k] = theta.mu[k];
        down.mu[k] = theta.mu[k];
    }
    up.sigma2 = theta.sigma2 + step;
    down.sigma2 = theta.sigma2 - step;
    grad[n] = (probe(up) - probe(down)) / (2.0 * step);
    return grad;
}

}  // namespace nspanel
