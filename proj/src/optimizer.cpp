#include "nspanel/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nspanel {

namespace {

struct KernelState {
    Vector residual_colsum;  // rho_t = sum_i (x_it - mu_t)
    double residual_sumsq = 0.0;
    double kernel = 0.0;
};

KernelState evaluate(const ThetaFull& theta, const PanelData& data) {
    KernelState state;
    Matrix residuals = data.values.rowwise() - theta.mu.transpose();
    state.residual_colsum = residuals.colwise().sum().transpose();
    state.residual_sumsq = residuals.squaredNorm();
    const double mn = static_cast<double>(data.m() * data.n());
    state.kernel =
        -0.5 * mn * std::log(theta.sigma2) - state.residual_sumsq / (2.0 * theta.sigma2);
    return state;
}

}  // namespace

ThetaFull default_init(const PanelData& data) {
    ThetaFull init;
    init.mu = group_means(data.values);
    const double mean_all = data.values.mean();
    init.sigma2 = (data.values.array() - mean_all).square().sum() /
                  static_cast<double>(data.values.size());
    if (init.sigma2 <= 0.0) init.sigma2 = 1.0;
    return init;
}

OptimizeResult maximize_naive_likelihood(const PanelData& data, const ThetaFull& init,
                                         const OptimizerConfig& config) {
    if (init.mu.size() != data.n()) {
        throw std::invalid_argument("maximize_naive_likelihood: init dimension mismatch");
    }
    if (!(init.sigma2 > config.min_sigma2)) {
        throw std::invalid_argument(
            "maximize_naive_likelihood: init.sigma2 must exceed min_sigma2");
    }
    if (!(config.step_shrink > 0.0 && config.step_shrink < 1.0)) {
        throw std::invalid_argument("maximize_naive_likelihood: step_shrink must be in (0, 1)");
    }

    const Index n = data.n();
    const double m = static_cast<double>(data.m());
    const double mn = m * static_cast<double>(n);

    OptimizeResult result;
    result.theta = init;

    KernelState state = evaluate(result.theta, data);
    if (config.record_trace) result.kernel_trace.push_back(state.kernel);

    Vector grad(n + 1);
    Vector direction(n + 1);
    for (int iter = 0; iter < config.max_iter; ++iter) {
        const double s = result.theta.sigma2;
        grad.head(n) = state.residual_colsum / s;
        grad[n] = -0.5 * mn / s + state.residual_sumsq / (2.0 * s * s);
        result.final_grad_norm = grad.cwiseAbs().maxCoeff();
        result.iterations = iter;
        if (result.final_grad_norm <= config.grad_tol) {
            result.converged = true;
            result.status = OptimizeStatus::kConverged;
            return result;
        }
        if (s <= 2.0 * config.min_sigma2 && grad[n] < 0.0) {
            result.status = OptimizeStatus::kBoundaryFailure;
            return result;
        }

        // Arrowhead Newton solve: mu block has constant diagonal d, the
        // sigma2 row/column is c_t with scalar corner q.
        const double d = -m / s;
        const double q = 0.5 * mn / (s * s) - state.residual_sumsq / (s * s * s);
        Vector cross = -state.residual_colsum / (s * s);
        const double schur = q - cross.squaredNorm() / d;

        bool newton_ok = schur < 0.0;
        if (newton_ok) {
            const double ds = -(grad[n] - cross.dot(grad.head(n)) / d) / schur;
            direction.head(n) = -(grad.head(n) + cross * ds) / d;
            direction[n] = ds;
            newton_ok = grad.dot(direction) > 0.0;
        }
        if (!newton_ok) {
            // Observed Hessian is not usable as a negative-definite model
            // here; take a Fisher-scoring step (expected information is
            // diagonal: m/s for each mu_t, mn/(2 s^2) for sigma2), which is
            // always an ascent direction.
            direction.head(n) = grad.head(n) * (s / m);
            direction[n] = grad[n] * (2.0 * s * s / mn);
        }

        // Keep sigma2 strictly above the barrier: clip the step so at most
        // 95% of the remaining distance is consumed, then backtrack.
        double alpha = 1.0;
        if (direction[n] < 0.0) {
            alpha = std::min(alpha, 0.95 * (s - config.min_sigma2) / -direction[n]);
        }

        const double slope = grad.dot(direction);
        // Once the predicted gain falls below the kernel's rounding
        // resolution the Armijo comparison is noise; accepting a
        // within-noise tie lets the final full Newton step through instead
        // of stalling one ulp short of the maximizer.
        const double noise =
            8.0 * std::numeric_limits<double>::epsilon() * std::abs(state.kernel);
        ThetaFull candidate;
        candidate.mu.resize(n);
        bool accepted = false;
        KernelState candidate_state;
        for (int shrink = 0; shrink < 80 && alpha > 0.0; ++shrink) {
            candidate.mu = result.theta.mu + alpha * direction.head(n);
            candidate.sigma2 = s + alpha * direction[n];
            candidate_state = evaluate(candidate, data);
            const double required = 1e-4 * alpha * slope;
            if (candidate_state.kernel >= state.kernel + required ||
                (required <= noise && candidate_state.kernel >= state.kernel - noise)) {
                accepted = true;
                break;
            }
            alpha *= config.step_shrink;
        }
        if (!accepted) {
            result.status = (s <= 16.0 * config.min_sigma2 && grad[n] < 0.0)
                                ? OptimizeStatus::kBoundaryFailure
                                : OptimizeStatus::kMaxIterations;
            return result;
        }
        result.theta = candidate;
        state = candidate_state;
        result.iterations = iter + 1;
        if (config.record_trace) result.kernel_trace.push_back(state.kernel);
    }

    // Out of iterations: report the score norm at the final iterate.
    const double s = result.theta.sigma2;
    grad.head(n) = state.residual_colsum / s;
    grad[n] = -0.5 * mn / s + state.residual_sumsq / (2.0 * s * s);
    result.final_grad_norm = grad.cwiseAbs().maxCoeff();
    result.converged = result.final_grad_norm <= config.grad_tol;
    result.status =
        result.converged ? OptimizeStatus::kConverged : OptimizeStatus::kMaxIterations;
    return result;
}

}  // namespace nspanel
