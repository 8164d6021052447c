#pragma once

#include <vector>

#include "nspanel/model.hpp"
#include "nspanel/types.hpp"

namespace nspanel {

// Naive full-parameter likelihood: all n group means plus sigma2 enter as
// free parameters, so the parameter count grows with the sample. Kernel
// convention (additive constants dropped):
//
//     lnL(theta; x) = -(m*n/2) * ln(sigma2)
//                     - 1/(2*sigma2) * sum_t sum_i (x_it - mu_t)^2
//
// which at m = 2 is the familiar -n ln(sigma2) - (1/2sigma2) * SS form.
// The full log-density is the kernel minus (m*n/2) * ln(2*pi).

/// Parameter point (mu_1, ..., mu_n, sigma2) for the naive likelihood.
struct ThetaFull {
    Vector mu;
    double sigma2 = 1.0;
};

struct GroupStats {
    double mu_hat = 0.0;  // group sample mean
    double s2 = 0.0;      // within-group mean squared deviation, (1/m) * sum_i (x_it - mu_hat)^2
};

/// Column (group) sample means of an m x n panel.
template <typename Derived>
VectorX<typename Derived::Scalar> group_means(const Eigen::MatrixBase<Derived>& x) {
    return x.colwise().mean().transpose();
}

/// Per-group within sums of squares, sum_i (x_it - xbar_t)^2.
template <typename Derived>
VectorX<typename Derived::Scalar> within_group_sumsq(const Eigen::MatrixBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    MatrixX<Scalar> centered = x.rowwise() - x.colwise().mean();
    return centered.colwise().squaredNorm().transpose();
}

double log_likelihood_kernel(const ThetaFull& theta, const PanelData& data);

double log_density_full(const ThetaFull& theta, const PanelData& data);

/// Gradient of the kernel, ordered (mu_1, ..., mu_n, sigma2).
Vector score(const ThetaFull& theta, const PanelData& data);

/// Second derivatives of the kernel evaluated at theta:
///   d2_mu      = d^2/dmu_t^2           = -m / sigma2          (same for all t)
///   d2_cross_t = d^2/(dsigma2 dmu_t)   = -(1/sigma2^2) * sum_i (x_it - mu_t)
///   d2_sigma2  = d^2/d(sigma2)^2       = (m*n/2)/sigma2^2 - SS/sigma2^3
/// At the closed-form MLE the cross terms vanish and the diagonals reduce to
/// -m/sigma2_hat and -(m*n/2)/sigma2_hat^2.
struct SecondOrderReport {
    double d2_mu = 0.0;
    Vector d2_cross;
    double d2_sigma2 = 0.0;
    double max_abs_cross = 0.0;
    bool stationary = false;  // max_abs_cross within tolerance of 0
    bool is_maximum = false;  // diagonals negative and every per-group
                              // determinant d2_mu * d2_sigma2 - d2_cross_t^2 positive
};

/// Evaluates the second-order maximality conditions. Intended for theta at
/// the closed-form MLE; a theta whose cross terms exceed `cross_tol` is
/// flagged via stationary = false rather than silently accepted.
SecondOrderReport second_order_check(const ThetaFull& theta, const PanelData& data,
                                     double cross_tol = 1e-8);

struct ClosedFormMle {
    ThetaFull theta;
    std::vector<GroupStats> groups;
    bool degenerate = false;  // sigma2_hat == 0 (all replicates identical in every group)
};

/// Closed-form maximizer: mu_hat_t = group mean, sigma2_hat = (1/(m*n)) *
/// total within sum of squares = mean over t of the GroupStats s2 values.
/// A degenerate sigma2_hat of 0 is returned flagged; likelihood evaluation
/// at sigma2 = 0 is rejected downstream.
ClosedFormMle mle_closed_form(const PanelData& data);

}  // namespace nspanel
