#include "nspanel/likelihood.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nspanel {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void validate_theta(const ThetaFull& theta, const PanelData& data) {
    if (theta.mu.size() != data.n()) {
        throw std::invalid_argument("theta.mu has length " + std::to_string(theta.mu.size()) +
                                    ", panel has n = " + std::to_string(data.n()) + " groups");
    }
    if (!(theta.sigma2 > 0.0) || !std::isfinite(theta.sigma2)) {
        throw std::invalid_argument("theta.sigma2 must be a positive finite real");
    }
}

/// Total sum of squares sum_t sum_i (x_it - mu_t)^2 at the candidate means.
double residual_sumsq(const ThetaFull& theta, const PanelData& data) {
    return (data.values.rowwise() - theta.mu.transpose()).squaredNorm();
}

}  // namespace

double log_likelihood_kernel(const ThetaFull& theta, const PanelData& data) {
    validate_theta(theta, data);
    const double mn = static_cast<double>(data.m() * data.n());
    return -0.5 * mn * std::log(theta.sigma2) - residual_sumsq(theta, data) / (2.0 * theta.sigma2);
}

double log_density_full(const ThetaFull& theta, const PanelData& data) {
    const double mn = static_cast<double>(data.m() * data.n());
    return log_likelihood_kernel(theta, data) - 0.5 * mn * kLog2Pi;
}

Vector score(const ThetaFull& theta, const PanelData& data) {
    validate_theta(theta, data);
    const Index n = data.n();
    const double mn = static_cast<double>(data.m() * n);
    const double s2 = theta.sigma2;

    Matrix residuals = data.values.rowwise() - theta.mu.transpose();
    Vector grad(n + 1);
    grad.head(n) = residuals.colwise().sum().transpose() / s2;
    grad[n] = -0.5 * mn / s2 + residuals.squaredNorm() / (2.0 * s2 * s2);
    return grad;
}

SecondOrderReport second_order_check(const ThetaFull& theta, const PanelData& data,
                                     double cross_tol) {
    validate_theta(theta, data);
    const double m = static_cast<double>(data.m());
    const double mn = static_cast<double>(data.m() * data.n());
    const double s2 = theta.sigma2;
    const double s4 = s2 * s2;

    Matrix residuals = data.values.rowwise() - theta.mu.transpose();

    SecondOrderReport report;
    report.d2_mu = -m / s2;
    report.d2_cross = -residuals.colwise().sum().transpose() / s4;
    report.d2_sigma2 = 0.5 * mn / s4 - residuals.squaredNorm() / (s4 * s2);
    report.max_abs_cross = report.d2_cross.cwiseAbs().maxCoeff();
    report.stationary = report.max_abs_cross <= cross_tol;

    bool determinants_positive = true;
    for (Index t = 0; t < data.n(); ++t) {
        const double det = report.d2_mu * report.d2_sigma2 - report.d2_cross[t] * report.d2_cross[t];
        if (!(det > 0.0)) determinants_positive = false;
    }
    report.is_maximum = report.d2_mu < 0.0 && report.d2_sigma2 < 0.0 && determinants_positive;
    return report;
}

ClosedFormMle mle_closed_form(const PanelData& data) {
    const Index n = data.n();
    const double m = static_cast<double>(data.m());

    ClosedFormMle result;
    result.theta.mu = group_means(data.values);
    Vector wss = within_group_sumsq(data.values);

    result.groups.resize(static_cast<std::size_t>(n));
    for (Index t = 0; t < n; ++t) {
        result.groups[static_cast<std::size_t>(t)] = GroupStats{result.theta.mu[t], wss[t] / m};
    }
    result.theta.sigma2 = wss.sum() / (m * static_cast<double>(n));
    result.degenerate = result.theta.sigma2 == 0.0;
    return result;
}

}  // namespace nspanel
