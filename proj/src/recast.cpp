#include "nspanel/recast.hpp"

#include <cmath>
#include <string>

namespace nspanel {

ContrastSeries difference_transform(const PanelData& data) {
    if (data.m() != 2) {
        throw std::invalid_argument("difference_transform requires m == 2 (got m = " +
                                    std::to_string(data.m()) + "); use helmert_transform");
    }
    ContrastSeries series;
    series.m = 2;
    series.values = (data.values.row(0) - data.values.row(1)) / std::sqrt(2.0);
    return series;
}

ContrastSeries helmert_transform(const PanelData& data) {
    if (data.m() < 2) throw std::invalid_argument("helmert_transform: m must be >= 2");
    // m == 2 goes through the difference form so the two paths agree
    // bit-exactly; the Helmert row is the same contrast.
    if (data.m() == 2) return difference_transform(data);

    ContrastSeries series;
    series.m = data.m();
    // Centering first changes nothing algebraically (the rows annihilate
    // constants) but keeps the products small, so common-mode magnitude in
    // the data does not leak rounding error into the contrasts.
    const Matrix centered = data.values.rowwise() - data.values.colwise().mean();
    series.values = helmert_matrix<double>(data.m()) * centered;
    return series;
}

RecastEstimate sigma2_mle_recast(const ContrastSeries& series) {
    if (series.values.size() == 0) {
        throw std::invalid_argument("sigma2_mle_recast: empty contrast series");
    }
    RecastEstimate est;
    est.n_eff = series.n_eff();
    est.sigma2_hat = series.values.squaredNorm() / static_cast<double>(est.n_eff);
    est.crlb = 2.0 * est.sigma2_hat * est.sigma2_hat / static_cast<double>(est.n_eff);
    est.degenerate = est.sigma2_hat == 0.0;
    return est;
}

double fisher_information_sigma2(double sigma2, Index n_eff) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("fisher_information_sigma2: sigma2 must be > 0");
    if (n_eff < 1) throw std::invalid_argument("fisher_information_sigma2: n_eff must be >= 1");
    return static_cast<double>(n_eff) / (2.0 * sigma2 * sigma2);
}

}  // namespace nspanel
