#pragma once

#include <cmath>
#include <stdexcept>

#include "nspanel/model.hpp"
#include "nspanel/types.hpp"

namespace nspanel {

// Nuisance-free reparameterization. Within each group the m replicates are
// mapped to m-1 contrast values that are NIID(0, sigma2) under the model
// (replicates are independent with a diagonal covariance), carrying all the
// information about sigma2 and none about the group mean. The recast model
// on the contrasts is a one-parameter simple Normal, whose MLE of sigma2 is
// the mean of squares.

/// Orthonormal Helmert contrast matrix, (m-1) x m. Row j (1-based) is
///
///     ( 1, ..., 1, -j, 0, ..., 0 ) / sqrt(j * (j + 1))
///
/// with j leading ones. Rows are orthonormal and orthogonal to the constant
/// vector; row 1 applied to a group is (x_1t - x_2t) / sqrt(2).
template <typename Scalar = double>
MatrixX<Scalar> helmert_matrix(Index m) {
    if (m < 2) throw std::invalid_argument("helmert_matrix: m must be >= 2");
    MatrixX<Scalar> h = MatrixX<Scalar>::Zero(m - 1, m);
    for (Index j = 1; j < m; ++j) {
        const Scalar scale =
            Scalar(1) / std::sqrt(static_cast<Scalar>(j) * static_cast<Scalar>(j + 1));
        h.row(j - 1).head(j).setConstant(scale);
        h(j - 1, j) = -static_cast<Scalar>(j) * scale;
    }
    return h;
}

/// Contrast values Y_jt, one column per group, (m-1) rows.
struct ContrastSeries {
    Matrix values;  // (m-1) x n
    Index m = 2;    // source replicate count

    Index n() const { return values.cols(); }
    Index n_eff() const { return values.size(); }
};

/// The m = 2 special case: a single row Y_t = (x_1t - x_2t) / sqrt(2).
/// Throws std::invalid_argument for m != 2; use helmert_transform there.
ContrastSeries difference_transform(const PanelData& data);

/// General m >= 2 via the Helmert matrix. For m = 2 the output is
/// bit-identical to difference_transform.
ContrastSeries helmert_transform(const PanelData& data);

struct RecastEstimate {
    double sigma2_hat = 0.0;
    Index n_eff = 0;          // number of contrast values, (m-1) * n
    double crlb = 0.0;        // 2 * sigma2_hat^2 / n_eff, evaluated at the estimate
    bool degenerate = false;  // sigma2_hat == 0
};

/// MLE of sigma2 in the recast model: mean of squared contrasts.
RecastEstimate sigma2_mle_recast(const ContrastSeries& series);

/// Fisher information for sigma2 carried by n_eff contrast values,
/// n_eff / (2 * sigma2^2). Its reciprocal is the CRLB.
double fisher_information_sigma2(double sigma2, Index n_eff);

}  // namespace nspanel
