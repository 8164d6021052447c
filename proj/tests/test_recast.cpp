#include <cmath>
#include <random>
#include <stdexcept>

#include <doctest.h>

#include "nspanel/likelihood.hpp"
#include "nspanel/model.hpp"
#include "nspanel/recast.hpp"

using namespace nspanel;

namespace {

PanelData panel_from(Matrix values) {
    PanelData data;
    data.spec.m = values.rows();
    data.spec.n = values.cols();
    data.spec.sigma2 = 1.0;
    data.spec.mu = Vector::Zero(values.cols());
    data.values = std::move(values);
    return data;
}

}  // namespace

TEST_CASE("difference transform hand values") {
    Matrix x(2, 3);
    x << 3.0, 1.0, 5.0,
         1.0, 1.0, 9.0;
    const ContrastSeries series = difference_transform(panel_from(x));
    REQUIRE(series.values.rows() == 1);
    REQUIRE(series.values.cols() == 3);
    CHECK(series.values(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(series.values(0, 1) == 0.0);
    CHECK(series.values(0, 2) == doctest::Approx(-4.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(series.m == 2);
    CHECK(series.n() == 3);
    CHECK(series.n_eff() == 3);
}

TEST_CASE("difference transform requires m == 2") {
    Matrix x = Matrix::Zero(3, 2);
    CHECK_THROWS_AS(difference_transform(panel_from(x)), std::invalid_argument);
}

TEST_CASE("helmert matrix rows") {
    const Matrix h2 = helmert_matrix<double>(2);
    REQUIRE(h2.rows() == 1);
    CHECK(h2(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(h2(0, 1) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));

    const Matrix h3 = helmert_matrix<double>(3);
    REQUIRE(h3.rows() == 2);
    CHECK(h3(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(h3(0, 1) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(h3(0, 2) == 0.0);
    CHECK(h3(1, 0) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
    CHECK(h3(1, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
    CHECK(h3(1, 2) == doctest::Approx(-2.0 / std::sqrt(6.0)).epsilon(1e-15));

    const Matrix h4 = helmert_matrix<double>(4);
    CHECK(h4(2, 3) == doctest::Approx(-3.0 / std::sqrt(12.0)).epsilon(1e-15));

    CHECK_THROWS_AS(helmert_matrix<double>(1), std::invalid_argument);
}

TEST_CASE("helmert rows are orthonormal and kill the constant vector") {
    for (Index m = 2; m <= 8; ++m) {
        const Matrix h = helmert_matrix<double>(m);
        const Matrix gram = h * h.transpose();
        CHECK((gram - Matrix::Identity(m - 1, m - 1)).cwiseAbs().maxCoeff() < 1e-14);
        const Vector ones = Vector::Ones(m);
        CHECK((h * ones).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("helmert_transform at m = 2 is bit-identical to difference_transform") {
    const PanelData data = generate_panel(make_spec(2, 64, 1.7, scheme::Linear{2.0, -0.25}), 9);
    const ContrastSeries a = difference_transform(data);
    const ContrastSeries b = helmert_transform(data);
    CHECK(a.values == b.values);
    CHECK(b.m == 2);
}

TEST_CASE("contrasts are invariant to group-mean shifts") {
    // Integer data with column sums divisible by m, so the column means
    // and the centered values are exact; integer shifts then cancel bitwise.
    Matrix x(3, 2);
    x << 1.0, 4.0,
         2.0, 9.0,
         6.0, 2.0;
    Matrix shifted = x;
    shifted.col(0).array() += 1024.0;
    shifted.col(1).array() -= 512.0;
    const Matrix a = helmert_transform(panel_from(x)).values;
    const Matrix b = helmert_transform(panel_from(shifted)).values;
    CHECK(a == b);

    // Real-valued shifts cancel to rounding.
    const PanelData data = generate_panel(make_spec(4, 30, 1.0, scheme::Constant{0.0}), 77);
    Matrix moved = data.values;
    for (Index t = 0; t < 30; ++t) {
        moved.col(t).array() += 1e6 * std::sin(static_cast<double>(t));
    }
    const Matrix c = helmert_transform(data).values;
    const Matrix d = helmert_transform(panel_from(moved)).values;
    CHECK((c - d).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("squared contrasts sum to the within-group sum of squares") {
    std::mt19937 gen(31);
    std::uniform_int_distribution<Index> m_dist(2, 6);
    for (int rep = 0; rep < 50; ++rep) {
        const Index m = m_dist(gen);
        const PanelData data = generate_panel(
            make_spec(m, 20, 0.5 + 0.1 * rep, scheme::Linear{0.0, 1.0}),
            500 + static_cast<std::uint64_t>(rep));
        const ContrastSeries series = helmert_transform(data);
        const Vector wss = within_group_sumsq(data.values);
        for (Index t = 0; t < data.n(); ++t) {
            const double y2 = series.values.col(t).squaredNorm();
            // Rounding in the contrasts scales with the squared column
            // magnitude, not with the (possibly tiny) within sum of squares.
            const double scale = wss[t] + data.values.col(t).squaredNorm();
            CHECK(std::abs(y2 - wss[t]) <= 1e-12 * scale);
        }
    }
}

TEST_CASE("recast MLE hand values") {
    Matrix x(2, 1);
    x << 3.0, 1.0;
    const RecastEstimate est = sigma2_mle_recast(difference_transform(panel_from(x)));
    CHECK(est.sigma2_hat == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(est.n_eff == 1);
    CHECK(est.crlb == doctest::Approx(8.0).epsilon(1e-14));
    CHECK_FALSE(est.degenerate);

    Matrix flat(2, 4);
    flat.setConstant(3.0);
    const RecastEstimate zero = sigma2_mle_recast(difference_transform(panel_from(flat)));
    CHECK(zero.sigma2_hat == 0.0);
    CHECK(zero.degenerate);

    ContrastSeries empty;
    empty.values = Matrix(0, 0);
    CHECK_THROWS_AS(sigma2_mle_recast(empty), std::invalid_argument);
}

TEST_CASE("fisher information values and CRLB reciprocity") {
    CHECK(fisher_information_sigma2(1.0, 2) == 1.0);
    CHECK(fisher_information_sigma2(2.0, 100) == 12.5);
    CHECK_THROWS_AS(fisher_information_sigma2(0.0, 5), std::invalid_argument);
    CHECK_THROWS_AS(fisher_information_sigma2(1.0, 0), std::invalid_argument);

    const PanelData data = generate_panel(make_spec(3, 40, 1.2, scheme::Constant{4.0}), 11);
    const RecastEstimate est = sigma2_mle_recast(helmert_transform(data));
    CHECK(est.crlb ==
          doctest::Approx(1.0 / fisher_information_sigma2(est.sigma2_hat, est.n_eff))
              .epsilon(1e-14));
}

TEST_CASE("recast estimate is m/(m-1) times the naive MLE") {
    std::mt19937 gen(13);
    std::uniform_int_distribution<Index> m_dist(2, 6);
    std::uniform_int_distribution<Index> n_dist(1, 40);
    for (int rep = 0; rep < 50; ++rep) {
        const Index m = m_dist(gen);
        const Index n = n_dist(gen);
        const PanelData data = generate_panel(
            make_spec(m, n, 1.5, scheme::Linear{1.0, 0.5}),
            900 + static_cast<std::uint64_t>(rep));
        const double naive = mle_closed_form(data).theta.sigma2;
        const double recast = sigma2_mle_recast(helmert_transform(data)).sigma2_hat;
        const double predicted = static_cast<double>(m) / static_cast<double>(m - 1) * naive;
        const double scale =
            predicted + data.values.squaredNorm() / static_cast<double>((m - 1) * n);
        CHECK(std::abs(recast - predicted) <= 1e-12 * scale);
    }
}

TEST_CASE("recast estimator is unbiased and efficient in simulation") {
    const int reps = 5000;
    const Index n = 100;
    const double sigma2 = 1.0;
    const ModelSpec spec = make_spec(2, n, sigma2, scheme::Linear{0.0, 1.0});

    double sum = 0.0;
    double sumsq = 0.0;
    for (int r = 0; r < reps; ++r) {
        const PanelData panel = generate_panel(spec, 40000 + static_cast<std::uint64_t>(r));
        const double est = sigma2_mle_recast(helmert_transform(panel)).sigma2_hat;
        sum += est;
        sumsq += est * est;
    }
    const double r = static_cast<double>(reps);
    const double mean = sum / r;
    const double var = (sumsq - r * mean * mean) / (r - 1.0);

    CHECK(std::abs(mean - sigma2) <= 5.0 * std::sqrt(var / r));
    // n_eff = n at m = 2; the variance should sit on the CRLB.
    const double crlb = 2.0 * sigma2 * sigma2 / static_cast<double>(n);
    CHECK(var / crlb > 0.9);
    CHECK(var / crlb < 1.1);
}
