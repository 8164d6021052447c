#include "nspanel/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nspanel/rng.hpp"

namespace nspanel {

Vector materialize_means(const MeanScheme& scheme, Index n) {
    if (n < 1) throw std::invalid_argument("materialize_means: n must be >= 1");
    Vector mu(n);
    if (const auto* c = std::get_if<scheme::Constant>(&scheme)) {
        mu.setConstant(c->value);
    } else if (const auto* lin = std::get_if<scheme::Linear>(&scheme)) {
        for (Index t = 0; t < n; ++t) mu[t] = lin->a + lin->b * static_cast<double>(t + 1);
    } else if (const auto* ex = std::get_if<scheme::Explicit>(&scheme)) {
        if (ex->values.size() != n) {
            throw std::invalid_argument(
                "materialize_means: explicit scheme has " + std::to_string(ex->values.size()) +
                " values, expected " + std::to_string(n));
        }
        mu = ex->values;
    } else {
        const auto& rw = std::get<scheme::RandomWalk>(scheme);
        if (!(rw.step_sd > 0.0)) {
            throw std::invalid_argument("materialize_means: random walk step_sd must be > 0");
        }
        double level = 0.0;
        for (Index t = 0; t < n; ++t) {
            level += rw.step_sd * rng::normal_at(rw.seed, static_cast<std::uint64_t>(t));
            mu[t] = level;
        }
    }
    return mu;
}

namespace {

void validate_dims(Index m, Index n, double sigma2) {
    if (m < 2) {
        throw std::invalid_argument(
            "ModelSpec: m must be >= 2 (within-group variance is unidentifiable "
            "from a single replicate)");
    }
    if (n < 1) throw std::invalid_argument("ModelSpec: n must be >= 1");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
        throw std::invalid_argument("ModelSpec: sigma2 must be a positive finite real");
    }
}

}  // namespace

void validate_spec(const ModelSpec& spec) {
    validate_dims(spec.m, spec.n, spec.sigma2);
    if (spec.mu.size() != spec.n) {
        throw std::invalid_argument("ModelSpec: mu has length " + std::to_string(spec.mu.size()) +
                                    ", expected n = " + std::to_string(spec.n));
    }
    if (!spec.mu.allFinite()) throw std::invalid_argument("ModelSpec: mu must be finite");
}

ModelSpec make_spec(Index m, Index n, double sigma2, const MeanScheme& scheme) {
    validate_dims(m, n, sigma2);
    ModelSpec spec;
    spec.m = m;
    spec.n = n;
    spec.sigma2 = sigma2;
    spec.mu = materialize_means(scheme, n);
    return spec;
}

PanelData generate_panel(const ModelSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    const Index m = spec.m;
    const Index n = spec.n;
    const double sd = std::sqrt(spec.sigma2);

    Matrix values(m, n);
    for (Index t = 0; t < n; ++t) {
        const double mu_t = spec.mu[t];
        for (Index i = 0; i < m; ++i) {
            const auto counter = static_cast<std::uint64_t>(t * m + i);
            values(i, t) = mu_t + sd * rng::normal_at(seed, counter);
        }
    }
    return PanelData{spec, std::move(values), seed};
}

}  // namespace nspanel
