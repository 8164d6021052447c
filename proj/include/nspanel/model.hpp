#pragma once

#include <cstdint>
#include <optional>
#include <variant>

#include "nspanel/types.hpp"

namespace nspanel {

// Generative model: m replicates per group, n groups,
//
//     x_it = mu_t + e_it,   e_it ~ NIID(0, sigma2),
//     i = 1..m, t = 1..n.
//
// The group means are nuisance quantities; sigma2 is the parameter of
// interest. m >= 2 is required: with a single replicate the within-group
// variance is unidentifiable.

/// Recipes for the group-mean sequence (mu_1, ..., mu_n).
namespace scheme {

struct Constant {
    double value = 0.0;
};

/// mu_t = a + b * t, t = 1..n.
struct Linear {
    double a = 0.0;
    double b = 1.0;
};

struct Explicit {
    Vector values;
};

/// Gaussian random walk with the given step standard deviation, driven by
/// its own seed so that make_spec stays deterministic.
struct RandomWalk {
    double step_sd = 1.0;
    std::uint64_t seed = 0;
};

}  // namespace scheme

using MeanScheme =
    std::variant<scheme::Constant, scheme::Linear, scheme::Explicit, scheme::RandomWalk>;

/// Materializes the n group means. Throws std::invalid_argument on an
/// Explicit scheme whose length differs from n, or a RandomWalk with
/// step_sd <= 0.
Vector materialize_means(const MeanScheme& scheme, Index n);

struct ModelSpec {
    Index m = 2;       // replicates per group
    Index n = 1;       // groups
    double sigma2 = 1.0;
    Vector mu;         // length n
};

/// Validates the ModelSpec invariants; throws std::invalid_argument.
void validate_spec(const ModelSpec& spec);

ModelSpec make_spec(Index m, Index n, double sigma2, const MeanScheme& scheme);

struct PanelData {
    ModelSpec spec;
    Matrix values;                      // m x n, entry (i, t) = x_it
    std::optional<std::uint64_t> seed;  // absent for externally loaded data

    Index m() const { return values.rows(); }
    Index n() const { return values.cols(); }
};

/// Draws a panel from the model. Pure function of (spec, seed): cell (i, t)
/// uses the normal variate at counter t*m + i of the seed's stream, so the
/// first n' columns of a panel coincide with the panel generated at n = n'.
PanelData generate_panel(const ModelSpec& spec, std::uint64_t seed);

}  // namespace nspanel
