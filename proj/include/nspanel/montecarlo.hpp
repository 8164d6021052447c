#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nspanel/model.hpp"
#include "nspanel/types.hpp"

namespace nspanel {

// Replicated experiments over the naive and recast estimators of sigma2.
// Everything here is deterministic given the config: replication r at grid
// point k draws from the stream derive_seed(master_seed, k, r), so results
// are independent of scheduling and worker count.

struct ExperimentConfig {
    double sigma2 = 1.0;
    Index m = 2;
    std::vector<Index> n_grid;       // ascending, nonempty
    int replications = 1;
    std::uint64_t master_seed = 0;
    MeanScheme scheme = scheme::Linear{0.0, 1.0};
};

/// Throws std::invalid_argument on an invalid config.
void validate_config(const ExperimentConfig& config);

struct EstimatorSummary {
    std::string estimator;  // "naive", "recast" or "bias_corrected_naive"
    Index n = 0;
    int replications = 0;
    double mean = 0.0;
    double bias = 0.0;      // mean - true sigma2
    double variance = 0.0;  // sample variance across replications
    double mse = 0.0;       // variance + bias^2
    double se_mean = 0.0;   // sqrt(variance / replications)
    std::optional<double> crlb_ratio;  // variance / (2 sigma2^2 / n_eff); absent for naive
    bool low_replication = false;      // replications < 2: variance and SE are zero
};

/// Running estimates on the first n groups of one long realization.
struct SamplePath {
    std::vector<Index> n_points;
    std::vector<double> naive_estimates;
    std::vector<double> recast_estimates;
};

/// Observations-per-parameter accounting for a model whose parameter count
/// is params_per_group * n + params_fixed on an m x n panel.
struct InformationRatio {
    double parameter_count = 0.0;
    double observation_count = 0.0;
    double obs_per_parameter = 0.0;
    double ratio_limit = 0.0;  // limit of the ratio as n grows; +inf when unbounded
    bool bounded = false;      // bounded ratio breaks standard ML asymptotics
};

InformationRatio information_ratio(Index m, Index n, double params_per_group,
                                   double params_fixed);

struct DiagnosticReport {
    Index parameter_count = 0;    // n + 1 for the naive model
    Index observation_count = 0;  // m * n
    double obs_per_parameter = 0.0;
    double ratio_limit = 0.0;
    bool warning = false;  // raised when the ratio stays bounded as n grows
    double naive_sigma2 = 0.0;
    double bias_corrected_sigma2 = 0.0;  // m/(m-1) * naive, the suggested remedy
    std::string message;
};

/// Seed for replication r at grid point k; fixed mixing of the master seed.
std::uint64_t replication_seed(std::uint64_t master_seed, std::size_t grid_index,
                               int replication);

/// Runs body(r) for r in [0, count) on `workers` threads. Replications are
/// statically strided, so each call writes only its own output slots.
void parallel_replications(int count, int workers, const std::function<void(int)>& body);

/// Per-n summaries of {naive, recast, bias_corrected_naive} over R panels.
std::vector<EstimatorSummary> run_bias_experiment(const ExperimentConfig& config,
                                                  int workers = 1);

/// Same summaries on a grid that must span at least two orders of magnitude
/// with three or more points: the shape of the output across n is the
/// point (flat naive bias, 1/n recast variance).
std::vector<EstimatorSummary> run_consistency_sweep(const ExperimentConfig& config,
                                                    int workers = 1);

/// One realization of n_max groups; running naive and recast estimates over
/// group prefixes at each checkpoint. Group means follow the default
/// Linear(0, 1) scheme (both estimators are invariant to them).
SamplePath run_sample_path(double sigma2, Index m, Index n_max, std::uint64_t seed,
                           const std::vector<Index>& checkpoints);

/// Counts observations against parameters of the naive model for this panel
/// and warns when the ratio is bounded in n, which is what breaks the usual
/// ML consistency argument here (the ratio tends to m).
DiagnosticReport thin_information_diagnostic(const PanelData& data);

}  // namespace nspanel
