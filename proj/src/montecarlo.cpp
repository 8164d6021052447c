#include "nspanel/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nspanel/likelihood.hpp"
#include "nspanel/recast.hpp"
#include "nspanel/rng.hpp"

namespace nspanel {

void validate_config(const ExperimentConfig& config) {
    if (!(config.sigma2 > 0.0) || !std::isfinite(config.sigma2)) {
        throw std::invalid_argument("ExperimentConfig: sigma2 must be a positive finite real");
    }
    if (config.m < 2) throw std::invalid_argument("ExperimentConfig: m must be >= 2");
    if (config.n_grid.empty()) throw std::invalid_argument("ExperimentConfig: n_grid is empty");
    for (std::size_t k = 0; k < config.n_grid.size(); ++k) {
        if (config.n_grid[k] < 1) {
            throw std::invalid_argument("ExperimentConfig: n_grid entries must be >= 1");
        }
        if (k > 0 && config.n_grid[k] <= config.n_grid[k - 1]) {
            throw std::invalid_argument("ExperimentConfig: n_grid must be strictly ascending");
        }
    }
    if (config.replications < 1) {
        throw std::invalid_argument("ExperimentConfig: replications must be >= 1");
    }
}

std::uint64_t replication_seed(std::uint64_t master_seed, std::size_t grid_index,
                               int replication) {
    return rng::derive_seed(master_seed, static_cast<std::uint64_t>(grid_index),
                            static_cast<std::uint64_t>(replication));
}

void parallel_replications(int count, int workers, const std::function<void(int)>& body) {
    if (count <= 0) return;
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int r = 0; r < count; ++r) body(r);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&body, count, workers, w] {
            for (int r = w; r < count; r += workers) body(r);
        });
    }
    for (auto& t : pool) t.join();
}

namespace {

EstimatorSummary summarize(std::string name, Index n, double sigma2_true,
                           const std::vector<double>& estimates,
                           std::optional<double> crlb) {
    const int count = static_cast<int>(estimates.size());
    EstimatorSummary summary;
    summary.estimator = std::move(name);
    summary.n = n;
    summary.replications = count;
    summary.low_replication = count < 2;

    double sum = 0.0;
    for (double value : estimates) sum += value;
    summary.mean = sum / static_cast<double>(count);
    summary.bias = summary.mean - sigma2_true;

    if (count >= 2) {
        double sq = 0.0;
        for (double value : estimates) {
            const double d = value - summary.mean;
            sq += d * d;
        }
        summary.variance = sq / static_cast<double>(count - 1);
    }
    summary.mse = summary.variance + summary.bias * summary.bias;
    summary.se_mean = std::sqrt(summary.variance / static_cast<double>(count));
    if (crlb) summary.crlb_ratio = summary.variance / *crlb;
    return summary;
}

std::vector<EstimatorSummary> run_grid(const ExperimentConfig& config, int workers) {
    validate_config(config);
    const int count = config.replications;
    const double m = static_cast<double>(config.m);
    const double correction = m / (m - 1.0);

    std::vector<EstimatorSummary> summaries;
    summaries.reserve(config.n_grid.size() * 3);

    for (std::size_t k = 0; k < config.n_grid.size(); ++k) {
        const Index n = config.n_grid[k];
        const ModelSpec spec = make_spec(config.m, n, config.sigma2, config.scheme);

        std::vector<double> naive(static_cast<std::size_t>(count));
        std::vector<double> recast(static_cast<std::size_t>(count));
        std::vector<double> corrected(static_cast<std::size_t>(count));
        parallel_replications(count, workers, [&](int r) {
            const PanelData panel =
                generate_panel(spec, replication_seed(config.master_seed, k, r));
            const auto idx = static_cast<std::size_t>(r);
            naive[idx] = mle_closed_form(panel).theta.sigma2;
            recast[idx] = sigma2_mle_recast(helmert_transform(panel)).sigma2_hat;
            corrected[idx] = correction * naive[idx];
        });

        const double n_eff = static_cast<double>((config.m - 1) * n);
        const double crlb = 2.0 * config.sigma2 * config.sigma2 / n_eff;
        summaries.push_back(summarize("naive", n, config.sigma2, naive, std::nullopt));
        summaries.push_back(summarize("recast", n, config.sigma2, recast, crlb));
        summaries.push_back(
            summarize("bias_corrected_naive", n, config.sigma2, corrected, crlb));
    }
    return summaries;
}

}  // namespace

std::vector<EstimatorSummary> run_bias_experiment(const ExperimentConfig& config,
                                                  int workers) {
    return run_grid(config, workers);
}

std::vector<EstimatorSummary> run_consistency_sweep(const ExperimentConfig& config,
                                                    int workers) {
    validate_config(config);
    if (config.n_grid.size() < 3) {
        throw std::invalid_argument("run_consistency_sweep: n_grid needs at least 3 points");
    }
    if (config.n_grid.back() < 100 * config.n_grid.front()) {
        throw std::invalid_argument(
            "run_consistency_sweep: n_grid must span at least two orders of magnitude");
    }
    return run_grid(config, workers);
}

SamplePath run_sample_path(double sigma2, Index m, Index n_max, std::uint64_t seed,
                           const std::vector<Index>& checkpoints) {
    if (checkpoints.empty()) throw std::invalid_argument("run_sample_path: no checkpoints");
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        if (checkpoints[k] < 1 || checkpoints[k] > n_max) {
            throw std::invalid_argument("run_sample_path: checkpoints must lie in [1, n_max]");
        }
        if (k > 0 && checkpoints[k] <= checkpoints[k - 1]) {
            throw std::invalid_argument("run_sample_path: checkpoints must be ascending");
        }
    }

    const ModelSpec spec = make_spec(m, n_max, sigma2, scheme::Linear{0.0, 1.0});
    const PanelData panel = generate_panel(spec, seed);
    const Vector wss = within_group_sumsq(panel.values);
    const Matrix contrasts = helmert_transform(panel).values;

    SamplePath path;
    path.n_points = checkpoints;
    path.naive_estimates.reserve(checkpoints.size());
    path.recast_estimates.reserve(checkpoints.size());

    double wss_cum = 0.0;
    double y2_cum = 0.0;
    Index t = 0;
    for (const Index checkpoint : checkpoints) {
        for (; t < checkpoint; ++t) {
            wss_cum += wss[t];
            y2_cum += contrasts.col(t).squaredNorm();
        }
        const double groups = static_cast<double>(checkpoint);
        path.naive_estimates.push_back(wss_cum / (static_cast<double>(m) * groups));
        path.recast_estimates.push_back(y2_cum / (static_cast<double>(m - 1) * groups));
    }
    return path;
}

InformationRatio information_ratio(Index m, Index n, double params_per_group,
                                   double params_fixed) {
    if (m < 1 || n < 1) throw std::invalid_argument("information_ratio: m, n must be >= 1");
    InformationRatio ratio;
    ratio.parameter_count = params_per_group * static_cast<double>(n) + params_fixed;
    if (!(ratio.parameter_count > 0.0)) {
        throw std::invalid_argument("information_ratio: parameter count must be positive");
    }
    ratio.observation_count = static_cast<double>(m * n);
    ratio.obs_per_parameter = ratio.observation_count / ratio.parameter_count;
    ratio.bounded = params_per_group > 0.0;
    ratio.ratio_limit = ratio.bounded ? static_cast<double>(m) / params_per_group
                                      : std::numeric_limits<double>::infinity();
    return ratio;
}

DiagnosticReport thin_information_diagnostic(const PanelData& data) {
    const Index m = data.m();
    const Index n = data.n();
    // Naive model: one mean per group plus the common variance.
    const InformationRatio ratio = information_ratio(m, n, 1.0, 1.0);

    DiagnosticReport report;
    report.parameter_count = n + 1;
    report.observation_count = m * n;
    report.obs_per_parameter = ratio.obs_per_parameter;
    report.ratio_limit = ratio.ratio_limit;
    report.warning = ratio.bounded;
    report.naive_sigma2 = mle_closed_form(data).theta.sigma2;
    report.bias_corrected_sigma2 =
        report.naive_sigma2 * static_cast<double>(m) / static_cast<double>(m - 1);

    std::ostringstream msg;
    msg << report.observation_count << " observations for " << report.parameter_count
        << " parameters (" << report.obs_per_parameter << " per parameter)";
    if (report.warning) {
        msg << "; the ratio stays bounded (limit " << report.ratio_limit
            << ") as groups are added, so large-sample guarantees for the full-parameter "
               "fit do not apply. The within-group variance estimate is biased by a factor "
            << "(m-1)/m; multiply by m/(m-1) = " << static_cast<double>(m) / (m - 1.0)
            << " or estimate on within-group contrasts.";
    } else {
        msg << "; the ratio grows without bound, no warning.";
    }
    report.message = msg.str();
    return report;
}

}  // namespace nspanel
