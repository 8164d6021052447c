#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nspanel/io.hpp"
#include "nspanel/likelihood.hpp"
#include "nspanel/model.hpp"
#include "nspanel/montecarlo.hpp"
#include "nspanel/optimizer.hpp"
#include "nspanel/recast.hpp"

namespace {

namespace io = nspanel::io;
using nlohmann::json;
using nspanel::Index;

// Exit codes: 0 success, 1 runtime/I-O, 2 usage/config.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr const char* kSchemeHelp =
    "Group-mean scheme: constant:<c> | linear:<a>,<b> | explicit:@<file> | "
    "randomwalk:<sd>[,<seed>] (seed defaults to the run seed)";

std::string resolve_out(const std::string& path) {
    const char* dir = std::getenv("NSPANEL_OUT_DIR");
    if (dir == nullptr || *dir == '\0') return path;
    const std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(dir) / p).string();
}

nspanel::MeanScheme parse_scheme_flag(const std::string& text, std::uint64_t fallback_seed) {
    try {
        return io::parse_scheme(text, fallback_seed);
    } catch (const io::ParseError& e) {
        throw UsageError(e.what());
    }
}

struct GenerateOptions {
    Index m = 2;
    Index n = 0;
    double sigma2 = 1.0;
    std::string scheme = "linear:0,1";
    std::uint64_t seed = 0;
    std::string output;
};

int cmd_generate(const GenerateOptions& opt) {
    const nspanel::MeanScheme scheme = parse_scheme_flag(opt.scheme, opt.seed);
    const nspanel::ModelSpec spec = nspanel::make_spec(opt.m, opt.n, opt.sigma2, scheme);
    const nspanel::PanelData panel = nspanel::generate_panel(spec, opt.seed);

    const std::string csv = resolve_out(opt.output);
    const std::string sidecar = io::sidecar_path_for(csv);
    io::write_panel_csv(panel, csv);
    io::write_panel_sidecar(panel, sidecar);
    std::cout << "wrote " << csv << " and " << sidecar << " (m=" << opt.m << ", n=" << opt.n
              << ", seed=" << opt.seed << ")\n";
    return 0;
}

struct EstimateOptions {
    std::string input;
    std::string method = "closed";
    double grad_tol = 1e-9;
    int max_iter = 200;
    bool trace = false;
};

json second_order_json(const nspanel::SecondOrderReport& report) {
    return json{{"d2_mu", report.d2_mu},
                {"d2_sigma2", report.d2_sigma2},
                {"max_abs_cross", report.max_abs_cross},
                {"stationary", report.stationary},
                {"is_maximum", report.is_maximum}};
}

json diagnostic_json(const nspanel::DiagnosticReport& d) {
    return json{{"parameter_count", d.parameter_count},
                {"observation_count", d.observation_count},
                {"obs_per_parameter", d.obs_per_parameter},
                {"ratio_limit", d.ratio_limit},
                {"warning", d.warning},
                {"naive_sigma2", d.naive_sigma2},
                {"bias_corrected_sigma2", d.bias_corrected_sigma2},
                {"message", d.message}};
}

const char* status_name(nspanel::OptimizeStatus status) {
    switch (status) {
        case nspanel::OptimizeStatus::kConverged: return "converged";
        case nspanel::OptimizeStatus::kMaxIterations: return "max_iterations";
        case nspanel::OptimizeStatus::kBoundaryFailure: return "boundary_failure";
    }
    return "unknown";
}

int cmd_estimate(const EstimateOptions& opt) {
    const nspanel::PanelData panel = io::read_panel_csv(opt.input);
    const nspanel::ClosedFormMle closed = nspanel::mle_closed_form(panel);

    json report;
    report["input"] = opt.input;
    report["m"] = panel.m();
    report["n"] = panel.n();
    report["method"] = opt.method;

    if (opt.method == "closed" || opt.method == "newton") {
        // The second-order certificate is evaluated at the exact closed-form
        // maximizer; Newton output is compared against it separately.
        report["second_order"] =
            closed.degenerate
                ? json(nullptr)
                : second_order_json(nspanel::second_order_check(closed.theta, panel));
    }

    if (opt.method == "closed") {
        report["estimate"] = {
            {"mu_hat", std::vector<double>(closed.theta.mu.begin(), closed.theta.mu.end())},
            {"sigma2_hat", closed.theta.sigma2},
            {"degenerate", closed.degenerate}};
    } else if (opt.method == "newton") {
        nspanel::OptimizerConfig config;
        config.grad_tol = opt.grad_tol;
        config.max_iter = opt.max_iter;
        config.record_trace = opt.trace;
        const nspanel::OptimizeResult result =
            nspanel::maximize_naive_likelihood(panel, nspanel::default_init(panel), config);

        double sup_diff = std::abs(result.theta.sigma2 - closed.theta.sigma2);
        for (Index t = 0; t < panel.n(); ++t) {
            sup_diff = std::max(sup_diff, std::abs(result.theta.mu[t] - closed.theta.mu[t]));
        }
        report["estimate"] = {
            {"mu_hat", std::vector<double>(result.theta.mu.begin(), result.theta.mu.end())},
            {"sigma2_hat", result.theta.sigma2},
            {"degenerate", closed.degenerate}};
        report["newton"] = {{"iterations", result.iterations},
                            {"converged", result.converged},
                            {"final_grad_norm", result.final_grad_norm},
                            {"status", status_name(result.status)},
                            {"sigma2_closed_form", closed.theta.sigma2},
                            {"sup_diff_vs_closed", sup_diff}};
        if (opt.trace) report["newton"]["kernel_trace"] = result.kernel_trace;
    } else {
        const nspanel::ContrastSeries series = nspanel::helmert_transform(panel);
        const nspanel::RecastEstimate est = nspanel::sigma2_mle_recast(series);
        report["estimate"] = {{"sigma2_hat", est.sigma2_hat},
                              {"n_eff", est.n_eff},
                              {"crlb", est.crlb},
                              {"degenerate", est.degenerate}};
        report["fisher_information"] =
            est.degenerate
                ? json(nullptr)
                : json(nspanel::fisher_information_sigma2(est.sigma2_hat, est.n_eff));

        const double factor =
            static_cast<double>(panel.m()) / static_cast<double>(panel.m() - 1);
        const double predicted = factor * closed.theta.sigma2;
        const double denom = std::max(std::abs(predicted), std::abs(est.sigma2_hat));
        const double rel = denom == 0.0 ? 0.0 : std::abs(est.sigma2_hat - predicted) / denom;
        report["identity_vs_naive"] = {{"naive_sigma2", closed.theta.sigma2},
                                       {"factor", factor},
                                       {"predicted", predicted},
                                       {"rel_error", rel},
                                       {"passed", rel <= 1e-12}};
    }

    report["diagnostic"] = diagnostic_json(nspanel::thin_information_diagnostic(panel));
    std::cout << report.dump(2) << '\n';
    return 0;
}

struct ExperimentOptions {
    std::string kind = "bias";
    std::string config_path;
    double sigma2 = 1.0;
    Index m = 2;
    std::vector<Index> n_grid;
    int replications = 1;
    std::uint64_t master_seed = 0;
    std::string scheme;
    int workers = 1;
    std::string format = "csv";
    std::string output;
    Index n_max = 100000;
    int checkpoints = 200;
};

std::vector<Index> log_spaced_checkpoints(Index n_max, int count) {
    if (count < 1) throw UsageError("experiment: --checkpoints must be >= 1");
    if (n_max < 1) throw UsageError("experiment: --n-max must be >= 1");
    std::vector<Index> points;
    points.reserve(static_cast<std::size_t>(count) + 1);
    const double log_max = std::log10(static_cast<double>(n_max));
    Index prev = 0;
    for (int k = 1; k <= count; ++k) {
        const double frac = static_cast<double>(k) / static_cast<double>(count);
        auto n = static_cast<Index>(std::llround(std::pow(10.0, frac * log_max)));
        n = std::min(std::max(n, prev + 1), n_max);
        if (n <= prev) continue;
        points.push_back(n);
        prev = n;
        if (n == n_max) break;
    }
    if (points.empty() || points.back() != n_max) points.push_back(n_max);
    return points;
}

std::string manifest_path_for(const std::string& results_path) {
    std::filesystem::path p(results_path);
    p.replace_extension(".config.json");
    return p.string();
}

json run_manifest(const nspanel::ExperimentConfig& config, const std::string& kind) {
    json manifest = io::experiment_report_json(config, kind, {});
    manifest.erase("summaries");
    return manifest;
}

void print_grid_verdicts(const nspanel::ExperimentConfig& config,
                         const std::vector<nspanel::EstimatorSummary>& summaries) {
    const double m = static_cast<double>(config.m);
    std::cout << std::setprecision(6);
    for (const auto& s : summaries) {
        const double predicted_bias =
            s.estimator == "naive" ? -config.sigma2 / m : 0.0;
        std::ostringstream head;
        head << std::setprecision(6) << s.estimator << " bias " << s.bias
             << " vs predicted " << predicted_bias << " (n=" << s.n << ")";
        if (s.low_replication) {
            std::cout << head.str() << ": SKIPPED (needs R >= 2)\n";
            continue;
        }
        const bool pass = std::abs(s.bias - predicted_bias) <= 5.0 * s.se_mean;
        std::cout << head.str() << (pass ? ": PASS" : ": FAIL") << '\n';
        if (s.crlb_ratio) {
            const double slack =
                std::max(0.1, 5.0 * std::sqrt(2.0 / static_cast<double>(s.replications - 1)));
            const bool eff_pass = std::abs(*s.crlb_ratio - 1.0) <= slack;
            std::cout << s.estimator << " var/CRLB " << *s.crlb_ratio << " target 1 +/- "
                      << slack << " (n=" << s.n << ")" << (eff_pass ? ": PASS" : ": FAIL")
                      << '\n';
        }
    }
}

void print_path_verdicts(double sigma2, Index m_count, const nspanel::SamplePath& path) {
    const double m = static_cast<double>(m_count);
    const Index n_final = path.n_points.back();
    const double se_recast =
        sigma2 * std::sqrt(2.0 / ((m - 1.0) * static_cast<double>(n_final)));
    const double se_naive = (m - 1.0) / m * se_recast;
    const double naive_target = (m - 1.0) / m * sigma2;

    std::cout << std::setprecision(6);
    const double naive_final = path.naive_estimates.back();
    const double recast_final = path.recast_estimates.back();
    std::cout << "path final naive " << naive_final << " vs " << naive_target << " +/- "
              << 5.0 * se_naive << " (n=" << n_final << ")"
              << (std::abs(naive_final - naive_target) <= 5.0 * se_naive ? ": PASS" : ": FAIL")
              << '\n';
    std::cout << "path final recast " << recast_final << " vs " << sigma2 << " +/- "
              << 5.0 * se_recast << " (n=" << n_final << ")"
              << (std::abs(recast_final - sigma2) <= 5.0 * se_recast ? ": PASS" : ": FAIL")
              << '\n';

    // Decade comparison: [n_1, 10 n_1] against [n_final/10, n_final], only
    // when the two windows are disjoint.
    const Index n_first = path.n_points.front();
    if (n_final < 100 * n_first) return;
    double first_max = 0.0;
    double last_max = 0.0;
    bool first_any = false;
    bool last_any = false;
    for (std::size_t k = 0; k < path.n_points.size(); ++k) {
        const double dev = std::abs(path.recast_estimates[k] - sigma2);
        if (path.n_points[k] <= 10 * n_first) {
            first_max = std::max(first_max, dev);
            first_any = true;
        }
        if (10 * path.n_points[k] >= n_final) {
            last_max = std::max(last_max, dev);
            last_any = true;
        }
    }
    if (!first_any || !last_any) return;
    std::cout << "path recast last-decade max dev " << last_max << " vs first-decade "
              << first_max << (last_max < first_max ? ": PASS" : ": FAIL") << '\n';
}

int cmd_experiment(const CLI::App& sub, const ExperimentOptions& opt) {
    json raw = json::object();
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open config '" + opt.config_path + "'");
        try {
            in >> raw;
        } catch (const json::parse_error& e) {
            throw UsageError(opt.config_path + ": " + e.what());
        }
        if (!raw.is_object()) {
            throw UsageError(opt.config_path + ": expected a JSON object");
        }
    }

    // CLI-level keys live beside the library config in the same file;
    // flags beat file values, file values beat defaults.
    std::string kind = opt.kind;
    int workers = opt.workers;
    Index n_max = opt.n_max;
    std::vector<Index> checkpoint_list;
    try {
        if (sub.count("--kind") == 0 && raw.contains("kind")) {
            kind = raw.at("kind").get<std::string>();
        }
        if (sub.count("--workers") == 0 && raw.contains("workers")) {
            workers = raw.at("workers").get<int>();
        }
        if (sub.count("--n-max") == 0 && raw.contains("n_max")) {
            n_max = raw.at("n_max").get<Index>();
        }
        if (raw.contains("checkpoints")) {
            checkpoint_list = raw.at("checkpoints").get<std::vector<Index>>();
        }
    } catch (const json::exception& e) {
        throw UsageError("config: " + std::string(e.what()));
    }
    if (kind != "bias" && kind != "sweep" && kind != "path") {
        throw UsageError("config: kind must be bias, sweep or path");
    }
    if (workers < 1) throw UsageError("experiment: workers must be >= 1");

    // Library config: overlay flag values onto the file JSON and parse once,
    // so precedence and the randomwalk seed fallback resolve in one place.
    if (sub.count("--sigma2") != 0) raw["sigma2"] = opt.sigma2;
    if (sub.count("--m") != 0) raw["m"] = opt.m;
    if (sub.count("--n-grid") != 0) raw["n_grid"] = opt.n_grid;
    if (sub.count("--replications") != 0) raw["replications"] = opt.replications;
    if (sub.count("--master-seed") != 0) raw["master_seed"] = opt.master_seed;
    if (sub.count("--scheme") != 0) raw["scheme"] = opt.scheme;

    nspanel::ExperimentConfig config;
    try {
        config = io::config_from_json(raw, {});
    } catch (const io::ParseError& e) {
        throw UsageError(e.what());
    } catch (const json::exception& e) {
        throw UsageError("config: " + std::string(e.what()));
    }

    const std::string out = resolve_out(opt.output);

    if (kind == "bias" || kind == "sweep") {
        const std::vector<nspanel::EstimatorSummary> summaries =
            kind == "bias" ? nspanel::run_bias_experiment(config, workers)
                           : nspanel::run_consistency_sweep(config, workers);
        print_grid_verdicts(config, summaries);
        if (opt.format == "csv") {
            io::write_summaries_csv(summaries, out);
            io::write_text_file(manifest_path_for(out),
                                run_manifest(config, kind).dump(2) + "\n");
        } else {
            io::write_text_file(out,
                                io::experiment_report_json(config, kind, summaries).dump(2) +
                                    "\n");
        }
    } else {
        if (sub.count("--checkpoints") != 0 || checkpoint_list.empty()) {
            checkpoint_list = log_spaced_checkpoints(n_max, opt.checkpoints);
        }
        const nspanel::SamplePath path = nspanel::run_sample_path(
            config.sigma2, config.m, n_max, config.master_seed, checkpoint_list);
        print_path_verdicts(config.sigma2, config.m, path);
        if (opt.format == "csv") {
            io::write_sample_path_csv(path, out);
            json manifest = run_manifest(config, kind);
            manifest["n_max"] = n_max;
            io::write_text_file(manifest_path_for(out), manifest.dump(2) + "\n");
        } else {
            io::write_text_file(
                out, io::sample_path_report_json(config, n_max, path).dump(2) + "\n");
        }
    }
    std::cout << "wrote " << out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Neyman-Scott panel toolkit: panel generation, naive and recast variance "
        "estimation, and Monte Carlo experiments"};
    app.require_subcommand(1);
    app.footer("Relative output paths are placed under $NSPANEL_OUT_DIR when it is set.");

    GenerateOptions gen_opt;
    CLI::App* gen = app.add_subcommand("generate", "Draw a panel, write CSV + JSON sidecar");
    gen->add_option("--m", gen_opt.m, "Replicates per group (>= 2)")->capture_default_str();
    gen->add_option("--n", gen_opt.n, "Number of groups")->required();
    gen->add_option("--sigma2", gen_opt.sigma2, "Error variance")->capture_default_str();
    gen->add_option("--scheme", gen_opt.scheme, kSchemeHelp)->capture_default_str();
    gen->add_option("--seed", gen_opt.seed, "Generator seed")->capture_default_str();
    gen->add_option("-o,--output", gen_opt.output, "Panel CSV path")->required();

    EstimateOptions est_opt;
    CLI::App* est = app.add_subcommand("estimate", "Estimate sigma2 from a panel CSV");
    est->add_option("-i,--input", est_opt.input, "Panel CSV (JSON sidecar used when present)")
        ->required();
    est->add_option("--method", est_opt.method, "Estimator")
        ->check(CLI::IsMember({"closed", "newton", "recast"}))
        ->capture_default_str();
    est->add_option("--grad-tol", est_opt.grad_tol, "Newton stopping tolerance")
        ->capture_default_str();
    est->add_option("--max-iter", est_opt.max_iter, "Newton iteration cap")
        ->capture_default_str();
    est->add_flag("--trace", est_opt.trace, "Include the accepted-iterate kernel trace");

    ExperimentOptions exp_opt;
    CLI::App* exp = app.add_subcommand("experiment", "Run a replicated Monte Carlo study");
    exp->add_option("--kind", exp_opt.kind, "bias | sweep | path")
        ->check(CLI::IsMember({"bias", "sweep", "path"}))
        ->capture_default_str();
    exp->add_option("--config", exp_opt.config_path,
                    "JSON config file; flags override file values")
        ->check(CLI::ExistingFile);
    exp->add_option("--sigma2", exp_opt.sigma2, "True error variance")->capture_default_str();
    exp->add_option("--m", exp_opt.m, "Replicates per group")->capture_default_str();
    exp->add_option("--n-grid", exp_opt.n_grid, "Group counts, e.g. 100,1000,10000")
        ->delimiter(',');
    exp->add_option("-R,--replications", exp_opt.replications, "Panels per grid point")
        ->capture_default_str();
    exp->add_option("--master-seed", exp_opt.master_seed, "Master seed")
        ->capture_default_str();
    exp->add_option("--scheme", exp_opt.scheme, kSchemeHelp);
    exp->add_option("--workers", exp_opt.workers, "Worker threads (results are identical)")
        ->capture_default_str();
    exp->add_option("--format", exp_opt.format, "Results file format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    exp->add_option("-o,--output", exp_opt.output, "Results file path")->required();
    exp->add_option("--n-max", exp_opt.n_max, "Path kind: largest group count")
        ->capture_default_str();
    exp->add_option("--checkpoints", exp_opt.checkpoints,
                    "Path kind: number of log-spaced checkpoints")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_opt);
        if (est->parsed()) return cmd_estimate(est_opt);
        if (exp->parsed()) return cmd_experiment(*exp, exp_opt);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const io::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
