#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nspanel/model.hpp"
#include "nspanel/montecarlo.hpp"
#include "nspanel/recast.hpp"

namespace nspanel::io {

/// Parse failures carry file/line context in what().
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

// Panel files. The CSV holds one row per cell under the header
// `group,replicate,value` (1-based indices, group-major order); the JSON
// sidecar holds the generating spec and seed. sidecar_path_for maps
// panel.csv -> panel.json.
std::string sidecar_path_for(const std::string& csv_path);

void write_panel_csv(const PanelData& data, const std::string& csv_path);
void write_panel_sidecar(const PanelData& data, const std::string& sidecar_path);

/// Reads a panel CSV, taking spec and seed from the sidecar when present.
/// Without a sidecar the spec is a placeholder (sigma2 = 1, mu = 0) that
/// records only the observed dimensions; estimation never consults it.
PanelData read_panel_csv(const std::string& csv_path);

/// Contrast values as CSV `group,contrast_index,value` (1-based).
void write_contrast_csv(const ContrastSeries& series, const std::string& path);

/// Summaries as CSV `estimator,n,R,mean,bias,variance,mse,se_mean,crlb_ratio`
/// (crlb_ratio empty when absent).
void write_summaries_csv(const std::vector<EstimatorSummary>& summaries,
                         const std::string& path);

/// Sample path as CSV `n,naive,recast`.
void write_sample_path_csv(const SamplePath& path, const std::string& file_path);

// Mean-scheme grammar used by CLI flags and config files:
//   constant:<c> | linear:<a>,<b> | explicit:@<file> | randomwalk:<sd>[,<seed>]
// A randomwalk without an explicit seed uses fallback_walk_seed, so the
// same run seed always yields the same walk.
MeanScheme parse_scheme(const std::string& text, std::uint64_t fallback_walk_seed);
std::string format_scheme(const MeanScheme& scheme);

nlohmann::json scheme_to_json(const MeanScheme& scheme);
MeanScheme scheme_from_json(const nlohmann::json& j, std::uint64_t fallback_walk_seed);

// Experiment configs as JSON with a top-level version field. Missing keys
// keep the defaults passed in; unknown keys are rejected.
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig defaults = {});
ExperimentConfig read_config_file(const std::string& path, ExperimentConfig defaults = {});

nlohmann::json experiment_report_json(const ExperimentConfig& config, const std::string& kind,
                                      const std::vector<EstimatorSummary>& summaries);
nlohmann::json sample_path_report_json(const ExperimentConfig& config, Index n_max,
                                       const SamplePath& path);

void write_text_file(const std::string& path, const std::string& contents);

}  // namespace nspanel::io
