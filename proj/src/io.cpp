#include "nspanel/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

namespace nspanel::io {

using nlohmann::json;

std::string format_double(double value) {
    char buffer[32];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

namespace {

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::string trim(const std::string& text) {
    const auto begin = text.find_first_not_of(" \t");
    if (begin == std::string::npos) return {};
    const auto end = text.find_last_not_of(" \t");
    return text.substr(begin, end - begin + 1);
}

double parse_double(const std::string& token, const std::string& context) {
    const std::string body = trim(token);
    double value = 0.0;
    const auto result = std::from_chars(body.data(), body.data() + body.size(), value);
    if (result.ec != std::errc() || result.ptr != body.data() + body.size()) {
        throw ParseError(context + ": '" + token + "' is not a number");
    }
    return value;
}

long parse_long(const std::string& token, const std::string& context) {
    const std::string body = trim(token);
    long value = 0;
    const auto result = std::from_chars(body.data(), body.data() + body.size(), value);
    if (result.ec != std::errc() || result.ptr != body.data() + body.size()) {
        throw ParseError(context + ": '" + token + "' is not an integer");
    }
    return value;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    return out;
}

void finish_write(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

std::string sidecar_path_for(const std::string& csv_path) {
    const std::filesystem::path p(csv_path);
    std::filesystem::path sidecar = p;
    sidecar.replace_extension(".json");
    if (sidecar == p) sidecar += ".json";
    return sidecar.string();
}

void write_panel_csv(const PanelData& data, const std::string& csv_path) {
    std::ofstream out = open_for_write(csv_path);
    out << "group,replicate,value\n";
    for (Index t = 0; t < data.n(); ++t) {
        for (Index i = 0; i < data.m(); ++i) {
            out << (t + 1) << ',' << (i + 1) << ',' << format_double(data.values(i, t))
                << '\n';
        }
    }
    finish_write(out, csv_path);
}

void write_panel_sidecar(const PanelData& data, const std::string& sidecar_path) {
    json j;
    j["version"] = 1;
    j["kind"] = "panel";
    j["spec"] = {{"m", data.spec.m},
                 {"n", data.spec.n},
                 {"sigma2", data.spec.sigma2},
                 {"mu", std::vector<double>(data.spec.mu.begin(), data.spec.mu.end())}};
    if (data.seed) {
        j["seed"] = *data.seed;
    } else {
        j["seed"] = nullptr;
    }
    std::ofstream out = open_for_write(sidecar_path);
    out << j.dump(2) << '\n';
    finish_write(out, sidecar_path);
}

PanelData read_panel_csv(const std::string& csv_path) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + csv_path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(csv_path + ": empty file");
    if (strip_cr(line) != "group,replicate,value") {
        throw ParseError(csv_path + ":1: expected header 'group,replicate,value'");
    }

    struct Cell {
        long group;
        long replicate;
        double value;
    };
    std::vector<Cell> cells;
    long max_group = 0;
    long max_replicate = 0;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::string context = csv_path + ":" + std::to_string(line_no);
        const auto fields = split(line, ',');
        if (fields.size() != 3) {
            throw ParseError(context + ": expected 3 fields, got " +
                             std::to_string(fields.size()));
        }
        Cell cell{parse_long(fields[0], context + ": group"),
                  parse_long(fields[1], context + ": replicate"),
                  parse_double(fields[2], context + ": value")};
        if (cell.group < 1 || cell.replicate < 1) {
            throw ParseError(context + ": group and replicate indices are 1-based");
        }
        if (!std::isfinite(cell.value)) {
            throw ParseError(context + ": value must be finite");
        }
        max_group = std::max(max_group, cell.group);
        max_replicate = std::max(max_replicate, cell.replicate);
        cells.push_back(cell);
    }
    if (cells.empty()) throw ParseError(csv_path + ": no data rows");
    if (max_replicate < 2) {
        throw ParseError(csv_path + ": panels need at least 2 replicates per group");
    }

    const Index m = max_replicate;
    const Index n = max_group;
    Matrix values = Matrix::Constant(m, n, std::numeric_limits<double>::quiet_NaN());
    for (const Cell& cell : cells) {
        double& slot = values(cell.replicate - 1, cell.group - 1);
        if (!std::isnan(slot)) {
            throw ParseError(csv_path + ": duplicate cell (group " + std::to_string(cell.group) +
                             ", replicate " + std::to_string(cell.replicate) + ")");
        }
        slot = cell.value;
    }
    if (values.hasNaN()) {
        for (Index t = 0; t < n; ++t) {
            for (Index i = 0; i < m; ++i) {
                if (std::isnan(values(i, t))) {
                    throw ParseError(csv_path + ": missing cell (group " + std::to_string(t + 1) +
                                     ", replicate " + std::to_string(i + 1) + ")");
                }
            }
        }
    }

    PanelData data;
    data.values = std::move(values);

    const std::string sidecar = sidecar_path_for(csv_path);
    if (std::filesystem::exists(sidecar)) {
        std::ifstream side(sidecar, std::ios::binary);
        if (!side) throw std::runtime_error("cannot open '" + sidecar + "'");
        json j;
        try {
            side >> j;
        } catch (const json::parse_error& e) {
            throw ParseError(sidecar + ": " + e.what());
        }
        const auto& spec = j.at("spec");
        data.spec.m = spec.at("m").get<Index>();
        data.spec.n = spec.at("n").get<Index>();
        data.spec.sigma2 = spec.at("sigma2").get<double>();
        const auto mu = spec.at("mu").get<std::vector<double>>();
        data.spec.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Index>(mu.size()));
        if (!j.at("seed").is_null()) data.seed = j.at("seed").get<std::uint64_t>();
        if (data.spec.m != m || data.spec.n != n) {
            throw ParseError(sidecar + ": spec is " + std::to_string(data.spec.m) + "x" +
                             std::to_string(data.spec.n) + " but '" + csv_path + "' holds a " +
                             std::to_string(m) + "x" + std::to_string(n) + " panel");
        }
        validate_spec(data.spec);
    } else {
        // No sidecar: dimensions from the data, placeholder generator fields.
        data.spec.m = m;
        data.spec.n = n;
        data.spec.sigma2 = 1.0;
        data.spec.mu = Vector::Zero(n);
    }
    return data;
}

void write_contrast_csv(const ContrastSeries& series, const std::string& path) {
    std::ofstream out = open_for_write(path);
    out << "group,contrast_index,value\n";
    for (Index t = 0; t < series.n(); ++t) {
        for (Index j = 0; j < series.values.rows(); ++j) {
            out << (t + 1) << ',' << (j + 1) << ',' << format_double(series.values(j, t))
                << '\n';
        }
    }
    finish_write(out, path);
}

void write_summaries_csv(const std::vector<EstimatorSummary>& summaries,
                         const std::string& path) {
    std::ofstream out = open_for_write(path);
    out << "estimator,n,R,mean,bias,variance,mse,se_mean,crlb_ratio\n";
    for (const auto& s : summaries) {
        out << s.estimator << ',' << s.n << ',' << s.replications << ','
            << format_double(s.mean) << ',' << format_double(s.bias) << ','
            << format_double(s.variance) << ',' << format_double(s.mse) << ','
            << format_double(s.se_mean) << ','
            << (s.crlb_ratio ? format_double(*s.crlb_ratio) : std::string()) << '\n';
    }
    finish_write(out, path);
}

void write_sample_path_csv(const SamplePath& path, const std::string& file_path) {
    std::ofstream out = open_for_write(file_path);
    out << "n,naive,recast\n";
    for (std::size_t k = 0; k < path.n_points.size(); ++k) {
        out << path.n_points[k] << ',' << format_double(path.naive_estimates[k]) << ','
            << format_double(path.recast_estimates[k]) << '\n';
    }
    finish_write(out, file_path);
}

MeanScheme parse_scheme(const std::string& text, std::uint64_t fallback_walk_seed) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
    const std::string context = "scheme '" + text + "'";

    if (kind == "constant") {
        return scheme::Constant{parse_double(args, context)};
    }
    if (kind == "linear") {
        const auto parts = split(args, ',');
        if (parts.size() != 2) throw ParseError(context + ": expected linear:<a>,<b>");
        return scheme::Linear{parse_double(parts[0], context), parse_double(parts[1], context)};
    }
    if (kind == "explicit") {
        if (args.empty() || args[0] != '@') {
            throw ParseError(context + ": expected explicit:@<file>");
        }
        const std::string path = args.substr(1);
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open means file '" + path + "'");
        std::vector<double> values;
        std::string token;
        while (in >> token) values.push_back(parse_double(token, path));
        if (values.empty()) throw ParseError(path + ": no values");
        scheme::Explicit ex;
        ex.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
        return ex;
    }
    if (kind == "randomwalk") {
        const auto parts = split(args, ',');
        if (parts.size() == 1) {
            return scheme::RandomWalk{parse_double(parts[0], context), fallback_walk_seed};
        }
        if (parts.size() == 2) {
            const long seed = parse_long(parts[1], context);
            if (seed < 0) throw ParseError(context + ": seed must be nonnegative");
            return scheme::RandomWalk{parse_double(parts[0], context),
                                      static_cast<std::uint64_t>(seed)};
        }
        throw ParseError(context + ": expected randomwalk:<sd>[,<seed>]");
    }
    throw ParseError(context + ": unknown kind '" + kind +
                     "' (expected constant, linear, explicit or randomwalk)");
}

std::string format_scheme(const MeanScheme& scheme) {
    if (const auto* c = std::get_if<scheme::Constant>(&scheme)) {
        return "constant:" + format_double(c->value);
    }
    if (const auto* lin = std::get_if<scheme::Linear>(&scheme)) {
        return "linear:" + format_double(lin->a) + "," + format_double(lin->b);
    }
    if (const auto* ex = std::get_if<scheme::Explicit>(&scheme)) {
        return "explicit:(" + std::to_string(ex->values.size()) + " values)";
    }
    const auto& rw = std::get<scheme::RandomWalk>(scheme);
    return "randomwalk:" + format_double(rw.step_sd) + "," + std::to_string(rw.seed);
}

json scheme_to_json(const MeanScheme& scheme) {
    if (const auto* c = std::get_if<scheme::Constant>(&scheme)) {
        return json{{"kind", "constant"}, {"value", c->value}};
    }
    if (const auto* lin = std::get_if<scheme::Linear>(&scheme)) {
        return json{{"kind", "linear"}, {"a", lin->a}, {"b", lin->b}};
    }
    if (const auto* ex = std::get_if<scheme::Explicit>(&scheme)) {
        return json{{"kind", "explicit"},
                    {"values", std::vector<double>(ex->values.begin(), ex->values.end())}};
    }
    const auto& rw = std::get<scheme::RandomWalk>(scheme);
    return json{{"kind", "randomwalk"}, {"step_sd", rw.step_sd}, {"seed", rw.seed}};
}

MeanScheme scheme_from_json(const json& j, std::uint64_t fallback_walk_seed) {
    if (j.is_string()) return parse_scheme(j.get<std::string>(), fallback_walk_seed);
    if (!j.is_object() || !j.contains("kind")) {
        throw ParseError("scheme: expected a grammar string or an object with 'kind'");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") return scheme::Constant{j.at("value").get<double>()};
    if (kind == "linear") {
        return scheme::Linear{j.at("a").get<double>(), j.at("b").get<double>()};
    }
    if (kind == "explicit") {
        const auto values = j.at("values").get<std::vector<double>>();
        scheme::Explicit ex;
        ex.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
        return ex;
    }
    if (kind == "randomwalk") {
        return scheme::RandomWalk{
            j.at("step_sd").get<double>(),
            j.contains("seed") ? j.at("seed").get<std::uint64_t>() : fallback_walk_seed};
    }
    throw ParseError("scheme: unknown kind '" + kind + "'");
}

json config_to_json(const ExperimentConfig& config) {
    return json{{"version", 1},
                {"sigma2", config.sigma2},
                {"m", config.m},
                {"n_grid", config.n_grid},
                {"replications", config.replications},
                {"master_seed", config.master_seed},
                {"scheme", scheme_to_json(config.scheme)}};
}

ExperimentConfig config_from_json(const json& j, ExperimentConfig defaults) {
    if (!j.is_object()) throw ParseError("config: expected a JSON object");
    static const char* known[] = {"version",      "sigma2",     "m",
                                  "n_grid",       "replications", "master_seed",
                                  "scheme",       "workers",    "kind",
                                  "n_max",        "checkpoints"};
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* key : known) ok = ok || item.key() == key;
        if (!ok) throw ParseError("config: unknown key '" + item.key() + "'");
    }
    if (j.contains("version") && j.at("version").get<int>() != 1) {
        throw ParseError("config: unsupported version");
    }
    ExperimentConfig config = std::move(defaults);
    if (j.contains("sigma2")) config.sigma2 = j.at("sigma2").get<double>();
    if (j.contains("m")) config.m = j.at("m").get<Index>();
    if (j.contains("n_grid")) config.n_grid = j.at("n_grid").get<std::vector<Index>>();
    if (j.contains("replications")) config.replications = j.at("replications").get<int>();
    if (j.contains("master_seed")) config.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("scheme")) config.scheme = scheme_from_json(j.at("scheme"), config.master_seed);
    return config;
}

ExperimentConfig read_config_file(const std::string& path, ExperimentConfig defaults) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        return config_from_json(j, std::move(defaults));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

namespace {

json summary_to_json(const EstimatorSummary& s) {
    json j{{"estimator", s.estimator}, {"n", s.n},
           {"R", s.replications},      {"mean", s.mean},
           {"bias", s.bias},           {"variance", s.variance},
           {"mse", s.mse},             {"se_mean", s.se_mean},
           {"low_replication", s.low_replication}};
    j["crlb_ratio"] = s.crlb_ratio ? json(*s.crlb_ratio) : json(nullptr);
    return j;
}

constexpr const char* kSeedRule =
    "seed(k,r) = sm64(sm64(master + (k+1)*g) + (r+1)*g), "
    "g = 0x9E3779B97F4A7C15, sm64 = splitmix64 finalizer";

}  // namespace

json experiment_report_json(const ExperimentConfig& config, const std::string& kind,
                            const std::vector<EstimatorSummary>& summaries) {
    json j;
    j["version"] = 1;
    j["kind"] = kind;
    j["config"] = config_to_json(config);
    j["seed_rule"] = kSeedRule;
    j["summaries"] = json::array();
    for (const auto& s : summaries) j["summaries"].push_back(summary_to_json(s));
    return j;
}

json sample_path_report_json(const ExperimentConfig& config, Index n_max,
                             const SamplePath& path) {
    json j;
    j["version"] = 1;
    j["kind"] = "path";
    j["config"] = config_to_json(config);
    j["n_max"] = n_max;
    j["points"] = json::array();
    for (std::size_t k = 0; k < path.n_points.size(); ++k) {
        j["points"].push_back(json{{"n", path.n_points[k]},
                                   {"naive", path.naive_estimates[k]},
                                   {"recast", path.recast_estimates[k]}});
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out = open_for_write(path);
    out << contents;
    finish_write(out, path);
}

}  // namespace nspanel::io
