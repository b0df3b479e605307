#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snlp/errors.hpp"
#include "snlp/identities.hpp"
#include "snlp/montecarlo.hpp"
#include "snlp/scale_functions.hpp"

namespace snlp {

class ConfigError : public Error {
public:
    ConfigError(const std::string& source, long line, long column, const std::string& what);
    long line() const noexcept { return line_; }
    long column() const noexcept { return column_; }

private:
    long line_;
    long column_;
};

struct QueryConfig {
    std::string type;
    double x = 0.0;
    std::optional<double> a;
    std::optional<double> lower;
    std::optional<double> y;
    std::optional<double> z;
    double bin_width = 0.1;
    Reflection reflect = Reflection::None;
    long line = 0;
};

struct GridConfig {
    double lower = 0.0;
    double upper = 4.0;
    int n_per_unit = 4096;
    double tail_length = 16.0;
    int tail_per_unit = 256;
};

struct McConfig {
    bool enabled = true;
    PathConfig path;
    double abs_margin = 0.01;
};

struct ExperimentConfig {
    std::string source;
    std::string model_family;
    ModelSpec model = ModelSpec::brownian(0.0, 1.0);
    RateFunction rate = RateFunction::zero();
    OmegaFunction omega = OmegaFunction::constant(0.0);
    bool has_rate_block = false;
    bool has_omega_block = false;
    GridConfig grid;
    McConfig mc;
    std::vector<QueryConfig> queries;
    std::vector<std::string> warnings;
    std::string effective_toml;  // fully defaulted, re-runnable
};

ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

struct RunOptions {
    bool mc = true;
    std::optional<int> workers;
    std::string timestamp;  // empty: current UTC time
};

struct RunResult {
    std::string report_json;
    bool all_pass = false;
    std::vector<ScaleTable> tables;
};

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt);

struct TableCsv {
    std::string header;
    std::vector<double> x, value, right_derivative;
};

ScaleTable build_family(const ExperimentConfig& cfg, Family family, std::optional<double> q);
std::string table_csv(const ScaleTable& t);
void write_table_csv(const ScaleTable& t, const std::string& path);
TableCsv read_table_csv(const std::string& path);

struct ValidationResult {
    std::string report_json;
    bool all_pass = false;
};

// Invariant suite against the config's model.
ValidationResult validate_config(const ExperimentConfig& cfg);

}  // namespace snlp
