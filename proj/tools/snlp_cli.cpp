#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "snlp/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kConfig = 2;

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw snlp::Error("cannot write " + p.string());
    out << text;
}

int cmd_run(const std::string& config, const std::string& out_dir, bool no_mc, std::optional<int> workers,
            const std::string& timestamp) {
    snlp::ExperimentConfig cfg = snlp::load_config(config);
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
    snlp::RunOptions opt;
    opt.mc = !no_mc;
    opt.workers = workers;
    opt.timestamp = timestamp;
    snlp::RunResult r = snlp::run_experiment(cfg, opt);

    fs::path dir(out_dir);
    fs::create_directories(dir / "tables");
    write_file(dir / "report.json", r.report_json);
    write_file(dir / "effective_config.toml", cfg.effective_toml);
    for (const auto& t : r.tables)
        snlp::write_table_csv(t, (dir / "tables" / (std::string(snlp::family_name(t.family)) + ".csv")).string());
    std::cout << (r.all_pass ? "PASS" : "FAIL") << " " << (dir / "report.json").string() << "\n";
    return r.all_pass ? kOk : kFail;
}

int cmd_export(const std::string& config, const std::string& family, const std::string& out,
               std::optional<double> q) {
    snlp::ExperimentConfig cfg = snlp::load_config(config);
    auto f = snlp::parse_family(family);
    if (!f) {
        std::cerr << "error: unknown family '" << family << "'\n";
        return kConfig;
    }
    snlp::ScaleTable t = snlp::build_family(cfg, *f, q);
    snlp::write_table_csv(t, out);
    return kOk;
}

int cmd_validate(const std::string& config) {
    snlp::ExperimentConfig cfg = snlp::load_config(config);
    snlp::ValidationResult v = snlp::validate_config(cfg);
    std::cout << v.report_json;
    return v.all_pass ? kOk : kFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale functions and fluctuation identities for level-dependent Levy processes"};
    app.require_subcommand(1);

    std::string config, out_dir = "out", timestamp, family, out_file;
    bool no_mc = false;
    std::optional<int> workers;
    std::optional<double> q;

    auto* run = app.add_subcommand("run", "evaluate the queries of a config and write a report");
    run->add_option("config", config, "TOML config")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_flag("--no-mc", no_mc, "skip Monte Carlo");
    run->add_option("--workers", workers, "Monte Carlo worker threads")->check(CLI::PositiveNumber);
    run->add_option("--timestamp", timestamp, "fixed generated_at value");

    auto* exp = app.add_subcommand("export", "write one table family as CSV");
    exp->add_option("config", config, "TOML config")->required();
    exp->add_option("--family", family, "table family")->required();
    exp->add_option("--out", out_file, "CSV file")->required();
    exp->add_option("--q", q, "killing rate");

    auto* val = app.add_subcommand("validate", "run the invariant suite");
    val->add_option("config", config, "TOML config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*run) return cmd_run(config, out_dir, no_mc, workers, timestamp);
        if (*exp) return cmd_export(config, family, out_file, q);
        if (*val) return cmd_validate(config);
    } catch (const snlp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const snlp::PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFail;
    }
    return kOk;
}
