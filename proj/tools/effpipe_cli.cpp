// effpipe command-line driver. Exit codes: 0 success, 1 validation or
// input errors, 2 runtime and usage errors.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "effpipe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace effpipe;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string format;
    std::string in;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> periods;
    bool quiet = false;
};

int exit_code_for(const std::string& code) {
    if (code == "PARSE" || code == "SCHEMA" || code == "DUPLICATE" || code == "VALIDATION") return 1;
    return 2;
}

PipelineConfig config_from(const Options& o) {
    if (o.config.empty()) throw UsageError("--config is required");
    PipelineConfig c = load_config(o.config);
    if (o.seed) override_seeds(c, *o.seed);
    return c;
}

fs::path out_dir(const Options& o, const PipelineConfig& c) { return o.out.empty() ? c.output.directory : fs::path(o.out); }

std::vector<std::string> formats(const Options& o, const PipelineConfig& c) {
    return o.format.empty() ? c.output.formats : std::vector<std::string>{o.format};
}

// Writes reports and returns the process exit code for the bundle.
int finish(const ReportBundle& b, const Options& o, const PipelineConfig& c) {
    const auto written = write_reports(b, out_dir(o, c), formats(o, c));
    if (!o.quiet) {
        for (const auto& [name, status] : b.stages) std::cout << "stage " << name << ": " << to_string(status) << '\n';
        for (const auto& p : written) std::cout << "wrote " << p.string() << '\n';
    }
    if (b.error) {
        std::cerr << "error [" << b.error->stage << "] " << b.error->code << ": " << b.error->message << '\n';
        std::cerr << "report is " << b.status() << "; results of completed stages were written\n";
        return exit_code_for(b.error->code);
    }
    return 0;
}

ReportBundle prior_bundle(const Options& o, const PipelineConfig& c) {
    const fs::path in = o.in.empty() ? out_dir(o, c) / "report.json" : fs::path(o.in);
    ReportBundle b = parse_report(read_file(in));
    if (b.provenance.config_hash != c.hash)
        throw UsageError("report " + in.string() + " was produced from a different config (" +
                         b.provenance.config_hash + " vs " + c.hash + ")");
    return b;
}

int cmd_validate(const Options& o) {
    const PipelineConfig c = config_from(o);
    const ValidationReport r = validate_all(c);
    std::cout << r;
    if (!r.ok()) return 1;
    if (!o.quiet) std::cout << "config and dataset are valid\n";
    return 0;
}

int cmd_pipeline(const Options& o) {
    const PipelineConfig c = config_from(o);
    return finish(run_pipeline(c), o, c);
}

int cmd_stage(const Options& o, const std::string& stage) {
    const PipelineConfig c = config_from(o);
    require_valid(c);
    ReportBundle b;
    std::optional<PanelDataset> raw;
    if (stage != "cluster") raw = load_dataset(c);
    if (stage == "dea") {
        b = start_bundle(c);
    } else {
        b = prior_bundle(o, c);
        set_provenance(b, c);
        // Re-running a stage discards it and everything downstream.
        bool reset = false;
        for (const auto& s : stage_names()) {
            reset |= s == stage;
            if (reset) b.set_stage(s, StageStatus::not_run);
        }
        if (b.error && b.error->stage != "dea") b.error.reset();
    }
    run_stage(stage, c, raw ? &*raw : nullptr, b, o.periods);
    return finish(b, o, c);
}

int cmd_demo(const Options& o) {
    const fs::path dir = o.out.empty() ? fs::path("effpipe_demo") : fs::path(o.out);
    const fs::path config = write_demo(dir);
    if (!o.quiet) std::cout << "wrote " << config.string() << " and " << (dir / "demo_panel.csv").string() << '\n';
    Options run = o;
    run.config = config.string();
    run.out.clear();
    return cmd_pipeline(run);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"effpipe: DEA efficiency, k-means clustering and PLS path models for panel data"};
    app.set_version_flag("--version", std::string(tool_version));
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App* sub, bool config_positional) {
        if (config_positional) sub->add_option("config_file", o.config, "Pipeline config (JSON)");
        sub->add_option("--config", o.config, "Pipeline config (JSON)");
        sub->add_option("--out", o.out, "Output directory (overrides the config)");
        sub->add_option("--format", o.format, "Report format: csv, json or text")->check(CLI::IsMember({"csv", "json", "text"}));
        sub->add_option("--seed", seed, "Override every stage's seed");
        sub->add_flag("--quiet", o.quiet, "Print only errors");
    };

    auto* validate = app.add_subcommand("validate", "Check a config and its dataset");
    common(validate, true);
    auto* pipeline = app.add_subcommand("pipeline", "Run all stages");
    common(pipeline, true);
    auto* dea = app.add_subcommand("dea", "Run the DEA stage");
    common(dea, false);
    dea->add_option("--period", o.periods, "Restrict to these periods");
    auto* cluster = app.add_subcommand("cluster", "Run the cluster stage on a DEA report");
    common(cluster, false);
    cluster->add_option("--in", o.in, "Prior report (default <out>/report.json)");
    auto* pls = app.add_subcommand("pls", "Run the PLS stage on a cluster report");
    common(pls, false);
    pls->add_option("--in", o.in, "Prior report (default <out>/report.json)");
    auto* demo = app.add_subcommand("demo", "Generate the synthetic dataset and run the pipeline on it");
    demo->add_option("--out", o.out, "Directory for the demo files (default effpipe_demo)");
    demo->add_option("--format", o.format, "Report format: csv, json or text")->check(CLI::IsMember({"csv", "json", "text"}));
    demo->add_option("--seed", seed, "Override every stage's seed");
    demo->add_flag("--quiet", o.quiet, "Print only errors");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    for (auto* sub : app.get_subcommands())
        if (sub->count("--seed")) o.seed = seed;

    std::string stage = "config";
    try {
        if (validate->parsed()) return cmd_validate(o);
        if (pipeline->parsed()) return cmd_pipeline(o);
        if (demo->parsed()) return cmd_demo(o);
        stage = app.get_subcommands().front()->get_name();
        return cmd_stage(o, stage);
    } catch (const Error& e) {
        std::cerr << "error [" << stage << "] " << e.code() << ": " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error [" << stage << "] INTERNAL: " << e.what() << '\n';
        return 2;
    }
}
