// mmdcal: calibrate one point-cloud sample to another with an MMD-trained
// residual network, compare against linear baselines, and export reports.

#include "mmdcal/benchmarks.hpp"
#include "mmdcal/errors.hpp"
#include "mmdcal/io.hpp"
#include "mmdcal/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace mmdcal;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string variant;
    std::string source;
    std::string target;
    std::string model;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--variant", o.variant, "Network variant")->check(CLI::IsMember({"resnet", "mlp"}));
    cmd->add_option("--source", o.source, "Source sample CSV");
    cmd->add_option("--target", o.target, "Target sample CSV");
}

PipelineConfig build_config(const Overrides& o) {
    PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : PipelineConfig::load(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.out = o.out;
    if (!o.variant.empty()) cfg.net.variant = parse_variant(o.variant);
    if (!o.source.empty()) cfg.source = o.source;
    if (!o.target.empty()) cfg.target = o.target;
    if (!o.model.empty()) cfg.perm_test_model = o.model;
    return cfg;
}

void print_summary(const EvaluationReport& r) {
    for (const auto& [name, stats] : r.mmd) {
        std::printf("%-22s MMD %.4f +- %.4f\n", name.c_str(), stats.mean, stats.std);
    }
    for (const auto& [name, p] : r.p_values) std::printf("%-22s p = %.4f\n", name.c_str(), p);
    for (const auto& [name, v] : r.identity_deviation) std::printf("identity deviation %-8s %.4f\n", name.c_str(), v);
    for (const auto& f : r.files) std::printf("wrote %s\n", f.c_str());
}

void write_benchmark(const std::string& kind, const fs::path& dir, std::size_t n, std::size_t d, std::uint64_t seed) {
    fs::create_directories(dir);
    const auto names = default_column_names(d);
    if (kind == "shift") {
        const auto b = shift_benchmark(n, d, 2.0, seed);
        write_csv(dir / "source.csv", b.source, names);
        write_csv(dir / "target.csv", b.target, names);
    } else if (kind == "warp") {
        const auto b = warp_benchmark(n, d, seed);
        write_csv(dir / "source.csv", b.source, names);
        write_csv(dir / "target.csv", b.target, names);
    } else if (kind == "indirect") {
        const auto b = indirect_benchmark(n, d, seed);
        write_csv(dir / "p1d1.csv", b.p1d1, names);
        write_csv(dir / "p2d1.csv", b.p2d1, names);
        write_csv(dir / "p2d2.csv", b.p2d2, names);
        write_csv(dir / "p1d2.csv", b.p1d2, names);
    } else {
        throw ConfigError("unknown benchmark '" + kind + "'");
    }
    std::printf("wrote %s benchmark to %s\n", kind.c_str(), dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distribution calibration with MMD-trained residual networks"};
    app.require_subcommand(1);
    Overrides o;

    auto* calibrate = app.add_subcommand("calibrate", "Train a calibration map and evaluate it");
    auto* ablation = app.add_subcommand("ablation", "Compare ResNet and shortcut-free MLP maps");
    auto* baselines = app.add_subcommand("baselines", "Compare moment matching, PC removal and the ResNet");
    auto* indirect = app.add_subcommand("indirect", "Direct vs composed (indirect) calibration on four samples");
    auto* perm = app.add_subcommand("perm-test", "MMD permutation two-sample test");
    auto* plots = app.add_subcommand("export-plots", "Export PCA and ECDF tables from calibrate outputs");
    for (auto* cmd : {calibrate, ablation, baselines, indirect, perm, plots}) add_common(cmd, o);
    perm->add_option("--model", o.model, "Apply this calibration map to the source first")->check(CLI::ExistingFile);

    std::string bench_kind = "shift";
    std::string bench_out;
    std::size_t bench_n = 2000, bench_d = 5;
    std::uint64_t bench_seed = 0;
    auto* synth = app.add_subcommand("synth", "Write a seeded synthetic benchmark as CSV");
    synth->add_option("kind", bench_kind, "shift | warp | indirect")->check(CLI::IsMember({"shift", "warp", "indirect"}));
    synth->add_option("--out", bench_out, "Output directory")->required();
    synth->add_option("-n", bench_n, "Rows per sample");
    synth->add_option("-d", bench_d, "Dimension");
    synth->add_option("--seed", bench_seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (synth->parsed()) {
            write_benchmark(bench_kind, bench_out, bench_n, bench_d, bench_seed);
            return kOk;
        }
        const PipelineConfig cfg = build_config(o);
        EvaluationReport report;
        if (calibrate->parsed()) report = run_calibrate(cfg);
        else if (ablation->parsed()) report = run_ablation(cfg);
        else if (baselines->parsed()) report = run_baselines(cfg);
        else if (indirect->parsed()) report = run_indirect(cfg);
        else if (perm->parsed()) report = run_perm_test(cfg);
        else if (plots->parsed()) report = export_plot_data(cfg);
        print_summary(report);
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
}
