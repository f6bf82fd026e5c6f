#include "mmdcal/benchmarks.hpp"
#include "mmdcal/errors.hpp"
#include "mmdcal/io.hpp"
#include "mmdcal/pipeline.hpp"

#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

using namespace mmdcal;
namespace fs = std::filesystem;

namespace {

struct Workspace {
    fs::path dir;
    explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("mmdcal_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
};

PipelineConfig small_config(const fs::path& dir, const std::string& out) {
    const auto pair = shift_benchmark(400, 3, 1.0, 1);
    write_csv(dir / "source.csv", pair.source, default_column_names(3));
    write_csv(dir / "target.csv", pair.target, default_column_names(3));
    PipelineConfig c;
    c.source = dir / "source.csv";
    c.target = dir / "target.csv";
    c.out = dir / out;
    c.seed = 7;
    c.training.minibatch_size = 100;
    c.training.max_epochs = 8;
    c.net.hidden_width = 8;
    c.evaluation = {2, 100, 20};
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MMDCAL_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config parsing and validation") {
    const Json j = {{"source", "a.csv"},
                    {"target", "b.csv"},
                    {"out", "run"},
                    {"seed", 3},
                    {"net", {{"variant", "mlp"}, {"hidden_width", 10}}},
                    {"training", {{"patience", 4}}},
                    {"evaluation", {{"n_eval_subsets", 2}}},
                    {"baselines", {{"n_remove", 2}}}};
    const PipelineConfig c = PipelineConfig::from_json(j, "/data");
    CHECK(c.source == fs::path("/data/a.csv"));
    CHECK(c.out == fs::path("/data/run"));
    CHECK(c.net.variant == Variant::Mlp);
    CHECK(c.net.hidden_width == 10);
    CHECK(c.net.n_blocks == 3);
    CHECK(c.training.patience == 4);
    CHECK(c.training.minibatch_size == 1000);
    CHECK(c.evaluation.n_eval_subsets == 2);
    CHECK(c.evaluation.eval_subset_size == 1000);
    CHECK(c.n_remove == 2);
    CHECK_NOTHROW(c.validate("calibrate"));
    CHECK(PipelineConfig::from_json(c.to_json()).to_json() == c.to_json());

    PipelineConfig bad = c;
    bad.preprocessing.log = bad.preprocessing.normalize_counts = true;
    CHECK_THROWS_AS(bad.validate("calibrate"), ConfigError);
    bad = c;
    bad.preprocessing.dae = true;
    CHECK_THROWS_AS(bad.validate("calibrate"), ConfigError);
    bad = c;
    bad.target = bad.source;
    CHECK_THROWS_AS(bad.validate("calibrate"), ConfigError);
    bad = c;
    bad.out.clear();
    CHECK_THROWS_AS(bad.validate("calibrate"), ConfigError);
    CHECK_THROWS_AS(c.validate("indirect"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(Json{{"schema_version", 2}}), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(Json{{"seed", "x"}}), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(Json::array()), ConfigError);
}

TEST_CASE("evaluation subsets") {
    const EvaluationConfig cfg{3, 50, 10};
    const auto s = EvaluationSubsets::draw(120, 200, cfg, 9);
    REQUIRE(s.source_rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(s.source_rows[i].size() == 50);
        CHECK(s.reference_a[i].size() == s.reference_b[i].size());
        std::vector<std::size_t> ref = s.reference_a[i];
        ref.insert(ref.end(), s.reference_b[i].begin(), s.reference_b[i].end());
        std::sort(ref.begin(), ref.end());
        CHECK(std::adjacent_find(ref.begin(), ref.end()) == ref.end());
        std::vector<std::size_t> src = s.source_rows[i];
        std::sort(src.begin(), src.end());
        CHECK(std::adjacent_find(src.begin(), src.end()) == src.end());
        CHECK(src.back() < 120);
    }
    CHECK(s.source_rows[0] != s.source_rows[1]);
    const auto again = EvaluationSubsets::draw(120, 200, cfg, 9);
    CHECK(again.to_json() == s.to_json());
    // Subsets never exceed the available rows.
    const auto capped = EvaluationSubsets::draw(30, 40, cfg, 9);
    CHECK(capped.source_size == 30);
    CHECK(capped.reference_size * 2 <= 40);
}

TEST_CASE("ECDF and KS distance") {
    Vector v(4);
    v << 3.0, 1.0, 2.0, 2.0;
    const Ecdf e = ecdf(v);
    CHECK(e.values == std::vector<double>{1.0, 2.0, 2.0, 3.0});
    CHECK(e.cumulative == std::vector<double>{0.25, 0.5, 0.75, 1.0});
    Vector a(3), b(3);
    a << 0.0, 1.0, 2.0;
    b << 10.0, 11.0, 12.0;
    CHECK(ks_distance(a, a) == 0.0);
    CHECK(ks_distance(a, b) == 1.0);
    b << 0.5, 1.5, 2.5;
    CHECK(ks_distance(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK(ks_distance(b, a) == ks_distance(a, b));
}

TEST_CASE("calibrate writes a deterministic report") {
    Workspace ws("pipeline_det");
    PipelineConfig c = small_config(ws.dir, "run1");
    const EvaluationReport r1 = run_calibrate(c);
    c.out = ws.dir / "run2";
    run_calibrate(c);
    const std::string a = read_text_file(ws.dir / "run1" / "report_calibrate.json");
    const std::string b = read_text_file(ws.dir / "run2" / "report_calibrate.json");
    // The report records its output directory; compare everything else.
    Json ja = Json::parse(a), jb = Json::parse(b);
    ja["config"].erase("out");
    jb["config"].erase("out");
    CHECK(ja.dump() == jb.dump());
    CHECK(read_text_file(ws.dir / "run1" / "model.json") == read_text_file(ws.dir / "run2" / "model.json"));
    CHECK(read_text_file(ws.dir / "run1" / "calibrated.csv") == read_text_file(ws.dir / "run2" / "calibrated.csv"));

    for (const char* f : {"source.csv", "target.csv", "calibrated.csv", "model.json", "report_calibrate.json",
                          "manifest_calibrate.json"}) {
        CHECK(fs::exists(ws.dir / "run1" / f));
    }
    CHECK(r1.mmd.count("before") == 1);
    CHECK(r1.mmd.count("after_resnet") == 1);
    CHECK(r1.mmd.count("target_target") == 1);
    CHECK(r1.mmd.at("before").values.size() == 2);
    CHECK(r1.p_values.count("before") == 1);
    CHECK(r1.identity_deviation.count("resnet") == 1);

    const CalibrationMap map = load_calibration_map(ws.dir / "run1" / "model.json");
    const Matrix cal = read_csv(ws.dir / "run1" / "calibrated.csv").data;
    CHECK((map.apply(read_csv(c.source).data) - cal).cwiseAbs().maxCoeff() <= 1e-12);

    // Plot export reads the calibrate artifacts.
    c.out = ws.dir / "run1";
    const EvaluationReport plots = export_plot_data(c);
    CHECK(fs::exists(ws.dir / "run1" / "plot_pca.csv"));
    CHECK(fs::exists(ws.dir / "run1" / "plot_ecdf.csv"));
    CHECK(plots.audit["ks_distance_to_target"].contains("c1"));
    const std::string pca = read_text_file(ws.dir / "run1" / "plot_pca.csv");
    CHECK(pca.rfind("set,PC1,PC2\n", 0) == 0);
    CHECK(std::count(pca.begin(), pca.end(), '\n') == 1 + 3 * 400);

    c.perm_test_model = ws.dir / "run1" / "model.json";
    c.out = ws.dir / "perm";
    const EvaluationReport perm = run_perm_test(c);
    CHECK(perm.p_values.count("calibrated_vs_target") == 1);
    CHECK(perm.mmd.at("calibrated_vs_target").values.size() == 1);
}

TEST_CASE("ablation, baselines and indirect commands") {
    Workspace ws("pipeline_cmds");
    PipelineConfig c = small_config(ws.dir, "abl");
    const EvaluationReport abl = run_ablation(c);
    CHECK(abl.identity_deviation.count("resnet") == 1);
    CHECK(abl.identity_deviation.count("mlp") == 1);
    CHECK(fs::exists(ws.dir / "abl" / "model_mlp.json"));

    c.out = ws.dir / "base";
    const EvaluationReport base = run_baselines(c);
    for (const char* k : {"before", "after_moment_match", "after_pc_removal", "after_resnet", "target_target"}) {
        CHECK(base.mmd.count(k) == 1);
    }
    CHECK(base.audit["pc_removal"]["removed_pcs"].size() == 1);
    CHECK(base.audit["moment_match"]["max_abs_mean_gap"].get<double>() < 1e-10);

    const IndirectBenchmark ib = indirect_benchmark(300, 3, 4);
    PipelineConfig ic = small_config(ws.dir, "ind");
    ic.indirect.p1d1 = ws.dir / "p1d1.csv";
    ic.indirect.p2d1 = ws.dir / "p2d1.csv";
    ic.indirect.p2d2 = ws.dir / "p2d2.csv";
    ic.indirect.p1d2 = ws.dir / "p1d2.csv";
    write_csv(ic.indirect.p1d1, ib.p1d1, default_column_names(3));
    write_csv(ic.indirect.p2d1, ib.p2d1, default_column_names(3));
    write_csv(ic.indirect.p2d2, ib.p2d2, default_column_names(3));
    write_csv(ic.indirect.p1d2, ib.p1d2, default_column_names(3));
    const EvaluationReport ind = run_indirect(ic);
    for (const char* k : {"before", "direct", "indirect", "target_target"}) CHECK(ind.mmd.count(k) == 1);
    CHECK(fs::exists(ws.dir / "ind" / "calibrated_indirect.csv"));
}

TEST_CASE("failed runs leave no partial artifacts") {
    Workspace ws("pipeline_fail");
    PipelineConfig c = small_config(ws.dir, "diverge");
    c.training.rmsprop.learning_rate = 1e300;
    CHECK_THROWS_AS(run_calibrate(c), NumericError);
    CHECK_FALSE(fs::exists(ws.dir / "diverge"));

    // An output file that would replace an input is refused and the
    // files written before it are removed.
    PipelineConfig clash = small_config(ws.dir, "clash");
    fs::create_directories(clash.out);
    fs::copy_file(clash.source, clash.out / "source.csv");
    clash.source = clash.out / "source.csv";
    const std::string before = read_text_file(clash.source);
    CHECK_THROWS_AS(run_calibrate(clash), ConfigError);
    CHECK(read_text_file(clash.source) == before);
    CHECK(std::distance(fs::directory_iterator(clash.out), fs::directory_iterator{}) == 1);

    PipelineConfig missing = small_config(ws.dir, "missing");
    missing.source = ws.dir / "nope.csv";
    CHECK_THROWS_AS(run_calibrate(missing), DataError);
    CHECK_FALSE(fs::exists(ws.dir / "missing"));
    missing.out = ws.dir / "empty";
    CHECK_THROWS_AS(export_plot_data(small_config(ws.dir, "empty")), DataError);
}

TEST_CASE("preprocessing chain") {
    Matrix counts = shift_benchmark(300, 4, 1.0, 2).source.array().abs().round() + 1.0;
    Sample s(counts, default_column_names(4), "s");
    PreprocessingConfig p;
    p.log = true;
    p.pca_k = 2;
    Json log;
    const auto out = preprocess({s, s}, p, 1, &log);
    REQUIRE(out.size() == 2);
    CHECK(out[0].stage == Stage::PcaReduced);
    CHECK(out[0].cols() == 2);
    CHECK(out[0].data == out[1].data);
    CHECK_FALSE(log.is_null());
}

TEST_CASE("command line exit codes") {
    Workspace ws("cli");
    const auto pair = shift_benchmark(200, 2, 1.0, 3);
    write_csv(ws.dir / "s.csv", pair.source, default_column_names(2));
    write_csv(ws.dir / "t.csv", pair.target, default_column_names(2));
    write_text_file(ws.dir / "bad.csv", "c1,c2\n1,2\n3,nan\n");
    const std::string d = ws.dir.string();
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("nonsense") == 1);
    CHECK(run_cli("calibrate --source " + d + "/s.csv --target " + d + "/s.csv --out " + d + "/o") == 1);
    CHECK(run_cli("calibrate --source " + d + "/bad.csv --target " + d + "/t.csv --out " + d + "/o") == 2);
    write_text_file(ws.dir / "cfg.json",
                    R"({"source": "s.csv", "target": "t.csv", "out": "o",
                        "training": {"minibatch_size": 50, "max_epochs": 1, "rmsprop": {"learning_rate": 1e300}},
                        "evaluation": {"n_eval_subsets": 1, "eval_subset_size": 50, "n_permutations": 5}})");
    CHECK(run_cli("calibrate --config " + d + "/cfg.json") == 3);
    CHECK(run_cli("synth warp --out " + d + "/w -n 100 -d 2 --seed 1") == 0);
    CHECK(fs::exists(ws.dir / "w" / "source.csv"));
}

TEST_CASE("identity benchmark: before matches the target-target reference") {
    Workspace ws("pipeline_identity");
    const Matrix x = gaussian_sample(600, 3, 5);
    write_csv(ws.dir / "a.csv", x, default_column_names(3));
    write_csv(ws.dir / "b.csv", x, default_column_names(3));
    PipelineConfig c;
    c.source = ws.dir / "a.csv";
    c.target = ws.dir / "b.csv";
    c.out = ws.dir / "out";
    c.training.minibatch_size = 100;
    c.training.max_epochs = 3;
    c.evaluation = {3, 200, 10};
    const EvaluationReport r = run_ablation(c);
    CHECK(std::abs(r.mmd.at("before").mean - r.mmd.at("target_target").mean) < 0.05);
    // Both variants are scored on the same subsets.
    CHECK(r.evaluation["subsets"]["seeds"].size() == 3);
    CHECK(r.mmd.at("after_resnet").values.size() == r.mmd.at("after_mlp").values.size());
}

TEST_CASE("indirect route on four equal samples") {
    Workspace ws("pipeline_equal4");
    // Large samples so that source and target subsets of the same file
    // rarely share rows.
    const Matrix x = gaussian_sample(2000, 3, 6);
    PipelineConfig c;
    c.indirect = {ws.dir / "1.csv", ws.dir / "2.csv", ws.dir / "3.csv", ws.dir / "4.csv"};
    for (const auto& p : {c.indirect.p1d1, c.indirect.p2d1, c.indirect.p2d2, c.indirect.p1d2}) {
        write_csv(p, x, default_column_names(3));
    }
    c.out = ws.dir / "out";
    c.training.minibatch_size = 100;
    c.training.max_epochs = 10;
    c.evaluation = {3, 200, 10};
    const EvaluationReport r = run_indirect(c);
    const double ref = r.mmd.at("target_target").mean;
    CHECK(std::abs(r.mmd.at("direct").mean - r.mmd.at("before").mean) < 0.01);
    CHECK(std::abs(r.mmd.at("direct").mean - ref) < 0.05);
    CHECK(std::abs(r.mmd.at("indirect").mean - ref) < 0.05);
}

TEST_CASE("plot export on a trained shift benchmark") {
    Workspace ws("pipeline_plots");
    const auto pair = shift_benchmark(1000, 2, 2.0, 8);
    PipelineConfig c;
    c.source = ws.dir / "s.csv";
    c.target = ws.dir / "t.csv";
    write_csv(c.source, pair.source, default_column_names(2));
    write_csv(c.target, pair.target, default_column_names(2));
    c.out = ws.dir / "out";
    c.seed = 9;
    c.training.minibatch_size = 300;
    c.evaluation = {2, 300, 10};
    run_calibrate(c);
    const EvaluationReport r = export_plot_data(c);
    // Calibrated ECDF is closer to the target than the source ECDF.
    for (const char* m : {"c1", "c2"}) {
        const auto& ks = r.audit["ks_distance_to_target"][m];
        if (std::string(m) == "c1") CHECK(ks["calibrated"].get<double>() < ks["source"].get<double>());
    }
    CHECK(r.audit["ks_distance_to_target"]["c1"]["source"].get<double>() > 0.5);

    // ECDF table: per (marker, set) the cumulative column rises to 1.
    const std::string text = read_text_file(ws.dir / "out" / "plot_ecdf.csv");
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::string key;
    double prev = 0.0;
    std::size_t groups = 0;
    while (std::getline(in, line)) {
        const auto a = line.find(','), b = line.find(',', a + 1), d = line.rfind(',');
        const std::string k = line.substr(0, b);
        const double cum = std::stod(line.substr(d + 1));
        if (k != key) {
            if (!key.empty()) CHECK(prev == 1.0);
            key = k;
            prev = 0.0;
            ++groups;
        }
        CHECK(cum >= prev);
        prev = cum;
    }
    CHECK(prev == 1.0);
    CHECK(groups == 6);

    // Target PC scores have zero column means.
    std::istringstream pin(read_text_file(ws.dir / "out" / "plot_pca.csv"));
    std::getline(pin, line);
    double s1 = 0.0, s2 = 0.0;
    std::size_t n = 0;
    while (std::getline(pin, line) && line.rfind("target,", 0) == 0) {
        const auto a = line.find(','), b = line.find(',', a + 1);
        s1 += std::stod(line.substr(a + 1, b - a - 1));
        s2 += std::stod(line.substr(b + 1));
        ++n;
    }
    CHECK(n == 1000);
    CHECK(std::abs(s1 / n) < 1e-10);
    CHECK(std::abs(s2 / n) < 1e-10);
}
