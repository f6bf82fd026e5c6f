#include "mmdcal/pipeline.hpp"

#include "mmdcal/baselines.hpp"
#include "mmdcal/errors.hpp"
#include "mmdcal/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;

namespace mmdcal {

namespace {

// Seed streams derived from PipelineConfig::seed.
constexpr std::uint64_t kTrainStream = 31;
constexpr std::uint64_t kEvalStream = 32;
constexpr std::uint64_t kPermStream = 33;
constexpr std::uint64_t kDaeStream = 34;
constexpr std::uint64_t kIndirectStream = 40;

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

bool same_file(const fs::path& a, const fs::path& b) {
    if (a.empty() || b.empty()) return false;
    std::error_code ec;
    if (fs::exists(a, ec) && fs::exists(b, ec)) return fs::equivalent(a, b, ec);
    return fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

/// Writes named artifacts into one directory and deletes them again unless
/// commit() is reached. Refuses to write over any input path.
class ArtifactWriter {
public:
    ArtifactWriter(fs::path dir, std::vector<fs::path> inputs) : dir_(std::move(dir)), inputs_(std::move(inputs)) {
        if (dir_.empty()) throw ConfigError("no output directory configured");
        std::error_code ec;
        if (!fs::exists(dir_)) {
            fs::create_directories(dir_, ec);
            if (ec) throw DataError("cannot create output directory '" + dir_.string() + "': " + ec.message());
            created_dir_ = true;
        }
    }
    ArtifactWriter(const ArtifactWriter&) = delete;
    ArtifactWriter& operator=(const ArtifactWriter&) = delete;

    ~ArtifactWriter() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& f : written_) fs::remove(dir_ / f, ec);
        if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void text(const std::string& name, const std::string& content) {
        const fs::path target = path(name);
        for (const auto& in : inputs_) {
            if (same_file(target, in)) throw ConfigError("refusing to overwrite input file '" + in.string() + "'");
        }
        write_text_file(target, content);
        if (std::find(written_.begin(), written_.end(), name) == written_.end()) written_.push_back(name);
    }

    void csv(const std::string& name, const Matrix& data, const std::vector<std::string>& names) {
        text(name, format_csv(data, names));
    }

    void commit() { committed_ = true; }
    const std::vector<std::string>& files() const { return written_; }

private:
    fs::path dir_;
    std::vector<fs::path> inputs_;
    std::vector<std::string> written_;
    bool created_dir_ = false;
    bool committed_ = false;
};

ConditionStats summarize(std::vector<double> values) {
    ConditionStats s;
    s.values = std::move(values);
    const double n = static_cast<double>(s.values.size());
    for (double v : s.values) s.mean += v;
    s.mean /= n;
    if (s.values.size() > 1) {
        double ss = 0.0;
        for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

Json stats_json(const ConditionStats& s) {
    return {{"mean", s.mean}, {"std", s.std}, {"values", s.values}};
}

Json training_summary(const CalibrationMap& map) {
    Json log = Json::array();
    for (const auto& e : map.training_log) {
        log.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss ? Json(*e.train_loss) : Json(nullptr)},
                       {"validation_loss", e.validation_loss}});
    }
    return {{"variant", to_string(map.shape.variant)},
            {"best_epoch", map.best_epoch},
            {"epochs_run", map.training_log.empty() ? 0 : map.training_log.back().epoch},
            {"seed", map.config.seed},
            {"kernel", kernel_to_json(map.kernel)},
            {"log", log}};
}

void require_shared_columns(const std::vector<Sample>& samples) {
    for (const auto& s : samples) {
        if (s.column_names != samples.front().column_names) {
            throw DimensionError("samples '" + samples.front().provenance + "' and '" + s.provenance +
                                 "' do not share column names");
        }
    }
}

TrainingConfig training_for(const PipelineConfig& cfg, std::uint64_t stream) {
    TrainingConfig t = cfg.training;
    t.seed = derive_seed(cfg.seed, stream);
    return t;
}

/// Report plus the artifacts every command writes.
void finish(EvaluationReport& report, ArtifactWriter& w) {
    const std::string report_name = "report_" + report.command + ".json";
    report.files = w.files();
    report.files.push_back(report_name);
    std::sort(report.files.begin(), report.files.end());
    w.text(report_name, report.to_json().dump(1) + "\n");
    Json manifest = {{"command", report.command},
                     {"created_utc", utc_timestamp()},
                     {"report", report_name},
                     {"files", report.files}};
    w.text("manifest_" + report.command + ".json", manifest.dump(1) + "\n");
    w.commit();
}

struct LoadedPair {
    Sample source;
    Sample target;
    Json preprocessing_log;
};

LoadedPair load_pair(const PipelineConfig& cfg) {
    std::vector<Sample> raw{read_csv(cfg.source), read_csv(cfg.target)};
    require_shared_columns(raw);
    LoadedPair p;
    auto pre = preprocess(raw, cfg.preprocessing, derive_seed(cfg.seed, kDaeStream), &p.preprocessing_log);
    p.source = std::move(pre[0]);
    p.target = std::move(pre[1]);
    return p;
}

EvaluationReport start_report(const std::string& command, const PipelineConfig& cfg, const EvaluationFrame& frame,
                              const EvaluationSubsets& subsets) {
    EvaluationReport r;
    r.command = command;
    r.config = cfg.to_json();
    r.evaluation = {{"standardization",
                     {{"mean", std::vector<double>(frame.standardization.mean.begin(), frame.standardization.mean.end())},
                      {"std", std::vector<double>(frame.standardization.std.begin(), frame.standardization.std.end())}}},
                    {"kernel", kernel_to_json(frame.kernel)},
                    {"statistic", "sqrt of biased MMD^2 in standardized source coordinates"},
                    {"subsets", subsets.to_json()}};
    return r;
}

double subset_perm_test(const EvaluationFrame& frame, const EvaluationSubsets& subsets, const Matrix& candidate,
                        const Matrix& target, std::size_t n_permutations, std::uint64_t seed) {
    const Matrix x = frame.to_frame(take_rows(candidate, subsets.source_rows.front()));
    const Matrix y = frame.to_frame(take_rows(target, subsets.target_rows.front()));
    return mmd_permutation_test(x, y, frame.kernel, n_permutations, seed);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

PipelineConfig PipelineConfig::from_json(const Json& j, const fs::path& base) {
    PipelineConfig c;
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        const int version = get_or<int>(j, "schema_version", kConfigSchemaVersion);
        if (version != kConfigSchemaVersion) {
            throw ConfigError("unsupported config schema_version " + std::to_string(version));
        }
        c.source = resolve(get_or<std::string>(j, "source", ""), base);
        c.target = resolve(get_or<std::string>(j, "target", ""), base);
        c.out = resolve(get_or<std::string>(j, "out", ""), base);
        c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
        if (j.contains("preprocessing")) {
            const Json& p = j.at("preprocessing");
            auto& pc = c.preprocessing;
            pc.log = get_or<bool>(p, "log", pc.log);
            pc.normalize_counts = get_or<bool>(p, "normalize_counts", pc.normalize_counts);
            pc.normalize_total = get_or<double>(p, "normalize_total", pc.normalize_total);
            if (p.contains("dae")) {
                const Json& d = p.at("dae");
                pc.dae = get_or<bool>(d, "enabled", true);
                pc.dae_max_zeros = get_or<std::size_t>(d, "max_zeros", pc.dae_max_zeros);
                pc.dae_config.hidden_width = get_or<std::size_t>(d, "hidden_width", pc.dae_config.hidden_width);
                pc.dae_config.corruption_keep_prob = get_or<double>(d, "keep_prob", pc.dae_config.corruption_keep_prob);
                if (d.contains("training")) pc.dae_config.training = training_config_from_json(d.at("training"));
            }
            if (p.contains("pca")) pc.pca_k = get_or<std::size_t>(p.at("pca"), "k", pc.pca_k);
        }
        if (j.contains("net")) {
            const Json& n = j.at("net");
            c.net.n_blocks = get_or<std::size_t>(n, "n_blocks", c.net.n_blocks);
            c.net.hidden_width = get_or<std::size_t>(n, "hidden_width", c.net.hidden_width);
            if (n.contains("variant")) c.net.variant = parse_variant(n.at("variant").get<std::string>());
        }
        if (j.contains("training")) c.training = training_config_from_json(j.at("training"));
        if (j.contains("evaluation")) {
            const Json& e = j.at("evaluation");
            c.evaluation.n_eval_subsets = get_or<std::size_t>(e, "n_eval_subsets", c.evaluation.n_eval_subsets);
            c.evaluation.eval_subset_size = get_or<std::size_t>(e, "eval_subset_size", c.evaluation.eval_subset_size);
            c.evaluation.n_permutations = get_or<std::size_t>(e, "n_permutations", c.evaluation.n_permutations);
        }
        if (j.contains("baselines")) c.n_remove = get_or<std::size_t>(j.at("baselines"), "n_remove", c.n_remove);
        if (j.contains("indirect")) {
            const Json& r = j.at("indirect");
            c.indirect.p1d1 = resolve(get_or<std::string>(r, "p1d1", ""), base);
            c.indirect.p2d1 = resolve(get_or<std::string>(r, "p2d1", ""), base);
            c.indirect.p2d2 = resolve(get_or<std::string>(r, "p2d2", ""), base);
            c.indirect.p1d2 = resolve(get_or<std::string>(r, "p1d2", ""), base);
        }
        if (j.contains("perm_test")) c.perm_test_model = resolve(get_or<std::string>(j.at("perm_test"), "model", ""), base);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return from_json(j, path.parent_path());
}

Json PipelineConfig::to_json() const {
    const auto& p = preprocessing;
    Json dae = {{"enabled", p.dae},
                {"max_zeros", p.dae_max_zeros},
                {"hidden_width", p.dae_config.hidden_width},
                {"keep_prob", p.dae_config.corruption_keep_prob},
                {"training", training_config_to_json(p.dae_config.training)}};
    return {{"schema_version", kConfigSchemaVersion},
            {"source", source.generic_string()},
            {"target", target.generic_string()},
            {"out", out.generic_string()},
            {"seed", seed},
            {"preprocessing",
             {{"log", p.log},
              {"normalize_counts", p.normalize_counts},
              {"normalize_total", p.normalize_total},
              {"dae", dae},
              {"pca", {{"k", p.pca_k}}}}},
            {"net", {{"n_blocks", net.n_blocks}, {"hidden_width", net.hidden_width}, {"variant", to_string(net.variant)}}},
            {"training", training_config_to_json(training)},
            {"evaluation",
             {{"n_eval_subsets", evaluation.n_eval_subsets},
              {"eval_subset_size", evaluation.eval_subset_size},
              {"n_permutations", evaluation.n_permutations}}},
            {"baselines", {{"n_remove", n_remove}}},
            {"indirect",
             {{"p1d1", indirect.p1d1.generic_string()},
              {"p2d1", indirect.p2d1.generic_string()},
              {"p2d2", indirect.p2d2.generic_string()},
              {"p1d2", indirect.p1d2.generic_string()}}},
            {"perm_test", {{"model", perm_test_model.generic_string()}}}};
}

void PipelineConfig::validate(const std::string& command) const {
    if (out.empty()) throw ConfigError("an output directory is required (config 'out' or --out)");
    if (net.n_blocks == 0 || net.hidden_width == 0) throw ConfigError("net shape counts must be positive");
    if (evaluation.n_eval_subsets == 0 || evaluation.eval_subset_size == 0 || evaluation.n_permutations == 0) {
        throw ConfigError("evaluation counts must be positive");
    }
    if (preprocessing.log && preprocessing.normalize_counts) {
        throw ConfigError("normalize_counts already applies log(1 + x); do not also enable log");
    }
    if (preprocessing.dae && !preprocessing.log && !preprocessing.normalize_counts) {
        throw ConfigError("the DAE step requires log or normalize_counts first");
    }
    training.validate();

    std::vector<fs::path> inputs;
    if (command == "indirect") {
        inputs = {indirect.p1d1, indirect.p2d1, indirect.p2d2, indirect.p1d2};
        const char* names[] = {"p1d1", "p2d1", "p2d2", "p1d2"};
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (inputs[i].empty()) throw ConfigError(std::string("indirect: missing role ") + names[i]);
        }
    } else if (command != "export-plots") {
        if (source.empty() || target.empty()) throw ConfigError("source and target paths are required");
        inputs = {source, target};
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t k = i + 1; k < inputs.size(); ++k) {
            if (inputs[i] == inputs[k] || same_file(inputs[i], inputs[k])) {
                throw ConfigError("input paths must be distinct: '" + inputs[i].string() + "'");
            }
        }
        if (same_file(inputs[i], out)) throw ConfigError("output directory coincides with an input");
    }
}

// ---------------------------------------------------------------------------
// Evaluation

Json EvaluationReport::to_json() const {
    Json mmd_json = Json::object();
    for (const auto& [k, v] : mmd) mmd_json[k] = stats_json(v);
    return {{"report_schema_version", kReportSchemaVersion},
            {"command", command},
            {"config", config},
            {"evaluation", evaluation},
            {"mmd", mmd_json},
            {"p_values", p_values},
            {"identity_deviation", identity_deviation},
            {"training", training},
            {"audit", audit},
            {"files", files}};
}

EvaluationFrame EvaluationFrame::fit(const Matrix& source, const Matrix& target) {
    EvaluationFrame f;
    f.standardization = StandardizationParams::fit(source);
    f.kernel = heuristic_bandwidths(f.standardization.apply(target));
    return f;
}

EvaluationSubsets EvaluationSubsets::draw(std::size_t n_source, std::size_t n_target, const EvaluationConfig& config,
                                          std::uint64_t seed) {
    EvaluationSubsets s;
    s.source_size = std::min(config.eval_subset_size, n_source);
    s.target_size = std::min(config.eval_subset_size, n_target);
    s.reference_size = std::min(config.eval_subset_size, n_target / 2);
    if (s.source_size < 1 || s.reference_size < 1) throw DataError("too few rows for evaluation subsets");
    for (std::size_t i = 0; i < config.n_eval_subsets; ++i) {
        const std::uint64_t sub_seed = derive_seed(seed, i);
        Rng rng(sub_seed);
        s.seeds.push_back(sub_seed);
        s.source_rows.push_back(sample_without_replacement(rng, n_source, s.source_size));
        s.target_rows.push_back(sample_without_replacement(rng, n_target, s.target_size));
        auto ref = sample_without_replacement(rng, n_target, 2 * s.reference_size);
        s.reference_a.emplace_back(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(s.reference_size));
        s.reference_b.emplace_back(ref.begin() + static_cast<std::ptrdiff_t>(s.reference_size), ref.end());
    }
    return s;
}

Json EvaluationSubsets::to_json() const {
    return {{"seeds", seeds},
            {"source_size", source_size},
            {"target_size", target_size},
            {"reference_size", reference_size},
            {"draw_order",
             "per seed: Rng(seed) draws source rows, then target rows, then 2*reference_size target rows split in half"}};
}

ConditionStats evaluate_condition(const EvaluationFrame& frame, const EvaluationSubsets& subsets,
                                  const Matrix& candidate, const Matrix& target) {
    const Matrix c = frame.to_frame(candidate);
    const Matrix t = frame.to_frame(target);
    std::vector<double> values;
    for (std::size_t i = 0; i < subsets.seeds.size(); ++i) {
        values.push_back(mmd_biased(take_rows(c, subsets.source_rows[i]), take_rows(t, subsets.target_rows[i]), frame.kernel).mmd);
    }
    return summarize(std::move(values));
}

ConditionStats evaluate_reference(const EvaluationFrame& frame, const EvaluationSubsets& subsets, const Matrix& target) {
    const Matrix t = frame.to_frame(target);
    std::vector<double> values;
    for (std::size_t i = 0; i < subsets.seeds.size(); ++i) {
        values.push_back(mmd_biased(take_rows(t, subsets.reference_a[i]), take_rows(t, subsets.reference_b[i]), frame.kernel).mmd);
    }
    return summarize(std::move(values));
}

// ---------------------------------------------------------------------------
// Preprocessing glue

std::vector<Sample> preprocess(const std::vector<Sample>& samples, const PreprocessingConfig& config,
                               std::uint64_t seed, Json* log) {
    std::vector<Sample> out = samples;
    Json steps = Json::array();
    if (config.normalize_counts) {
        for (auto& s : out) s = normalize_counts(s, config.normalize_total);
        steps.push_back({{"step", "normalize_counts"}, {"total", config.normalize_total}});
    } else if (config.log) {
        for (auto& s : out) s = log_transform(s);
        steps.push_back({{"step", "log1p"}});
    }
    if (config.dae) {
        Matrix pooled;
        for (const auto& s : out) {
            std::vector<std::size_t> keep;
            for (Eigen::Index i = 0; i < s.data.rows(); ++i) {
                if (static_cast<std::size_t>((s.data.row(i).array() == 0.0).count()) <= config.dae_max_zeros) {
                    keep.push_back(static_cast<std::size_t>(i));
                }
            }
            const Matrix clean = take_rows(s.data, keep);
            pooled = pooled.size() == 0 ? clean : vstack(pooled, clean);
        }
        if (pooled.rows() == 0) throw DataError("no clean cells to train the denoising autoencoder");
        DaeConfig dc = config.dae_config;
        dc.training.seed = seed;
        const DaeModel dae = train_dae(Sample(pooled, out.front().column_names, "clean-cells", out.front().stage), dc);
        for (auto& s : out) s = denoise(dae, s);
        steps.push_back({{"step", "dae"},
                         {"clean_cells", pooled.rows()},
                         {"max_zeros", config.dae_max_zeros},
                         {"best_epoch", dae.best_epoch},
                         {"seed", seed}});
    }
    if (config.pca_k > 0) {
        auto [model, reduced] = reduce_pca(out, config.pca_k, PcaFitRows::Pooled);
        out = std::move(reduced);
        steps.push_back({{"step", "pca"},
                         {"k", config.pca_k},
                         {"explained_variance",
                          std::vector<double>(model.explained_variance.begin(), model.explained_variance.end())}});
    }
    if (log) *log = steps;
    return out;
}

Ecdf ecdf(const Vector& values) {
    Ecdf e;
    e.values.assign(values.begin(), values.end());
    std::sort(e.values.begin(), e.values.end());
    const double n = static_cast<double>(e.values.size());
    for (std::size_t i = 0; i < e.values.size(); ++i) e.cumulative.push_back(static_cast<double>(i + 1) / n);
    return e;
}

double ks_distance(const Vector& a, const Vector& b) {
    if (a.size() == 0 || b.size() == 0) throw DataError("ks_distance: empty sample");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double best = 0.0;
    while (i < x.size() || j < y.size()) {
        double t;
        if (j >= y.size() || (i < x.size() && x[i] <= y[j])) {
            t = x[i];
        } else {
            t = y[j];
        }
        while (i < x.size() && x[i] <= t) ++i;
        while (j < y.size() && y[j] <= t) ++j;
        best = std::max(best, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Commands

EvaluationReport run_calibrate(const PipelineConfig& cfg) {
    cfg.validate("calibrate");
    LoadedPair data = load_pair(cfg);
    const EvaluationFrame frame = EvaluationFrame::fit(data.source.data, data.target.data);
    const auto subsets = EvaluationSubsets::draw(data.source.rows(), data.target.rows(), cfg.evaluation,
                                                 derive_seed(cfg.seed, kEvalStream));
    ArtifactWriter w(cfg.out, {cfg.source, cfg.target});

    const CalibrationMap map = train(data.source.data, data.target.data, cfg.net, training_for(cfg, kTrainStream));
    const Matrix calibrated = map.apply(data.source.data);
    if (!all_finite(calibrated)) throw NumericError("calibrated output is non-finite");

    EvaluationReport r = start_report("calibrate", cfg, frame, subsets);
    const std::string after = "after_" + to_string(cfg.net.variant);
    r.mmd["before"] = evaluate_condition(frame, subsets, data.source.data, data.target.data);
    r.mmd[after] = evaluate_condition(frame, subsets, calibrated, data.target.data);
    r.mmd["target_target"] = evaluate_reference(frame, subsets, data.target.data);
    const std::uint64_t perm_seed = derive_seed(cfg.seed, kPermStream);
    r.p_values["before"] = subset_perm_test(frame, subsets, data.source.data, data.target.data,
                                            cfg.evaluation.n_permutations, perm_seed);
    r.p_values[after] =
        subset_perm_test(frame, subsets, calibrated, data.target.data, cfg.evaluation.n_permutations, perm_seed);
    r.identity_deviation[to_string(cfg.net.variant)] =
        identity_deviation(frame.to_frame(data.source.data), frame.to_frame(calibrated));
    r.training[to_string(cfg.net.variant)] = training_summary(map);
    r.training["preprocessing"] = data.preprocessing_log;

    w.csv("source.csv", data.source.data, data.source.column_names);
    w.csv("target.csv", data.target.data, data.target.column_names);
    w.csv("calibrated.csv", calibrated, data.source.column_names);
    w.text("model.json", calibration_map_to_json(map).dump(1) + "\n");
    finish(r, w);
    return r;
}

EvaluationReport run_ablation(const PipelineConfig& cfg) {
    cfg.validate("ablation");
    LoadedPair data = load_pair(cfg);
    const EvaluationFrame frame = EvaluationFrame::fit(data.source.data, data.target.data);
    const auto subsets = EvaluationSubsets::draw(data.source.rows(), data.target.rows(), cfg.evaluation,
                                                 derive_seed(cfg.seed, kEvalStream));
    ArtifactWriter w(cfg.out, {cfg.source, cfg.target});

    EvaluationReport r = start_report("ablation", cfg, frame, subsets);
    r.mmd["before"] = evaluate_condition(frame, subsets, data.source.data, data.target.data);
    r.mmd["target_target"] = evaluate_reference(frame, subsets, data.target.data);
    const Matrix source_frame = frame.to_frame(data.source.data);
    for (Variant v : {Variant::ResNet, Variant::Mlp}) {
        NetShape shape = cfg.net;
        shape.variant = v;
        const CalibrationMap map = train(data.source.data, data.target.data, shape, training_for(cfg, kTrainStream));
        const Matrix calibrated = map.apply(data.source.data);
        if (!all_finite(calibrated)) throw NumericError("calibrated output is non-finite");
        const std::string name = to_string(v);
        r.mmd["after_" + name] = evaluate_condition(frame, subsets, calibrated, data.target.data);
        r.identity_deviation[name] = identity_deviation(source_frame, frame.to_frame(calibrated));
        r.training[name] = training_summary(map);
        w.csv("calibrated_" + name + ".csv", calibrated, data.source.column_names);
        w.text("model_" + name + ".json", calibration_map_to_json(map).dump(1) + "\n");
    }
    r.training["preprocessing"] = data.preprocessing_log;
    finish(r, w);
    return r;
}

EvaluationReport run_baselines(const PipelineConfig& cfg) {
    cfg.validate("baselines");
    LoadedPair data = load_pair(cfg);
    const EvaluationFrame frame = EvaluationFrame::fit(data.source.data, data.target.data);
    const auto subsets = EvaluationSubsets::draw(data.source.rows(), data.target.rows(), cfg.evaluation,
                                                 derive_seed(cfg.seed, kEvalStream));
    ArtifactWriter w(cfg.out, {cfg.source, cfg.target});
    EvaluationReport r = start_report("baselines", cfg, frame, subsets);
    const auto& names = data.source.column_names;

    const MomentMatchMap mm = fit_moment_match(data.source, data.target);
    const Matrix moment_matched = apply_moment_match(mm, data.source.data);
    const PcRemovalMap pcr = fit_pc_removal(data.source, data.target, cfg.n_remove);
    const Matrix pc_removed = apply_pc_removal(pcr, data.source.data);
    const CalibrationMap map = train(data.source.data, data.target.data, cfg.net, training_for(cfg, kTrainStream));
    const Matrix calibrated = map.apply(data.source.data);
    if (!all_finite(calibrated)) throw NumericError("calibrated output is non-finite");

    r.mmd["before"] = evaluate_condition(frame, subsets, data.source.data, data.target.data);
    r.mmd["after_moment_match"] = evaluate_condition(frame, subsets, moment_matched, data.target.data);
    r.mmd["after_pc_removal"] = evaluate_condition(frame, subsets, pc_removed, data.target.data);
    r.mmd["after_" + to_string(cfg.net.variant)] = evaluate_condition(frame, subsets, calibrated, data.target.data);
    r.mmd["target_target"] = evaluate_reference(frame, subsets, data.target.data);
    r.training[to_string(cfg.net.variant)] = training_summary(map);
    r.training["preprocessing"] = data.preprocessing_log;

    const double mean_gap = (column_means(moment_matched) - column_means(data.target.data)).cwiseAbs().maxCoeff();
    const double var_gap = (column_variances(moment_matched) - column_variances(data.target.data)).cwiseAbs().maxCoeff();
    std::vector<std::size_t> removed_pcs;
    for (std::size_t c : pcr.removed) removed_pcs.push_back(c + 1);
    r.audit = {{"moment_match",
                {{"scale", std::vector<double>(mm.scale.begin(), mm.scale.end())},
                 {"shift", std::vector<double>(mm.shift.begin(), mm.shift.end())},
                 {"max_abs_mean_gap", mean_gap},
                 {"max_abs_variance_gap", var_gap}}},
               {"pc_removal",
                {{"n_components", pcr.pca.n_components()},
                 {"batch_correlations", std::vector<double>(pcr.correlations.begin(), pcr.correlations.end())},
                 {"removed_pcs", removed_pcs}}}};

    w.csv("calibrated_moment_match.csv", moment_matched, names);
    w.csv("calibrated_pc_removal.csv", pc_removed, names);
    w.csv("calibrated_" + to_string(cfg.net.variant) + ".csv", calibrated, names);
    w.text("model_" + to_string(cfg.net.variant) + ".json", calibration_map_to_json(map).dump(1) + "\n");
    finish(r, w);
    return r;
}

EvaluationReport run_indirect(const PipelineConfig& cfg) {
    cfg.validate("indirect");
    const auto& roles = cfg.indirect;
    std::vector<Sample> raw{read_csv(roles.p1d1), read_csv(roles.p2d1), read_csv(roles.p2d2), read_csv(roles.p1d2)};
    require_shared_columns(raw);
    Json pre_log;
    const auto s = preprocess(raw, cfg.preprocessing, derive_seed(cfg.seed, kDaeStream), &pre_log);
    const Matrix& p1d1 = s[0].data;
    const Matrix& p2d1 = s[1].data;
    const Matrix& p2d2 = s[2].data;
    const Matrix& p1d2 = s[3].data;

    const EvaluationFrame frame = EvaluationFrame::fit(p1d1, p1d2);
    const auto subsets = EvaluationSubsets::draw(s[0].rows(), s[3].rows(), cfg.evaluation, derive_seed(cfg.seed, kEvalStream));
    ArtifactWriter w(cfg.out, {roles.p1d1, roles.p2d1, roles.p2d2, roles.p1d2});
    EvaluationReport r = start_report("indirect", cfg, frame, subsets);

    struct Leg {
        const char* name;
        const Matrix* from;
        const Matrix* to;
    };
    const Leg legs[] = {{"N_d1", &p1d1, &p2d1}, {"N_p2", &p2d1, &p2d2}, {"N_d2", &p2d2, &p1d2}, {"N_p1", &p1d1, &p1d2}};
    std::vector<CalibrationMap> maps;
    for (std::size_t i = 0; i < 4; ++i) {
        maps.push_back(train(*legs[i].from, *legs[i].to, cfg.net, training_for(cfg, kIndirectStream + i)));
        r.training[legs[i].name] = training_summary(maps.back());
        w.text(std::string("model_") + legs[i].name + ".json", calibration_map_to_json(maps.back()).dump(1) + "\n");
    }
    const Matrix direct = maps[3].apply(p1d1);
    const MapChain chain = compose({maps[0], maps[1], maps[2]});
    const Matrix indirect = chain.apply(p1d1);
    if (!all_finite(direct) || !all_finite(indirect)) throw NumericError("calibrated output is non-finite");

    r.mmd["before"] = evaluate_condition(frame, subsets, p1d1, p1d2);
    r.mmd["direct"] = evaluate_condition(frame, subsets, direct, p1d2);
    r.mmd["indirect"] = evaluate_condition(frame, subsets, indirect, p1d2);
    r.mmd["target_target"] = evaluate_reference(frame, subsets, p1d2);
    r.training["preprocessing"] = pre_log;
    r.audit = {{"route", {"N_d1: p1d1 -> p2d1", "N_p2: p2d1 -> p2d2", "N_d2: p2d2 -> p1d2"}},
               {"direct", "N_p1: p1d1 -> p1d2"}};

    w.csv("calibrated_direct.csv", direct, s[0].column_names);
    w.csv("calibrated_indirect.csv", indirect, s[0].column_names);
    finish(r, w);
    return r;
}

EvaluationReport run_perm_test(const PipelineConfig& cfg) {
    cfg.validate("perm-test");
    LoadedPair data = load_pair(cfg);
    const EvaluationFrame frame = EvaluationFrame::fit(data.source.data, data.target.data);
    EvaluationConfig one = cfg.evaluation;
    one.n_eval_subsets = 1;
    const auto subsets = EvaluationSubsets::draw(data.source.rows(), data.target.rows(), one, derive_seed(cfg.seed, kEvalStream));
    ArtifactWriter w(cfg.out, {cfg.source, cfg.target, cfg.perm_test_model});
    EvaluationReport r = start_report("perm-test", cfg, frame, subsets);

    Matrix candidate = data.source.data;
    std::string key = "source_vs_target";
    if (!cfg.perm_test_model.empty()) {
        const CalibrationMap map = load_calibration_map(cfg.perm_test_model);
        candidate = map.apply(candidate);
        key = "calibrated_vs_target";
    }
    const std::uint64_t perm_seed = derive_seed(cfg.seed, kPermStream);
    r.p_values[key] = subset_perm_test(frame, subsets, candidate, data.target.data, cfg.evaluation.n_permutations, perm_seed);
    r.mmd[key] = evaluate_condition(frame, subsets, candidate, data.target.data);
    r.audit = {{"n_permutations", cfg.evaluation.n_permutations},
               {"permutation_seed", perm_seed},
               {"p_value_rule", "(1 + #{permuted >= observed}) / (1 + n_permutations)"}};
    finish(r, w);
    return r;
}

EvaluationReport export_plot_data(const PipelineConfig& cfg) {
    cfg.validate("export-plots");
    const fs::path dir = cfg.out;
    for (const char* name : {"source.csv", "target.csv", "calibrated.csv"}) {
        if (!fs::exists(dir / name)) {
            throw DataError("missing calibration artifact '" + (dir / name).string() + "'; run calibrate first");
        }
    }
    const Sample source = read_csv(dir / "source.csv");
    const Sample target = read_csv(dir / "target.csv");
    const Sample calibrated = read_csv(dir / "calibrated.csv");
    require_shared_columns({source, target, calibrated});

    ArtifactWriter w(dir, {dir / "source.csv", dir / "target.csv", dir / "calibrated.csv"});
    EvaluationReport r;
    r.command = "export-plots";
    r.config = cfg.to_json();

    const std::size_t k = std::min<std::size_t>(2, target.cols());
    const PcaModel pca = fit_pca(target.data, k);
    std::string pca_csv = "set";
    for (std::size_t c = 1; c <= k; ++c) pca_csv += ",PC" + std::to_string(c);
    pca_csv += '\n';
    const std::pair<const char*, const Sample*> sets[] = {{"target", &target}, {"source", &source}, {"calibrated", &calibrated}};
    for (const auto& [name, sample] : sets) {
        const Matrix scores = project(pca, sample->data);
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
            pca_csv += name;
            for (Eigen::Index c = 0; c < scores.cols(); ++c) pca_csv += "," + format_double(scores(i, c));
            pca_csv += '\n';
        }
    }
    w.text("plot_pca.csv", pca_csv);

    std::string ecdf_csv = "marker,set,value,cumulative\n";
    Json ks = Json::object();
    for (std::size_t c = 0; c < target.cols(); ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        const std::string& marker = target.column_names[c];
        for (const auto& [name, sample] : sets) {
            const Ecdf e = ecdf(sample->data.col(col));
            for (std::size_t i = 0; i < e.values.size(); ++i) {
                ecdf_csv += marker + "," + name + "," + format_double(e.values[i]) + "," + format_double(e.cumulative[i]) + "\n";
            }
        }
        ks[marker] = {{"source", ks_distance(source.data.col(col), target.data.col(col))},
                      {"calibrated", ks_distance(calibrated.data.col(col), target.data.col(col))}};
    }
    w.text("plot_ecdf.csv", ecdf_csv);
    r.audit = {{"pca_fit_on", "target"},
               {"pca_explained_variance", std::vector<double>(pca.explained_variance.begin(), pca.explained_variance.end())},
               {"ks_distance_to_target", ks}};
    finish(r, w);
    return r;
}

}  // namespace mmdcal
