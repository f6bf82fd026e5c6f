#pragma once

#include "mmdcal/calibration.hpp"
#include "mmdcal/io.hpp"
#include "mmdcal/preprocessing.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmdcal {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

struct PreprocessingConfig {
    bool log = false;
    bool normalize_counts = false;
    double normalize_total = 10000.0;
    bool dae = false;
    std::size_t dae_max_zeros = 0;
    DaeConfig dae_config;
    /// Number of principal components to keep; 0 disables the reduction.
    std::size_t pca_k = 0;
};

struct EvaluationConfig {
    std::size_t n_eval_subsets = 5;
    std::size_t eval_subset_size = 1000;
    std::size_t n_permutations = 200;
};

/// Sample paths for the four roles of the indirect experiment: patient p
/// measured on day d.
struct IndirectRoles {
    std::filesystem::path p1d1, p2d1, p2d2, p1d2;
};

struct PipelineConfig {
    std::filesystem::path source;
    std::filesystem::path target;
    std::filesystem::path out;
    PreprocessingConfig preprocessing;
    NetShape net;
    TrainingConfig training;
    EvaluationConfig evaluation;
    std::size_t n_remove = 1;
    IndirectRoles indirect;
    /// Optional model applied to the source before the permutation test.
    std::filesystem::path perm_test_model;
    std::uint64_t seed = 0;

    /// Relative paths are resolved against `base_dir`.
    static PipelineConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
    Json to_json() const;
    /// Checks counts and that output paths never coincide with inputs.
    void validate(const std::string& command) const;
};

/// Mean and sample standard deviation of one condition's MMD over the
/// evaluation subsets.
struct ConditionStats {
    double mean = 0.0;
    double std = 0.0;
    std::vector<double> values;
};

struct EvaluationReport {
    std::string command;
    Json config;
    Json evaluation;  // frame: standardization, kernel, subset seeds and sizes
    std::map<std::string, ConditionStats> mmd;
    std::map<std::string, double> p_values;
    std::map<std::string, double> identity_deviation;
    Json training = Json::object();
    Json audit = Json::object();
    std::vector<std::string> files;

    /// Deterministic document; contains no timestamps.
    Json to_json() const;
};

/// Shared coordinates for comparing calibrations: the preprocessed source's
/// standardization, and bandwidths from the standardized target.
struct EvaluationFrame {
    StandardizationParams standardization;
    KernelSpec kernel;

    static EvaluationFrame fit(const Matrix& source, const Matrix& target);
    Matrix to_frame(const Matrix& points) const { return standardization.apply(points); }
};

/// Row indices for each evaluation subset, drawn without replacement from a
/// dedicated stream per subset.
struct EvaluationSubsets {
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<std::size_t>> source_rows;
    std::vector<std::vector<std::size_t>> target_rows;
    /// Two disjoint target subsets per seed for the target-target reference.
    std::vector<std::vector<std::size_t>> reference_a;
    std::vector<std::vector<std::size_t>> reference_b;
    std::size_t source_size = 0;
    std::size_t target_size = 0;
    std::size_t reference_size = 0;

    static EvaluationSubsets draw(std::size_t n_source, std::size_t n_target, const EvaluationConfig& config,
                                  std::uint64_t seed);
    Json to_json() const;
};

/// MMD (square root of the biased MMD^2) of `candidate` against the target
/// on each evaluation subset, in frame coordinates.
ConditionStats evaluate_condition(const EvaluationFrame& frame, const EvaluationSubsets& subsets,
                                  const Matrix& candidate, const Matrix& target);
ConditionStats evaluate_reference(const EvaluationFrame& frame, const EvaluationSubsets& subsets,
                                  const Matrix& target);

/// Applies the configured preprocessing to every sample in order. A DAE is
/// trained on the clean cells pooled from all given samples; PCA is fit on
/// their concatenation.
std::vector<Sample> preprocess(const std::vector<Sample>& samples, const PreprocessingConfig& config,
                               std::uint64_t seed, Json* log = nullptr);

/// Empirical CDF: sorted values with cumulative fractions (i+1)/n.
struct Ecdf {
    std::vector<double> values;
    std::vector<double> cumulative;
};
Ecdf ecdf(const Vector& values);
/// sup_t |F_a(t) - F_b(t)|.
double ks_distance(const Vector& a, const Vector& b);

EvaluationReport run_calibrate(const PipelineConfig& config);
EvaluationReport run_ablation(const PipelineConfig& config);
EvaluationReport run_baselines(const PipelineConfig& config);
EvaluationReport run_indirect(const PipelineConfig& config);
EvaluationReport run_perm_test(const PipelineConfig& config);
/// Reads source.csv, target.csv and calibrated.csv from config.out (as
/// written by run_calibrate) and writes PCA and ECDF plot tables.
EvaluationReport export_plot_data(const PipelineConfig& config);

}  // namespace mmdcal
