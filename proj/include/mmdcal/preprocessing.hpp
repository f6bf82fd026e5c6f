#pragma once

#include "mmdcal/calibration.hpp"
#include "mmdcal/neural.hpp"
#include "mmdcal/numerics.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mmdcal {

/// Position of a sample in the preprocessing pipeline:
/// raw -> log / count-normalized -> denoised -> (standardized inside train).
enum class Stage { Raw, LogTransformed, CountNormalized, Denoised, PcaReduced };

std::string to_string(Stage s);

/// A point cloud: rows are cells, columns are markers.
struct Sample {
    Matrix data;
    std::vector<std::string> column_names;
    std::string provenance;
    Stage stage = Stage::Raw;

    Sample() = default;
    Sample(Matrix data, std::vector<std::string> column_names, std::string provenance = {},
           Stage stage = Stage::Raw);

    std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(data.cols()); }
    /// Throws DataError if names do not match the width or entries are non-finite.
    void validate() const;
};

/// Default names "c1".."cd".
std::vector<std::string> default_column_names(std::size_t d);

/// Entrywise log(1 + x). Requires a raw sample with nonnegative entries.
Sample log_transform(const Sample& sample);

/// Scales each row to sum to `total`, then applies log(1 + x).
Sample normalize_counts(const Sample& sample, double total = 10000.0);

/// Same scaling without the log, exposed for inspection and tests.
Matrix scale_rows_to_total(const Matrix& counts, double total);

/// Rows with at most `max_zeros` exact zeros.
Sample select_clean_cells(const Sample& sample, std::size_t max_zeros = 0);

/// Denoising autoencoder d -> h -> h -> d with ReLU hidden units and a
/// linear output layer.
struct DaeModel {
    DenseLayer encoder1;
    DenseLayer encoder2;
    DenseLayer decoder;
    double corruption_keep_prob = 0.8;
    std::vector<EpochLog> training_log;
    std::size_t best_epoch = 0;

    std::size_t dim() const { return encoder1.in_dim(); }
    Matrix reconstruct(const Matrix& x) const;
};

struct DaeConfig {
    std::size_t hidden_width = 25;
    double corruption_keep_prob = 0.8;
    /// Minibatch size, L2 penalty, validation split, stopping rule, RMSprop
    /// settings and seed; init_variance is unused (Glorot init).
    TrainingConfig training;
};

/// Minimizes mean squared reconstruction error of clean rows from
/// Bernoulli(keep_prob)-masked copies, re-drawing masks every step, plus an
/// L2 penalty on the dense weights. Validation uses fixed masks.
DaeModel train_dae(const Sample& clean, const DaeConfig& config);

/// Row-wise reconstruction without corruption.
Sample denoise(const DaeModel& model, const Sample& sample);

enum class PcaFitRows { Pooled, Designated };

/// Fits PCA on either the pooled rows of all samples or the rows of
/// samples[designated], and projects every sample onto k components named
/// PC1..PCk.
std::pair<PcaModel, std::vector<Sample>> reduce_pca(const std::vector<Sample>& samples, std::size_t k,
                                                     PcaFitRows fit_rows = PcaFitRows::Pooled,
                                                     std::size_t designated = 0);

}  // namespace mmdcal
