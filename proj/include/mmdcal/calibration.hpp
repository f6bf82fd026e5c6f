#pragma once

#include "mmdcal/mmd.hpp"
#include "mmdcal/neural.hpp"
#include "mmdcal/numerics.hpp"
#include "mmdcal/optimizer.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mmdcal {

/// Per-column affine standardization fitted on the source sample.
struct StandardizationParams {
    RowVector mean;
    RowVector std;  // population (1/n) standard deviation, strictly positive

    /// Throws DataError on a zero-variance column.
    static StandardizationParams fit(const Matrix& data);
    static StandardizationParams identity(std::size_t dim);

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
    Matrix apply(const Matrix& data) const;
    Matrix invert(const Matrix& data) const;
};

struct NetShape {
    std::size_t n_blocks = 3;
    std::size_t hidden_width = 25;
    Variant variant = Variant::ResNet;
};

struct TrainingConfig {
    std::size_t minibatch_size = 1000;
    double l2_penalty = 0.01;
    double validation_fraction = 0.1;
    std::size_t max_epochs = 500;
    std::size_t patience = 20;
    RmspropConfig rmsprop;
    /// Variance of the near-zero ResNet weight init; the Mlp variant uses Glorot.
    double init_variance = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    /// Mean minibatch loss over the epoch; empty for the pre-training entry.
    std::optional<double> train_loss;
    double validation_loss = 0.0;
};

/// Loss value sqrt(MMD^2) + l2 * sum |W|^2 split into its two terms.
struct MmdLoss {
    double mmd = 0.0;
    double penalty = 0.0;
    double value() const { return mmd + penalty; }
};

struct LossGradient {
    MmdLoss loss;
    NetworkGradients grads;
};

/// Runs a training-mode forward pass of `net` on `source_batch` and returns
/// the loss against `target_batch` with exact gradients for every parameter.
/// The L2 term covers dense weights only.
LossGradient mmd_loss_gradient(Network& net, const Matrix& source_batch, const Matrix& target_batch,
                               const KernelSpec& kernel, double l2_penalty);

/// Inference-mode loss, used for validation.
MmdLoss mmd_loss(const Network& net, const Matrix& source, const Matrix& target, const KernelSpec& kernel,
                 double l2_penalty);

/// A trained, frozen map from source coordinates to target coordinates.
struct CalibrationMap {
    Network network;
    StandardizationParams standardization;
    KernelSpec kernel;
    TrainingConfig config;
    NetShape shape;
    std::vector<EpochLog> training_log;
    std::size_t best_epoch = 0;

    std::size_t dim() const { return standardization.dim(); }
    /// Standardize, run the network in inference mode, de-standardize.
    Matrix apply(const Matrix& points) const;
};

/// Trains a calibration map from `source` towards `target`.
///
/// The source is standardized with its own column moments and the same
/// parameters are applied to the target. Kernel bandwidths come from the
/// standardized target. A validation_fraction of source rows is held out and
/// compared, each epoch, against a fixed target subset of equal size. Each
/// step draws minibatch_size rows with replacement from the training source
/// rows and from the target. Training stops after `patience` epochs without
/// validation improvement and restores the best parameters seen, including
/// the untrained initialization.
CalibrationMap train(const Matrix& source, const Matrix& target, const NetShape& shape,
                     const TrainingConfig& config);

/// Applies maps in order; each stage standardizes and de-standardizes with
/// its own training-time parameters.
class MapChain {
public:
    explicit MapChain(std::vector<CalibrationMap> stages);

    std::size_t dim() const { return stages_.front().dim(); }
    std::size_t size() const { return stages_.size(); }
    Matrix apply(const Matrix& points) const;

private:
    std::vector<CalibrationMap> stages_;
};

MapChain compose(std::vector<CalibrationMap> maps);

}  // namespace mmdcal
