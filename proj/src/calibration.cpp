#include "mmdcal/calibration.hpp"

#include "mmdcal/errors.hpp"
#include "mmdcal/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmdcal {

namespace {

// Streams derived from TrainingConfig::seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kBatchStream = 3;
constexpr std::uint64_t kValidationStream = 4;

// Floor for sqrt(MMD^2) in the chain rule; d sqrt(u)/du is unbounded at 0.
constexpr double kMinMmdForGradient = 1e-12;

}  // namespace

StandardizationParams StandardizationParams::fit(const Matrix& data) {
    if (data.rows() < 2) throw DataError("standardization needs at least 2 rows");
    StandardizationParams p;
    p.mean = column_means(data);
    p.std = column_variances(data).array().sqrt();
    for (Eigen::Index c = 0; c < p.std.size(); ++c) {
        if (!(p.std(c) > 0.0)) {
            throw DataError("source column " + std::to_string(c) + " has zero variance; drop it before calibration");
        }
    }
    return p;
}

StandardizationParams StandardizationParams::identity(std::size_t dim) {
    StandardizationParams p;
    p.mean = RowVector::Zero(static_cast<Eigen::Index>(dim));
    p.std = RowVector::Ones(static_cast<Eigen::Index>(dim));
    return p;
}

Matrix StandardizationParams::apply(const Matrix& data) const {
    require_dims(data.cols() == mean.size(), "standardize: " + std::to_string(data.cols()) + " vs " +
                                                  std::to_string(mean.size()) + " columns");
    return (data.rowwise() - mean).array().rowwise() / std.array();
}

Matrix StandardizationParams::invert(const Matrix& data) const {
    require_dims(data.cols() == mean.size(), "de-standardize");
    Matrix out = data.array().rowwise() * std.array();
    out.rowwise() += mean;
    return out;
}

void TrainingConfig::validate() const {
    if (minibatch_size < 2) throw ConfigError("minibatch_size must be at least 2");
    if (!(l2_penalty >= 0.0)) throw ConfigError("l2_penalty must be nonnegative");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation_fraction must lie in (0, 1)");
    }
    if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
    if (patience < 1) throw ConfigError("patience must be positive");
    if (!(rmsprop.learning_rate > 0.0) || !(rmsprop.rho > 0.0 && rmsprop.rho < 1.0) || !(rmsprop.epsilon > 0.0)) {
        throw ConfigError("invalid RMSprop settings");
    }
    if (!(init_variance > 0.0)) throw ConfigError("init_variance must be positive");
}

LossGradient mmd_loss_gradient(Network& net, const Matrix& source_batch, const Matrix& target_batch,
                               const KernelSpec& kernel, double l2_penalty) {
    const Matrix mapped = net.forward(source_batch, Mode::Training);
    const MmdGradient g = mmd_biased_with_gradient(mapped, target_batch, kernel);
    LossGradient out;
    const double mmd2 = std::max(0.0, g.mmd_squared);
    out.loss.mmd = std::sqrt(mmd2);
    out.loss.penalty = l2_penalty * net.weight_sq_norm();
    const Matrix upstream = g.d_x / (2.0 * std::max(out.loss.mmd, kMinMmdForGradient));
    out.grads = net.backward(upstream);
    for (std::size_t b = 0; b < net.n_blocks(); ++b) {
        const ResNetBlock& block = net.blocks()[b];
        out.grads.blocks[b].dense1_weights += 2.0 * l2_penalty * block.dense1.weights;
        out.grads.blocks[b].dense2_weights += 2.0 * l2_penalty * block.dense2.weights;
    }
    return out;
}

MmdLoss mmd_loss(const Network& net, const Matrix& source, const Matrix& target, const KernelSpec& kernel,
                 double l2_penalty) {
    MmdLoss loss;
    loss.mmd = mmd_biased(net.infer(source), target, kernel).mmd;
    loss.penalty = l2_penalty * net.weight_sq_norm();
    return loss;
}

Matrix CalibrationMap::apply(const Matrix& points) const {
    require_dims(static_cast<std::size_t>(points.cols()) == dim(),
                 "calibration map expects " + std::to_string(dim()) + " columns, got " + std::to_string(points.cols()));
    return standardization.invert(network.infer(standardization.apply(points)));
}

CalibrationMap train(const Matrix& source, const Matrix& target, const NetShape& shape,
                     const TrainingConfig& config) {
    config.validate();
    require_dims(source.cols() == target.cols(), "train: source has " + std::to_string(source.cols()) +
                                                     " columns, target has " + std::to_string(target.cols()));
    if (!all_finite(source) || !all_finite(target)) throw DataError("train: non-finite input values");
    const auto n = static_cast<std::size_t>(source.rows());
    const auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n)));
    if (n_val < 2 || n - n_val < 2) {
        throw DataError("train: " + std::to_string(n) + " source rows are too few for a validation split");
    }

    CalibrationMap map;
    map.config = config;
    map.shape = shape;
    map.standardization = StandardizationParams::fit(source);
    const Matrix src = map.standardization.apply(source);
    const Matrix tgt = map.standardization.apply(target);
    map.kernel = heuristic_bandwidths(tgt);

    const auto dim = static_cast<std::size_t>(source.cols());
    Network net(shape.variant, dim, shape.n_blocks, shape.hidden_width);
    if (shape.variant == Variant::ResNet) {
        init_near_zero(net, config.init_variance, derive_seed(config.seed, kInitStream));
    } else {
        init_glorot(net, derive_seed(config.seed, kInitStream));
    }

    Rng split_rng(derive_seed(config.seed, kSplitStream));
    std::vector<std::size_t> order = sample_without_replacement(split_rng, n, n);
    const std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    const std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    const Matrix val_source = take_rows(src, val_rows);
    const Matrix train_source = take_rows(src, train_rows);

    Rng val_rng(derive_seed(config.seed, kValidationStream));
    const std::size_t val_target_size = std::min(n_val, static_cast<std::size_t>(tgt.rows()));
    const Matrix val_target = take_rows(tgt, sample_without_replacement(val_rng, static_cast<std::size_t>(tgt.rows()), val_target_size));

    Rng batch_rng(derive_seed(config.seed, kBatchStream));
    RmspropState opt_state;
    const std::size_t steps_per_epoch = (train_rows.size() + config.minibatch_size - 1) / config.minibatch_size;

    auto validation_loss = [&] {
        const double v = mmd_loss(net, val_source, val_target, map.kernel, config.l2_penalty).value();
        if (!std::isfinite(v)) throw NumericError("validation loss became non-finite");
        return v;
    };

    double best = validation_loss();
    Network best_net = net;
    map.training_log.push_back({0, std::nullopt, best});
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double train_sum = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const Matrix bx = take_rows(train_source, sample_with_replacement(batch_rng, train_source.rows(), config.minibatch_size));
            const Matrix by = take_rows(tgt, sample_with_replacement(batch_rng, static_cast<std::size_t>(tgt.rows()), config.minibatch_size));
            LossGradient lg = mmd_loss_gradient(net, bx, by, map.kernel, config.l2_penalty);
            if (!std::isfinite(lg.loss.value())) {
                throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
            }
            train_sum += lg.loss.value();
            const auto params = net.parameters();
            const auto grads = lg.grads.spans();
            rmsprop_step(params, grads, opt_state, config.rmsprop);
        }
        net.clear_cache();
        const double val = validation_loss();
        map.training_log.push_back({epoch, train_sum / static_cast<double>(steps_per_epoch), val});
        if (val < best) {
            best = val;
            best_net = net;
            map.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    map.network = std::move(best_net);
    map.network.clear_cache();
    return map;
}

MapChain::MapChain(std::vector<CalibrationMap> stages) : stages_(std::move(stages)) {
    if (stages_.empty()) throw ConfigError("cannot compose an empty list of maps");
    for (const auto& s : stages_) {
        require_dims(s.dim() == stages_.front().dim(), "composed maps must share one dimension");
    }
}

Matrix MapChain::apply(const Matrix& points) const {
    Matrix h = points;
    for (const auto& s : stages_) h = s.apply(h);
    return h;
}

MapChain compose(std::vector<CalibrationMap> maps) {
    return MapChain(std::move(maps));
}

}  // namespace mmdcal
