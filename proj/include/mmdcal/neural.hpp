#pragma once

#include "mmdcal/numerics.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmdcal {

enum class Mode { Training, Inference };

/// ResNet blocks compute x + delta(x); the Mlp variant drops the additive
/// shortcut and otherwise shares the same layer stack.
enum class Variant { ResNet, Mlp };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct DenseLayer {
    Matrix weights;  // in x out
    RowVector bias;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out);

    std::size_t in_dim() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weights.cols()); }
    Matrix forward(const Matrix& x) const;
};

struct BatchNormLayer {
    RowVector gamma;
    RowVector beta;
    RowVector running_mean;
    RowVector running_var;
    double momentum = 0.9;  // running <- momentum * running + (1 - momentum) * batch
    double epsilon = 1e-5;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels);

    std::size_t channels() const { return static_cast<std::size_t>(gamma.size()); }
    /// Normalizes with the running statistics.
    Matrix infer(const Matrix& x) const;
};

/// BN -> ReLU -> dense -> BN -> ReLU -> dense; dense1 maps d -> h and
/// dense2 maps h -> d.
struct ResNetBlock {
    BatchNormLayer bn1;
    DenseLayer dense1;
    BatchNormLayer bn2;
    DenseLayer dense2;

    ResNetBlock() = default;
    ResNetBlock(std::size_t dim, std::size_t hidden);

    std::size_t dim() const { return dense1.in_dim(); }
    std::size_t hidden() const { return dense1.out_dim(); }
};

/// Intermediate values of one block's training-mode forward pass.
struct BlockCache {
    Matrix input;
    Matrix xhat1, pre_relu1, act1;
    RowVector inv_std1;
    Matrix xhat2, pre_relu2, act2;
    RowVector inv_std2;
};

struct BlockGradients {
    RowVector bn1_gamma, bn1_beta;
    Matrix dense1_weights;
    RowVector dense1_bias;
    RowVector bn2_gamma, bn2_beta;
    Matrix dense2_weights;
    RowVector dense2_bias;
};

struct NetworkGradients {
    std::vector<BlockGradients> blocks;
    Matrix d_input;

    /// Views in the same order as Network::parameters().
    std::vector<std::span<double>> spans();
};

/// Forward pass of one block. Training mode uses batch statistics, updates
/// the running statistics and, if `cache` is given, records intermediates.
Matrix block_forward(ResNetBlock& block, const Matrix& x, Mode mode, bool shortcut,
                     BlockCache* cache = nullptr);

/// Inference-only forward pass of one block.
Matrix block_infer(const ResNetBlock& block, const Matrix& x, bool shortcut);

/// Backpropagates `upstream` (gradient w.r.t. block output) through a cached
/// block; returns the gradient w.r.t. the block input.
Matrix block_backward(const ResNetBlock& block, const BlockCache& cache, const Matrix& upstream,
                      bool shortcut, BlockGradients& grads);

class Network {
public:
    Network() = default;
    Network(Variant variant, std::size_t dim, std::size_t n_blocks, std::size_t hidden);

    Variant variant() const { return variant_; }
    std::size_t dim() const;
    std::size_t hidden() const;
    std::size_t n_blocks() const { return blocks_.size(); }

    const std::vector<ResNetBlock>& blocks() const { return blocks_; }
    std::vector<ResNetBlock>& blocks() { return blocks_; }

    /// Training mode caches intermediates for backward(); inference mode
    /// clears nothing and reads only running statistics.
    Matrix forward(const Matrix& x, Mode mode);
    /// Deterministic per-row map using running statistics.
    Matrix infer(const Matrix& x) const;

    /// Exact gradients of <upstream, forward(x)> for the last training-mode
    /// forward pass. Throws if there is none.
    NetworkGradients backward(const Matrix& upstream) const;
    bool has_cache() const { return cache_.has_value(); }
    void clear_cache() { cache_.reset(); }

    /// Views over every trainable parameter: per block bn1 gamma, beta,
    /// dense1 weights, bias, bn2 gamma, beta, dense2 weights, bias.
    std::vector<std::span<double>> parameters();
    /// Views over just the dense weight matrices, the L2-penalized set.
    std::vector<std::span<double>> dense_weights();

    /// Sum of squared dense weight entries (biases and BN parameters excluded).
    double weight_sq_norm() const;
    std::size_t parameter_count() const;

    /// Sets every final dense layer to zero, making a ResNet the identity.
    void zero_residual_branches();

private:
    void check_input(const Matrix& x) const;

    Variant variant_ = Variant::ResNet;
    std::vector<ResNetBlock> blocks_;
    std::optional<std::vector<BlockCache>> cache_;
};

/// Dense weights i.i.d. N(0, variance); biases 0; BN gamma 1, beta 0,
/// running statistics (0, 1).
void init_near_zero(Network& net, double variance, std::uint64_t seed);

/// Dense weights uniform on +-sqrt(6 / (fan_in + fan_out)); the rest as above.
void init_glorot(Network& net, std::uint64_t seed);

/// Mean |f(x) - x| over rows divided by mean |x - mean(x)|.
double identity_deviation(const Matrix& x, const Matrix& fx);

}  // namespace mmdcal
