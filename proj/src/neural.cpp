#include "mmdcal/neural.hpp"

#include "mmdcal/errors.hpp"
#include "mmdcal/random.hpp"

#include <cmath>

namespace mmdcal {

std::string to_string(Variant v) {
    return v == Variant::ResNet ? "resnet" : "mlp";
}

Variant parse_variant(const std::string& name) {
    if (name == "resnet") return Variant::ResNet;
    if (name == "mlp") return Variant::Mlp;
    throw ConfigError("unknown network variant '" + name + "' (expected resnet or mlp)");
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : weights(Matrix::Zero(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out))),
      bias(RowVector::Zero(static_cast<Eigen::Index>(out))) {}

Matrix DenseLayer::forward(const Matrix& x) const {
    require_dims(x.cols() == weights.rows(), "dense layer input width");
    Matrix out = x * weights;
    out.rowwise() += bias;
    return out;
}

BatchNormLayer::BatchNormLayer(std::size_t channels)
    : gamma(RowVector::Ones(static_cast<Eigen::Index>(channels))),
      beta(RowVector::Zero(static_cast<Eigen::Index>(channels))),
      running_mean(RowVector::Zero(static_cast<Eigen::Index>(channels))),
      running_var(RowVector::Ones(static_cast<Eigen::Index>(channels))) {}

Matrix BatchNormLayer::infer(const Matrix& x) const {
    const RowVector scale = gamma.array() / (running_var.array() + epsilon).sqrt();
    Matrix out = (x.rowwise() - running_mean).array().rowwise() * scale.array();
    out.rowwise() += beta;
    return out;
}

ResNetBlock::ResNetBlock(std::size_t dim, std::size_t hidden)
    : bn1(dim), dense1(dim, hidden), bn2(hidden), dense2(hidden, dim) {}

namespace {

Matrix relu(const Matrix& x) {
    return x.cwiseMax(0.0);
}

// Training-mode batch normalization; updates running statistics.
Matrix bn_train(BatchNormLayer& bn, const Matrix& x, Matrix& xhat, RowVector& inv_std) {
    const double b = static_cast<double>(x.rows());
    const RowVector mean = x.colwise().sum() / b;
    const Matrix centered = x.rowwise() - mean;
    const RowVector var = centered.array().square().colwise().sum() / b;
    inv_std = (var.array() + bn.epsilon).rsqrt();
    xhat = centered.array().rowwise() * inv_std.array();
    Matrix out = xhat.array().rowwise() * bn.gamma.array();
    out.rowwise() += bn.beta;
    bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean;
    bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * var;
    return out;
}

// Full training-mode gradient, through the batch mean and variance.
Matrix bn_backward(const BatchNormLayer& bn, const Matrix& xhat, const RowVector& inv_std,
                   const Matrix& dy, RowVector& dgamma, RowVector& dbeta) {
    const double b = static_cast<double>(dy.rows());
    dgamma = (dy.array() * xhat.array()).colwise().sum();
    dbeta = dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * bn.gamma.array();
    const RowVector sum_dxhat = dxhat.colwise().sum();
    const RowVector sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum();
    Matrix dx = (b * dxhat.array()).matrix().rowwise() - sum_dxhat;
    dx -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
    dx = dx.array().rowwise() * (inv_std.array() / b);
    return dx;
}

Matrix relu_mask(const Matrix& grad, const Matrix& pre) {
    return (pre.array() > 0.0).select(grad, 0.0);
}

}  // namespace

Matrix block_forward(ResNetBlock& block, const Matrix& x, Mode mode, bool shortcut, BlockCache* cache) {
    require_dims(static_cast<std::size_t>(x.cols()) == block.dim(),
                 "block input has " + std::to_string(x.cols()) + " columns, block expects " + std::to_string(block.dim()));
    if (mode == Mode::Inference) return block_infer(block, x, shortcut);
    if (x.rows() < 2) throw DataError("training-mode forward needs a batch of at least 2 rows");

    BlockCache local;
    BlockCache& c = cache ? *cache : local;
    c.input = x;
    c.pre_relu1 = bn_train(block.bn1, x, c.xhat1, c.inv_std1);
    c.act1 = relu(c.pre_relu1);
    const Matrix z1 = block.dense1.forward(c.act1);
    c.pre_relu2 = bn_train(block.bn2, z1, c.xhat2, c.inv_std2);
    c.act2 = relu(c.pre_relu2);
    Matrix out = block.dense2.forward(c.act2);
    if (shortcut) out += x;
    return out;
}

Matrix block_infer(const ResNetBlock& block, const Matrix& x, bool shortcut) {
    require_dims(static_cast<std::size_t>(x.cols()) == block.dim(), "block input width");
    const Matrix a1 = relu(block.bn1.infer(x));
    const Matrix a2 = relu(block.bn2.infer(block.dense1.forward(a1)));
    Matrix out = block.dense2.forward(a2);
    if (shortcut) out += x;
    return out;
}

Matrix block_backward(const ResNetBlock& block, const BlockCache& c, const Matrix& upstream, bool shortcut,
                      BlockGradients& g) {
    require_dims(upstream.rows() == c.input.rows() && static_cast<std::size_t>(upstream.cols()) == block.dim(),
                 "block upstream gradient shape");
    g.dense2_weights = c.act2.transpose() * upstream;
    g.dense2_bias = upstream.colwise().sum();
    const Matrix d_pre2 = relu_mask(upstream * block.dense2.weights.transpose(), c.pre_relu2);
    const Matrix dz1 = bn_backward(block.bn2, c.xhat2, c.inv_std2, d_pre2, g.bn2_gamma, g.bn2_beta);
    g.dense1_weights = c.act1.transpose() * dz1;
    g.dense1_bias = dz1.colwise().sum();
    const Matrix d_pre1 = relu_mask(dz1 * block.dense1.weights.transpose(), c.pre_relu1);
    Matrix dx = bn_backward(block.bn1, c.xhat1, c.inv_std1, d_pre1, g.bn1_gamma, g.bn1_beta);
    if (shortcut) dx += upstream;
    return dx;
}

namespace {

void append(std::vector<std::span<double>>& out, RowVector& v) {
    out.emplace_back(v.data(), static_cast<std::size_t>(v.size()));
}
void append(std::vector<std::span<double>>& out, Matrix& m) {
    out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
}

}  // namespace

std::vector<std::span<double>> NetworkGradients::spans() {
    std::vector<std::span<double>> out;
    for (auto& b : blocks) {
        append(out, b.bn1_gamma);
        append(out, b.bn1_beta);
        append(out, b.dense1_weights);
        append(out, b.dense1_bias);
        append(out, b.bn2_gamma);
        append(out, b.bn2_beta);
        append(out, b.dense2_weights);
        append(out, b.dense2_bias);
    }
    return out;
}

Network::Network(Variant variant, std::size_t dim, std::size_t n_blocks, std::size_t hidden) : variant_(variant) {
    if (dim == 0 || hidden == 0 || n_blocks == 0) throw ConfigError("network dimensions must be positive");
    blocks_.reserve(n_blocks);
    for (std::size_t i = 0; i < n_blocks; ++i) blocks_.emplace_back(dim, hidden);
}

std::size_t Network::dim() const {
    return blocks_.empty() ? 0 : blocks_.front().dim();
}

std::size_t Network::hidden() const {
    return blocks_.empty() ? 0 : blocks_.front().hidden();
}

void Network::check_input(const Matrix& x) const {
    if (blocks_.empty()) throw ConfigError("network has no blocks");
    require_dims(static_cast<std::size_t>(x.cols()) == dim(),
                 "network input has " + std::to_string(x.cols()) + " columns, expected " + std::to_string(dim()));
}

Matrix Network::forward(const Matrix& x, Mode mode) {
    check_input(x);
    if (mode == Mode::Inference) return infer(x);
    const bool shortcut = variant_ == Variant::ResNet;
    std::vector<BlockCache> caches(blocks_.size());
    Matrix h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) h = block_forward(blocks_[i], h, mode, shortcut, &caches[i]);
    cache_ = std::move(caches);
    return h;
}

Matrix Network::infer(const Matrix& x) const {
    check_input(x);
    const bool shortcut = variant_ == Variant::ResNet;
    Matrix h = x;
    for (const auto& block : blocks_) h = block_infer(block, h, shortcut);
    return h;
}

NetworkGradients Network::backward(const Matrix& upstream) const {
    if (!cache_) throw std::logic_error("Network::backward called without a cached training-mode forward pass");
    const bool shortcut = variant_ == Variant::ResNet;
    NetworkGradients grads;
    grads.blocks.resize(blocks_.size());
    Matrix g = upstream;
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        g = block_backward(blocks_[i], (*cache_)[i], g, shortcut, grads.blocks[i]);
    }
    grads.d_input = std::move(g);
    return grads;
}

std::vector<std::span<double>> Network::parameters() {
    std::vector<std::span<double>> out;
    for (auto& b : blocks_) {
        append(out, b.bn1.gamma);
        append(out, b.bn1.beta);
        append(out, b.dense1.weights);
        append(out, b.dense1.bias);
        append(out, b.bn2.gamma);
        append(out, b.bn2.beta);
        append(out, b.dense2.weights);
        append(out, b.dense2.bias);
    }
    return out;
}

std::vector<std::span<double>> Network::dense_weights() {
    std::vector<std::span<double>> out;
    for (auto& b : blocks_) {
        append(out, b.dense1.weights);
        append(out, b.dense2.weights);
    }
    return out;
}

double Network::weight_sq_norm() const {
    double s = 0.0;
    for (const auto& b : blocks_) s += b.dense1.weights.squaredNorm() + b.dense2.weights.squaredNorm();
    return s;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) {
        n += 2 * b.dim() + 2 * b.hidden();
        n += static_cast<std::size_t>(b.dense1.weights.size() + b.dense1.bias.size());
        n += static_cast<std::size_t>(b.dense2.weights.size() + b.dense2.bias.size());
    }
    return n;
}

void Network::zero_residual_branches() {
    for (auto& b : blocks_) {
        b.dense2.weights.setZero();
        b.dense2.bias.setZero();
    }
}

namespace {

void reset_batch_norm(BatchNormLayer& bn) {
    bn.gamma.setOnes();
    bn.beta.setZero();
    bn.running_mean.setZero();
    bn.running_var.setOnes();
}

template <typename Draw>
void init_network(Network& net, Draw&& draw_weights) {
    for (auto& b : net.blocks()) {
        reset_batch_norm(b.bn1);
        reset_batch_norm(b.bn2);
        draw_weights(b.dense1);
        b.dense1.bias.setZero();
        draw_weights(b.dense2);
        b.dense2.bias.setZero();
    }
    net.clear_cache();
}

}  // namespace

void init_near_zero(Network& net, double variance, std::uint64_t seed) {
    if (!(variance > 0.0)) throw ConfigError("init_near_zero: variance must be positive");
    Rng rng(seed);
    const double stddev = std::sqrt(variance);
    init_network(net, [&](DenseLayer& layer) {
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = rng.normal(0.0, stddev);
    });
}

void init_glorot(Network& net, std::uint64_t seed) {
    Rng rng(seed);
    init_network(net, [&](DenseLayer& layer) {
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = rng.uniform(-bound, bound);
    });
}

double identity_deviation(const Matrix& x, const Matrix& fx) {
    require_dims(x.rows() == fx.rows() && x.cols() == fx.cols(), "identity_deviation");
    if (x.rows() == 0) throw DataError("identity_deviation: empty sample");
    const double moved = (fx - x).rowwise().norm().mean();
    const double spread = (x.rowwise() - column_means(x)).rowwise().norm().mean();
    if (!(spread > 0.0)) throw DataError("identity_deviation: sample has no spread");
    return moved / spread;
}

}  // namespace mmdcal
