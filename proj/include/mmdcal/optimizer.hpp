#pragma once

#include <span>
#include <vector>

namespace mmdcal {

/// RMSprop; the defaults are lr 0.001, rho 0.9, eps 1e-8.
struct RmspropConfig {
    double learning_rate = 0.001;
    double rho = 0.9;
    double epsilon = 1e-8;
};

/// Squared-gradient accumulators, one buffer per parameter view.
struct RmspropState {
    std::vector<std::vector<double>> accumulators;
};

/// accum <- rho * accum + (1 - rho) * g^2;  p <- p - lr * g / (sqrt(accum) + eps).
/// The state is sized lazily on first use and must then keep matching shapes.
void rmsprop_step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
                  RmspropState& state, const RmspropConfig& config);

}  // namespace mmdcal
