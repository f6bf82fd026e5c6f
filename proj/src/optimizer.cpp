#include "mmdcal/optimizer.hpp"

#include "mmdcal/errors.hpp"

#include <cmath>

namespace mmdcal {

void rmsprop_step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
                  RmspropState& state, const RmspropConfig& config) {
    require_dims(params.size() == grads.size(), "rmsprop: parameter and gradient counts differ");
    if (state.accumulators.empty()) {
        state.accumulators.reserve(params.size());
        for (const auto& p : params) state.accumulators.emplace_back(p.size(), 0.0);
    }
    require_dims(state.accumulators.size() == params.size(), "rmsprop: state does not match parameters");
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t];
        auto g = grads[t];
        auto& acc = state.accumulators[t];
        require_dims(p.size() == g.size() && p.size() == acc.size(), "rmsprop: tensor shape");
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc[i] = config.rho * acc[i] + (1.0 - config.rho) * g[i] * g[i];
            p[i] -= config.learning_rate * g[i] / (std::sqrt(acc[i]) + config.epsilon);
        }
    }
}

}  // namespace mmdcal
