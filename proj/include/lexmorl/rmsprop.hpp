#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"

namespace lexmorl {

/// RMSProp: ms <- rho*ms + (1-rho)*g^2; theta <- theta - lr*g/(sqrt(ms)+eps).
struct RmsPropState {
    double learning_rate = 0.00025;
    double rho = 0.95;
    double epsilon = 1e-6;
    std::vector<double> mean_square;

    void step(std::span<double> params, std::span<const double> grad) {
        if (params.size() != grad.size()) throw InvalidArgument("rmsprop: gradient size mismatch");
        // Tabular functions grow; new entries start with no history.
        if (mean_square.size() < params.size()) mean_square.resize(params.size(), 0.0);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grad[i];
            mean_square[i] = rho * mean_square[i] + (1.0 - rho) * g * g;
            params[i] -= learning_rate * g / (std::sqrt(mean_square[i]) + epsilon);
        }
    }
};

}  // namespace lexmorl
