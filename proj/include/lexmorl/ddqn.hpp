#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <span>
#include <vector>

#include "action.hpp"
#include "errors.hpp"
#include "qfunction.hpp"
#include "random.hpp"
#include "replay.hpp"
#include "rmsprop.hpp"

namespace lexmorl {

enum class LossKind { MeanSquared, Huber };

/// Double-DQN bootstrap: online network picks, target network evaluates.
inline double ddqn_target(double reward, double gamma, const QRow& q_online_next, const QRow& q_target_next, bool done) {
    if (done) return reward;
    const auto best = static_cast<std::size_t>(
        std::max_element(q_online_next.begin(), q_online_next.end()) - q_online_next.begin());
    return reward + gamma * q_target_next[best];
}

namespace detail {

inline RowMatrix stack_observations(std::span<const Transition* const> batch, bool next) {
    const auto& first = next ? batch.front()->next_obs : batch.front()->obs;
    RowMatrix x(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(first->size()));
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto& o = next ? batch[r]->next_obs : batch[r]->obs;
        if (o->size() != first->size()) throw InvalidArgument("batch observations differ in size");
        std::copy(o->begin(), o->end(), x.data() + static_cast<std::ptrdiff_t>(r * first->size()));
    }
    return x;
}

inline QRow row_of(const RowMatrix& m, Eigen::Index r) {
    QRow q{};
    for (std::size_t a = 0; a < kNumActions; ++a) q[a] = m(r, static_cast<Eigen::Index>(a));
    return q;
}

}  // namespace detail

/// One DDQN update on a sampled batch. Returns the loss before the update.
inline double train_step(QFunction& f, std::span<const Transition* const> batch, double gamma, RmsPropState& opt,
                         const QFunction& target, LossKind loss_kind = LossKind::MeanSquared) {
    if (batch.empty()) throw InvalidArgument("train_step: empty batch");
    const RowMatrix x = detail::stack_observations(batch, false);
    const RowMatrix xn = detail::stack_observations(batch, true);
    const RowMatrix q_online_next = f.evaluate(xn);
    const RowMatrix q_target_next = target.evaluate(xn);
    const RowMatrix q = f.forward(x);

    const double n = static_cast<double>(batch.size());
    RowMatrix dq = RowMatrix::Zero(q.rows(), q.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const Transition& t = *batch[i];
        if (t.action >= kNumActions) throw InvalidArgument("train_step: action index out of range");
        const double y = ddqn_target(t.reward, gamma, detail::row_of(q_online_next, r), detail::row_of(q_target_next, r), t.done);
        const double err = q(r, static_cast<Eigen::Index>(t.action)) - y;
        if (loss_kind == LossKind::MeanSquared || std::abs(err) <= 1.0) {
            loss += (loss_kind == LossKind::MeanSquared ? err * err : 0.5 * err * err) / n;
            dq(r, static_cast<Eigen::Index>(t.action)) = (loss_kind == LossKind::MeanSquared ? 2.0 * err : err) / n;
        } else {
            loss += (std::abs(err) - 0.5) / n;
            dq(r, static_cast<Eigen::Index>(t.action)) = (err > 0.0 ? 1.0 : -1.0) / n;
        }
    }
    if (!std::isfinite(loss)) throw TrainingError("train_step: non-finite loss");
    ParamVector grad(f.num_params(), 0.0);
    f.backward(dq, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            std::ostringstream msg;
            msg << "train_step: non-finite gradient at parameter " << i << " (loss " << loss << ")";
            throw TrainingError(msg.str());
        }
    }
    opt.step(f.params(), grad);
    return loss;
}

/// Target parameters become a bit-exact copy of the online parameters.
inline void sync_target(const QFunction& online, QFunction& target) { target.copy_from(online); }

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
};

/// Compares the analytic gradient of (Q(obs, a) - target)^2 with central
/// differences over a random subset of parameters.
///
/// The loss is piecewise quadratic in any single parameter, so a central
/// difference is exact unless the step crosses a ReLU kink. Each parameter
/// tries steps from `max_step` downward and keeps the first central or
/// one-sided estimate that agrees with its half and quarter steps up to
/// rounding noise; large steps keep that noise low, which matters for tiny
/// gradient components.
inline GradCheckResult grad_check(QFunction& f, std::span<const double> obs, Action action, double target, Rng& rng,
                                  std::size_t subset = 200, double max_step = 1e-1, double floor = 1e-12) {
    RowMatrix x(1, static_cast<Eigen::Index>(obs.size()));
    std::copy(obs.begin(), obs.end(), x.data());
    const auto a = static_cast<Eigen::Index>(index_of(action));
    const RowMatrix q = f.forward(x);
    RowMatrix dq = RowMatrix::Zero(1, kNumActions);
    dq(0, a) = 2.0 * (q(0, a) - target);
    ParamVector grad(f.num_params(), 0.0);
    f.backward(dq, grad);

    auto params = f.params();
    struct Estimate {
        double value;
        double noise;  ///< rounding-noise scale of `value`
    };
    auto error_at = [&](std::size_t p, double offset) {
        const double saved = params[p];
        params[p] = saved + offset;
        const double e = f.evaluate(x)(0, a) - target;
        params[p] = saved;
        return e;
    };
    const double e0 = q(0, a) - target;
    // Squared-error differences are factored, e1^2 - e2^2 = (e1 - e2)(e1 + e2),
    // to avoid cancellation between two squares.
    auto central = [&](std::size_t p, double h) {
        const double up = error_at(p, h), down = error_at(p, -h);
        const double mag = std::abs(up) + std::abs(down);
        return Estimate{(up - down) * (up + down) / (2.0 * h), 1e-13 * mag * mag / h};
    };
    // Second-order one-sided difference, exact for quadratics; used when a
    // kink sits so close that every central step straddles it.
    auto one_sided = [&](std::size_t p, double h) {
        const double e1 = error_at(p, h), e2 = error_at(p, 2.0 * h);
        const double d1 = (e1 - e0) * (e1 + e0), d2 = (e2 - e0) * (e2 + e0);
        const double mag = std::abs(e0) + std::abs(e1) + std::abs(e2);
        return Estimate{(4.0 * d1 - d2) / (2.0 * h), 1e-13 * mag * mag / std::abs(h)};
    };
    auto agree = [](const Estimate& u, const Estimate& v) {
        return std::abs(u.value - v.value) <= 1e-7 * std::max(std::abs(u.value), std::abs(v.value)) + u.noise + v.noise;
    };

    std::vector<std::size_t> idx(f.num_params());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t count = std::min(subset, idx.size());
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);

    GradCheckResult res;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t p = idx[i];
        double numeric = 0.0;
        bool settled = false;
        // Three step sizes must agree: with many kinks nearby, two estimates
        // can match by coincidence.
        for (double h = max_step; h >= 1e-7 && !settled; h *= 0.1) {
            const Estimate c[] = {central(p, h), central(p, 0.5 * h), central(p, 0.25 * h)};
            numeric = c[2].value;
            settled = agree(c[0], c[1]) && agree(c[1], c[2]);
            for (double side : {1.0, -1.0}) {
                if (settled) break;
                const Estimate o[] = {one_sided(p, side * h), one_sided(p, side * 0.5 * h), one_sided(p, side * 0.25 * h)};
                if (agree(o[0], o[1]) && agree(o[1], o[2])) {
                    numeric = o[2].value;
                    settled = true;
                }
            }
        }
        const double denom = std::max({std::abs(numeric), std::abs(grad[p]), floor});
        res.max_relative_error = std::max(res.max_relative_error, std::abs(numeric - grad[p]) / denom);
        ++res.checked;
    }
    return res;
}

}  // namespace lexmorl
