#pragma once

#include <memory>
#include <vector>

#include "errors.hpp"
#include "random.hpp"

namespace lexmorl {

using ObservationPtr = std::shared_ptr<const std::vector<double>>;

/// One stored experience. Consecutive transitions share observation storage.
struct Transition {
    ObservationPtr obs;
    std::size_t action = 0;
    double reward = 0.0;
    ObservationPtr next_obs;
    bool done = false;
};

/// Fixed-capacity ring buffer; evicts oldest first, samples uniformly with replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
        if (capacity_ == 0) throw InvalidArgument("replay capacity must be positive");
        items_.reserve(capacity_);
    }

    void push(Transition t) {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(t));
        } else {
            items_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }

    /// i-th oldest stored transition.
    const Transition& at(std::size_t i) const {
        if (i >= items_.size()) throw InvalidArgument("replay index out of range");
        return items_[(head_ + i) % items_.size()];
    }

    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
        if (items_.empty()) throw ContractViolation("cannot sample from an empty replay buffer");
        std::vector<const Transition*> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) out.push_back(&items_[rng.index(items_.size())]);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> items_;
};

}  // namespace lexmorl
