#pragma once

#include <vector>

#include "xgap/tensor.hpp"

namespace xgap {

struct AdamWConfig {
    double lr = 0.02;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay and bias correction. Moment tensors are
// allocated on the first step and shape-checked against the parameters on
// every step after that.
class AdamWState {
public:
    AdamWState() = default;
    explicit AdamWState(AdamWConfig cfg) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }
    long step_count() const { return t_; }

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

private:
    AdamWConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    long t_ = 0;
};

}  // namespace xgap
