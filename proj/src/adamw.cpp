#include "xgap/adamw.hpp"

#include <cmath>
#include <string>

#include "xgap/error.hpp"

namespace xgap {

void AdamWState::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size())
        throw InvalidArgument("adamw_step: params/grads count mismatch");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.push_back(Tensor::zeros_like(*p));
            v_.push_back(Tensor::zeros_like(*p));
        }
    }
    if (m_.size() != params.size())
        throw InvalidArgument("adamw_step: parameter count changed across steps");

    t_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        if (!p.same_shape(g) || !p.same_shape(m_[k]))
            throw InvalidArgument("adamw_step: shape mismatch at parameter " + std::to_string(k));
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            // decoupled decay: applied directly to the parameter, not the moments
            p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
        if (!p.all_finite()) throw NumericError("adamw_step: parameter became non-finite");
    }
}

}  // namespace xgap
