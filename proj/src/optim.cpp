#include "alf/optim.hpp"

#include <cmath>

namespace alf {

AdamW::AdamW(std::vector<Tensor> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0f);
        v_.emplace_back(p.size(), 0.0f);
    }
}

void AdamW::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void AdamW::step() {
    ++step_count_;
    const float t = static_cast<float>(step_count_);
    const float bc1 = 1.0f - std::pow(cfg_.beta1, t);
    const float bc2 = 1.0f - std::pow(cfg_.beta2, t);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        auto& data = p.data();
        const bool has_grad = p.has_grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < data.size(); ++i) {
            float g = has_grad ? p.grad()[i] : 0.0f;
            if (!std::isfinite(g)) throw NumericError("AdamW: non-finite gradient at step " + std::to_string(step_count_));
            m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g * g;
            float mhat = m[i] / bc1;
            float vhat = v[i] / bc2;
            // decoupled decay: applied to the parameter, not through the moments
            data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.epsilon) + cfg_.weight_decay * data[i]);
        }
    }
}

}  // namespace alf
