#pragma once

#include <vector>

#include "alf/tensor.hpp"

namespace alf {

// AdamW with decoupled weight decay. Deterministic given parameters and grads.
class AdamW {
public:
    struct Config {
        float lr = 5e-5f;
        float beta1 = 0.9f;
        float beta2 = 0.999f;
        float epsilon = 1e-8f;
        float weight_decay = 0.0f;
    };

    AdamW(std::vector<Tensor> params, Config cfg);

    void zero_grad();
    void step();  // reads each parameter's grad (missing grad = zero)

    int step_count() const { return step_count_; }
    const Config& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
    Config cfg_;
    int step_count_ = 0;
};

}  // namespace alf
