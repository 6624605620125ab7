#pragma once

#include <vector>

#include "alf/common.hpp"

namespace alf {

// Diffusion noise schedule. alphas[t] is the cumulative signal-retention
// product with alphas[0] = 1, so t = 0 is the clean signal.
struct NoiseSchedule {
    int t_train = 0;
    std::vector<double> betas;   // betas[t-1] is the step-t variance, t = 1..T
    std::vector<double> alphas;  // size T+1, alphas[0] = 1, strictly decreasing

    double alpha(int t) const {
        if (t < 0 || t > t_train) throw ShapeError("schedule: t out of range");
        return alphas[static_cast<std::size_t>(t)];
    }
    double beta(int t) const {  // t in 1..T
        if (t < 1 || t > t_train) throw ShapeError("schedule: beta index out of range");
        return betas[static_cast<std::size_t>(t - 1)];
    }
    void validate() const;
};

// Linear betas from beta_min to beta_max inclusive; alphas by running product.
NoiseSchedule make_schedule(int t_train, double beta_min, double beta_max);

}  // namespace alf
