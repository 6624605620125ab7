#include "alf/schedule.hpp"

namespace alf {

void NoiseSchedule::validate() const {
    if (t_train < 1) throw ConfigError("schedule: t_train must be >= 1");
    if (static_cast<int>(betas.size()) != t_train || static_cast<int>(alphas.size()) != t_train + 1)
        throw ConfigError("schedule: inconsistent array lengths");
    if (alphas[0] != 1.0) throw ConfigError("schedule: alphas[0] must be 1");
    double prev_beta = 0.0;
    for (int t = 1; t <= t_train; ++t) {
        double b = betas[static_cast<std::size_t>(t - 1)];
        if (!(b > 0.0 && b < 1.0)) throw ConfigError("schedule: beta out of (0,1)");
        if (t_train > 1 && !(b > prev_beta)) throw ConfigError("schedule: betas must be strictly increasing");
        prev_beta = b;
        if (!(alphas[static_cast<std::size_t>(t)] < alphas[static_cast<std::size_t>(t - 1)]))
            throw ConfigError("schedule: alphas must be strictly decreasing");
    }
}

NoiseSchedule make_schedule(int t_train, double beta_min, double beta_max) {
    if (t_train < 1) throw ConfigError("make_schedule: t_train must be >= 1");
    if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0))
        throw ConfigError("make_schedule: need 0 < beta_min < beta_max < 1");
    NoiseSchedule s;
    s.t_train = t_train;
    s.betas.resize(static_cast<std::size_t>(t_train));
    s.alphas.resize(static_cast<std::size_t>(t_train) + 1);
    s.alphas[0] = 1.0;
    for (int t = 1; t <= t_train; ++t) {
        double frac = t_train == 1 ? 0.0 : static_cast<double>(t - 1) / (t_train - 1);
        double b = beta_min + (beta_max - beta_min) * frac;
        s.betas[static_cast<std::size_t>(t - 1)] = b;
        s.alphas[static_cast<std::size_t>(t)] = s.alphas[static_cast<std::size_t>(t - 1)] * (1.0 - b);
    }
    s.validate();
    return s;
}

}  // namespace alf
