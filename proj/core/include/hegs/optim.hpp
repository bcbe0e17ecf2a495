#pragma once

#include "hegs/nn.hpp"

namespace hegs {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;  // decoupled, applied to rank>=2 tensors only
    double grad_clip = 0.1;      // global norm; <=0 disables
};

class Adam {
public:
    Adam() = default;
    Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg);

    // Clips the global gradient norm, applies the update, returns the
    // pre-clip norm.
    double step();
    void zero_grad();

    AdamConfig cfg;
    int64_t t = 0;
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<Tensor> m, v;
};

} // namespace hegs
