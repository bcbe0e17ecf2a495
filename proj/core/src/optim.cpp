#include "hegs/optim.hpp"

#include <cmath>

namespace hegs {

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params_, AdamConfig config)
    : cfg(config), params(std::move(params_)) {
    for (auto& [name, p] : params) {
        m.push_back(Tensor::zeros(p.shape()));
        v.push_back(Tensor::zeros(p.shape()));
    }
}

double Adam::step() {
    double norm_sq = 0;
    for (auto& [name, p] : params) {
        const double* g = p.grad_data();
        for (int64_t i = 0; i < p.numel(); ++i) norm_sq += g[i] * g[i];
    }
    const double norm = std::sqrt(norm_sq);
    const double scale =
        (cfg.grad_clip > 0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;

    ++t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi].second;
        const bool decay = p.ndim() >= 2;
        double* pv = p.data();
        double* mg = m[pi].data();
        double* vg = v[pi].data();
        const double* g = p.grad_data();
        for (int64_t i = 0; i < p.numel(); ++i) {
            const double gi = g[i] * scale;
            mg[i] = cfg.beta1 * mg[i] + (1.0 - cfg.beta1) * gi;
            vg[i] = cfg.beta2 * vg[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = mg[i] / bc1;
            const double vhat = vg[i] / bc2;
            double upd = cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            if (decay) upd += cfg.lr * cfg.weight_decay * pv[i];
            pv[i] -= upd;
        }
    }
    return norm;
}

void Adam::zero_grad() {
    for (auto& [name, p] : params) p.zero_grad();
}

} // namespace hegs
