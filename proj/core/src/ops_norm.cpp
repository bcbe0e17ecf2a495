#include <cmath>
#include <limits>

#include "hegs/ops.hpp"
#include "hegs/parallel.hpp"

namespace hegs::ops {

Tensor softmax_lastdim(const Tensor& a) {
    const int64_t C = a.dim(-1);
    const int64_t R = a.numel() / C;
    Tensor out = Tensor::zeros(a.shape());
    const double* av = a.data();
    double* ov = out.data();
    parallel_for(R, [&](int64_t rlo, int64_t rhi) {
        for (int64_t r = rlo; r < rhi; ++r) {
            const double* x = av + r * C;
            double* y = ov + r * C;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t c = 0; c < C; ++c) mx = std::max(mx, x[c]);
            if (!std::isfinite(mx)) {
                // fully masked row: defined as all-zero so downstream sums stay finite
                for (int64_t c = 0; c < C; ++c) y[c] = 0.0;
                continue;
            }
            double z = 0;
            for (int64_t c = 0; c < C; ++c) {
                y[c] = std::exp(x[c] - mx);  // exp(-inf) == 0 keeps masked slots exact zeros
                z += y[c];
            }
            const double inv = 1.0 / z;
            for (int64_t c = 0; c < C; ++c) y[c] *= inv;
        }
    });
    hegs::detail::make_node(out, {a}, [a, R, C](TensorImpl& o) {
        auto ai = a.impl();
        ai->ensure_grad();
        parallel_for(R, [&](int64_t rlo, int64_t rhi) {
            for (int64_t r = rlo; r < rhi; ++r) {
                const double* y = o.v.data() + r * C;
                const double* go = o.g.data() + r * C;
                double dot = 0;
                for (int64_t c = 0; c < C; ++c) dot += y[c] * go[c];
                double* gx = ai->g.data() + r * C;
                for (int64_t c = 0; c < C; ++c) gx[c] += y[c] * (go[c] - dot);
            }
        });
    });
    return out;
}

Tensor layer_norm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int64_t C = x.dim(-1);
    HEGS_CHECK(gamma.numel() == C && beta.numel() == C, "layer_norm affine size mismatch");
    const int64_t R = x.numel() / C;

    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> mean(R), inv_std(R);
    const double* xv = x.data();
    const double* gv = gamma.data();
    const double* bv = beta.data();
    double* ov = out.data();
    for (int64_t r = 0; r < R; ++r) {
        const double* xr = xv + r * C;
        double mu = 0;
        for (int64_t c = 0; c < C; ++c) mu += xr[c];
        mu /= C;
        double var = 0;
        for (int64_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= C;
        const double is = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv_std[r] = is;
        double* yr = ov + r * C;
        for (int64_t c = 0; c < C; ++c) yr[c] = (xr[c] - mu) * is * gv[c] + bv[c];
    }
    hegs::detail::make_node(
        out, {x, gamma, beta}, [x, gamma, beta, mean, inv_std, R, C](TensorImpl& o) {
            auto xi = x.impl();
            auto gi = gamma.impl();
            auto bi = beta.impl();
            if (xi->requires_grad) xi->ensure_grad();
            if (gi->requires_grad) gi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            const double* xv = xi->v.data();
            const double* gv = gi->v.data();
            for (int64_t r = 0; r < R; ++r) {
                const double* xr = xv + r * C;
                const double* go = o.g.data() + r * C;
                const double mu = mean[r], is = inv_std[r];
                double sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (int64_t c = 0; c < C; ++c) {
                    const double xhat = (xr[c] - mu) * is;
                    const double dxhat = go[c] * gv[c];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    if (gi->requires_grad) gi->g[c] += go[c] * xhat;
                    if (bi->requires_grad) bi->g[c] += go[c];
                }
                if (xi->requires_grad) {
                    double* gx = xi->g.data() + r * C;
                    for (int64_t c = 0; c < C; ++c) {
                        const double xhat = (xr[c] - mu) * is;
                        const double dxhat = go[c] * gv[c];
                        gx[c] += is * (dxhat - sum_dxhat / C - xhat * sum_dxhat_xhat / C);
                    }
                }
            }
        });
    return out;
}

Tensor batch_norm_nchw(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       Tensor& running_mean, Tensor& running_var, bool training,
                       double momentum, double eps) {
    HEGS_CHECK(x.ndim() == 4, "batch_norm expects NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    HEGS_CHECK(gamma.numel() == C && beta.numel() == C, "batch_norm affine size mismatch");
    const int64_t plane = H * W;
    const int64_t m = N * plane;

    std::vector<double> mu(C), var(C);
    const double* xv = x.data();
    if (training) {
        for (int64_t c = 0; c < C; ++c) {
            double s = 0;
            for (int64_t n = 0; n < N; ++n) {
                const double* p = xv + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) s += p[i];
            }
            mu[c] = s / m;
            double v = 0;
            for (int64_t n = 0; n < N; ++n) {
                const double* p = xv + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) v += (p[i] - mu[c]) * (p[i] - mu[c]);
            }
            var[c] = v / m;  // biased, used for normalization
        }
        // running stats keep the unbiased estimate
        double* rm = running_mean.data();
        double* rv = running_var.data();
        const double unbias = m > 1 ? static_cast<double>(m) / (m - 1) : 1.0;
        for (int64_t c = 0; c < C; ++c) {
            rm[c] = (1.0 - momentum) * rm[c] + momentum * mu[c];
            rv[c] = (1.0 - momentum) * rv[c] + momentum * var[c] * unbias;
        }
    } else {
        const double* rm = running_mean.data();
        const double* rv = running_var.data();
        for (int64_t c = 0; c < C; ++c) {
            mu[c] = rm[c];
            var[c] = rv[c];
        }
    }

    Tensor out = Tensor::zeros(x.shape());
    double* ov = out.data();
    const double* gv = gamma.data();
    const double* bv = beta.data();
    std::vector<double> inv_std(C);
    for (int64_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double* p = xv + (n * C + c) * plane;
            double* q = ov + (n * C + c) * plane;
            const double a = inv_std[c] * gv[c];
            const double b = bv[c] - mu[c] * a;
            for (int64_t i = 0; i < plane; ++i) q[i] = p[i] * a + b;
        }

    hegs::detail::make_node(
        out, {x, gamma, beta},
        [x, gamma, beta, mu, inv_std, training, N, C, plane, m](TensorImpl& o) {
            auto xi = x.impl();
            auto gi = gamma.impl();
            auto bi = beta.impl();
            if (xi->requires_grad) xi->ensure_grad();
            if (gi->requires_grad) gi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            const double* xv = xi->v.data();
            const double* gv = gi->v.data();
            for (int64_t c = 0; c < C; ++c) {
                const double is = inv_std[c];
                double sum_go = 0, sum_go_xhat = 0;
                for (int64_t n = 0; n < N; ++n) {
                    const double* p = xv + (n * C + c) * plane;
                    const double* go = o.g.data() + (n * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        sum_go += go[i];
                        sum_go_xhat += go[i] * (p[i] - mu[c]) * is;
                    }
                }
                if (gi->requires_grad) gi->g[c] += sum_go_xhat;
                if (bi->requires_grad) bi->g[c] += sum_go;
                if (!xi->requires_grad) continue;
                const double gc = gv[c];
                for (int64_t n = 0; n < N; ++n) {
                    const double* p = xv + (n * C + c) * plane;
                    const double* go = o.g.data() + (n * C + c) * plane;
                    double* gx = xi->g.data() + (n * C + c) * plane;
                    if (training) {
                        for (int64_t i = 0; i < plane; ++i) {
                            const double xhat = (p[i] - mu[c]) * is;
                            gx[i] += gc * is * (go[i] - sum_go / m - xhat * sum_go_xhat / m);
                        }
                    } else {
                        for (int64_t i = 0; i < plane; ++i) gx[i] += gc * is * go[i];
                    }
                }
            }
        });
    return out;
}

} // namespace hegs::ops
