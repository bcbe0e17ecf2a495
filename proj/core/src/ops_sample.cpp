#include <cmath>

#include "hegs/ops.hpp"

namespace hegs::ops {

namespace {

inline int64_t clamp_idx(int64_t i, int64_t n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

} // namespace

Tensor grid_sample_bilinear(const Tensor& feat, const Tensor& coords) {
    HEGS_CHECK(feat.ndim() == 4, "grid_sample expects NCHW features");
    HEGS_CHECK(coords.ndim() == 3 && coords.dim(2) == 2, "grid_sample coords must be (N,S,2)");
    HEGS_CHECK(feat.dim(0) == coords.dim(0), "grid_sample batch mismatch");
    const int64_t N = feat.dim(0), C = feat.dim(1), H = feat.dim(2), W = feat.dim(3);
    const int64_t S = coords.dim(1);

    Tensor out = Tensor::zeros({N, S, C});
    const double* fv = feat.data();
    const double* cv = coords.data();
    double* ov = out.data();

    for (int64_t n = 0; n < N; ++n)
        for (int64_t s = 0; s < S; ++s) {
            // pixel-center convention: u in [0,1] maps to u*W - 0.5 so that
            // u=(j+0.5)/W lands exactly on column j
            const double px = cv[(n * S + s) * 2 + 0] * W - 0.5;
            const double py = cv[(n * S + s) * 2 + 1] * H - 0.5;
            const int64_t x0 = static_cast<int64_t>(std::floor(px));
            const int64_t y0 = static_cast<int64_t>(std::floor(py));
            const double fx = px - x0, fy = py - y0;
            const int64_t x0c = clamp_idx(x0, W), x1c = clamp_idx(x0 + 1, W);
            const int64_t y0c = clamp_idx(y0, H), y1c = clamp_idx(y0 + 1, H);
            const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
            const double w10 = fy * (1 - fx), w11 = fy * fx;
            const double* fb = fv + n * C * H * W;
            double* q = ov + (n * S + s) * C;
            for (int64_t c = 0; c < C; ++c) {
                const double* p = fb + c * H * W;
                q[c] = w00 * p[y0c * W + x0c] + w01 * p[y0c * W + x1c] +
                       w10 * p[y1c * W + x0c] + w11 * p[y1c * W + x1c];
            }
        }

    hegs::detail::make_node(out, {feat, coords}, [feat, coords, N, C, H, W, S](TensorImpl& o) {
        auto fi = feat.impl();
        auto ci = coords.impl();
        if (fi->requires_grad) fi->ensure_grad();
        if (ci->requires_grad) ci->ensure_grad();
        const double* fv = fi->v.data();
        const double* cv = ci->v.data();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t s = 0; s < S; ++s) {
                const double px = cv[(n * S + s) * 2 + 0] * W - 0.5;
                const double py = cv[(n * S + s) * 2 + 1] * H - 0.5;
                const int64_t x0 = static_cast<int64_t>(std::floor(px));
                const int64_t y0 = static_cast<int64_t>(std::floor(py));
                const double fx = px - x0, fy = py - y0;
                const int64_t x0c = clamp_idx(x0, W), x1c = clamp_idx(x0 + 1, W);
                const int64_t y0c = clamp_idx(y0, H), y1c = clamp_idx(y0 + 1, H);
                const double* go = o.g.data() + (n * S + s) * C;
                double gpx = 0, gpy = 0;
                for (int64_t c = 0; c < C; ++c) {
                    const double g = go[c];
                    if (g == 0.0 && !ci->requires_grad) continue;
                    const int64_t base = (n * C + c) * H * W;
                    const double v00 = fv[base + y0c * W + x0c];
                    const double v01 = fv[base + y0c * W + x1c];
                    const double v10 = fv[base + y1c * W + x0c];
                    const double v11 = fv[base + y1c * W + x1c];
                    if (fi->requires_grad) {
                        fi->g[base + y0c * W + x0c] += g * (1 - fy) * (1 - fx);
                        fi->g[base + y0c * W + x1c] += g * (1 - fy) * fx;
                        fi->g[base + y1c * W + x0c] += g * fy * (1 - fx);
                        fi->g[base + y1c * W + x1c] += g * fy * fx;
                    }
                    // d/dfx and d/dfy of the bilinear blend
                    gpx += g * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                    gpy += g * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
                }
                if (ci->requires_grad) {
                    ci->g[(n * S + s) * 2 + 0] += gpx * W;
                    ci->g[(n * S + s) * 2 + 1] += gpy * H;
                }
            }
    });
    return out;
}

Tensor take_head_channels(const Tensor& x, int heads) {
    HEGS_CHECK(x.ndim() == 5, "take_head_channels expects (N,Q,H,M,D)");
    const int64_t N = x.dim(0), Q = x.dim(1), Hh = x.dim(2), M = x.dim(3), D = x.dim(4);
    HEGS_CHECK(Hh == heads, "head axis size mismatch");
    HEGS_CHECK(D % heads == 0, "channels not divisible by heads");
    const int64_t dh = D / heads;
    Tensor out = Tensor::zeros({N, Q, Hh, M, dh});
    const double* xv = x.data();
    double* ov = out.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t q = 0; q < Q; ++q)
            for (int64_t h = 0; h < Hh; ++h)
                for (int64_t m = 0; m < M; ++m) {
                    const double* src = xv + (((n * Q + q) * Hh + h) * M + m) * D + h * dh;
                    double* dst = ov + (((n * Q + q) * Hh + h) * M + m) * dh;
                    std::copy(src, src + dh, dst);
                }
    hegs::detail::make_node(out, {x}, [x, N, Q, Hh, M, D, dh](TensorImpl& o) {
        auto xi = x.impl();
        xi->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t q = 0; q < Q; ++q)
                for (int64_t h = 0; h < Hh; ++h)
                    for (int64_t m = 0; m < M; ++m) {
                        double* dst = xi->g.data() + (((n * Q + q) * Hh + h) * M + m) * D + h * dh;
                        const double* src = o.g.data() + (((n * Q + q) * Hh + h) * M + m) * dh;
                        for (int64_t c = 0; c < dh; ++c) dst[c] += src[c];
                    }
    });
    return out;
}

} // namespace hegs::ops
