#include <array>
#include <cmath>

#include "hegs/fft.hpp"
#include "hegs/ops.hpp"

namespace hegs::ops {

namespace {

bool g_spd_fault = false;

// Bilinear align-corners resize weights from (gh,gw) onto (h,w); each target
// cell maps to up to 4 (src_index, weight) pairs. Shared by freq_gate forward
// and its adjoint.
struct ResizePlan {
    struct Tap {
        int64_t src;
        double w;
    };
    std::vector<std::array<Tap, 4>> taps;  // per target cell
};

ResizePlan make_resize_plan(int64_t gh, int64_t gw, int64_t h, int64_t w) {
    ResizePlan plan;
    plan.taps.resize(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h; ++i) {
        const double fy = h > 1 ? static_cast<double>(i) * (gh - 1) / (h - 1) : 0.0;
        const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), gh - 1);
        const int64_t y1 = std::min<int64_t>(y0 + 1, gh - 1);
        const double wy = fy - y0;
        for (int64_t j = 0; j < w; ++j) {
            const double fx = w > 1 ? static_cast<double>(j) * (gw - 1) / (w - 1) : 0.0;
            const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), gw - 1);
            const int64_t x1 = std::min<int64_t>(x0 + 1, gw - 1);
            const double wx = fx - x0;
            auto& t = plan.taps[i * w + j];
            t[0] = {y0 * gw + x0, (1 - wy) * (1 - wx)};
            t[1] = {y0 * gw + x1, (1 - wy) * wx};
            t[2] = {y1 * gw + x0, wy * (1 - wx)};
            t[3] = {y1 * gw + x1, wy * wx};
        }
    }
    return plan;
}

// Full-spectrum gate for one channel: resize then enforce the Hermitian
// mirror symmetry G(u,v) == G(H-u, W-v) so real inputs stay real.
void build_symmetric_gate(const double* gate, const ResizePlan& plan, int64_t H, int64_t W,
                          std::vector<double>& full) {
    full.resize(static_cast<size_t>(H * W));
    std::vector<double> resized(static_cast<size_t>(H * W));
    for (int64_t i = 0; i < H * W; ++i) {
        double v = 0;
        for (const auto& tap : plan.taps[i]) v += gate[tap.src] * tap.w;
        resized[i] = v;
    }
    for (int64_t u = 0; u < H; ++u)
        for (int64_t v = 0; v < W; ++v) {
            const int64_t mu = (H - u) % H, mv = (W - v) % W;
            full[u * W + v] = 0.5 * (resized[u * W + v] + resized[mu * W + mv]);
        }
}

// Adjoint of build_symmetric_gate: scatters a full-spectrum gradient back to
// the (gh,gw) parameter grid.
void scatter_gate_grad(const std::vector<double>& gfull, const ResizePlan& plan, int64_t H,
                       int64_t W, double* ggate) {
    std::vector<double> gresized(static_cast<size_t>(H * W), 0.0);
    for (int64_t u = 0; u < H; ++u)
        for (int64_t v = 0; v < W; ++v) {
            const int64_t mu = (H - u) % H, mv = (W - v) % W;
            gresized[u * W + v] += 0.5 * gfull[u * W + v];
            gresized[mu * W + mv] += 0.5 * gfull[u * W + v];
        }
    for (int64_t i = 0; i < H * W; ++i)
        for (const auto& tap : plan.taps[i]) ggate[tap.src] += gresized[i] * tap.w;
}

} // namespace

void set_spd_fault_injection(bool enabled) { g_spd_fault = enabled; }

Tensor spd_rearrange(const Tensor& x) {
    HEGS_CHECK(x.ndim() == 4, "spd_rearrange expects NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    HEGS_CHECK(H % 2 == 0 && W % 2 == 0,
               "spd_rearrange needs even spatial dims, got " << H << "x" << W);
    const int64_t Ho = H / 2, Wo = W / 2;
    Tensor out = Tensor::zeros({N, 4 * C, Ho, Wo});
    const double* xv = x.data();
    double* ov = out.data();
    for (int64_t n = 0; n < N; ++n)
        for (int q = 0; q < 4; ++q) {
            const int64_t ri = q >> 1, cj = q & 1;
            for (int64_t c = 0; c < C; ++c) {
                const double* p = xv + (n * C + c) * H * W;
                double* dst = ov + ((n * 4 + q) * C + c) * Ho * Wo;
                for (int64_t i = 0; i < Ho; ++i)
                    for (int64_t j = 0; j < Wo; ++j)
                        dst[i * Wo + j] = p[(2 * i + ri) * W + 2 * j + cj];
            }
        }
    hegs::detail::make_node(out, {x}, [x, N, C, H, W, Ho, Wo](TensorImpl& o) {
        auto xi = x.impl();
        xi->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int q = 0; q < 4; ++q) {
                const int64_t ri = q >> 1, cj = q & 1;
                for (int64_t c = 0; c < C; ++c) {
                    const double* gsrc = o.g.data() + ((n * 4 + q) * C + c) * Ho * Wo;
                    double* gx = xi->g.data() + (n * C + c) * H * W;
                    for (int64_t i = 0; i < Ho; ++i)
                        for (int64_t j = 0; j < Wo; ++j)
                            gx[(2 * i + ri) * W + 2 * j + cj] += gsrc[i * Wo + j];
                }
            }
    });
    return out;
}

Tensor spd_inverse(const Tensor& y) {
    HEGS_CHECK(y.ndim() == 4, "spd_inverse expects NCHW");
    const int64_t N = y.dim(0), C4 = y.dim(1), Ho = y.dim(2), Wo = y.dim(3);
    HEGS_CHECK(C4 % 4 == 0, "spd_inverse needs channel count divisible by 4");
    const int64_t C = C4 / 4;
    Tensor out = Tensor::zeros({N, C, Ho * 2, Wo * 2});
    const int64_t H = Ho * 2, W = Wo * 2;
    const double* yv = y.data();
    double* ov = out.data();
    for (int64_t n = 0; n < N; ++n)
        for (int q = 0; q < 4; ++q) {
            int qq = q;
            if (g_spd_fault && C4 >= 8) qq = q ^ 1;  // selftest fault hook
            const int64_t ri = qq >> 1, cj = qq & 1;
            for (int64_t c = 0; c < C; ++c) {
                const double* src = yv + ((n * 4 + q) * C + c) * Ho * Wo;
                double* dst = ov + (n * C + c) * H * W;
                for (int64_t i = 0; i < Ho; ++i)
                    for (int64_t j = 0; j < Wo; ++j)
                        dst[(2 * i + ri) * W + 2 * j + cj] = src[i * Wo + j];
            }
        }
    hegs::detail::make_node(out, {y}, [y, N, C, Ho, Wo, H, W](TensorImpl& o) {
        auto yi = y.impl();
        yi->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int q = 0; q < 4; ++q) {
                const int64_t ri = q >> 1, cj = q & 1;
                for (int64_t c = 0; c < C; ++c) {
                    double* gy = yi->g.data() + ((n * 4 + q) * C + c) * Ho * Wo;
                    const double* go = o.g.data() + (n * C + c) * H * W;
                    for (int64_t i = 0; i < Ho; ++i)
                        for (int64_t j = 0; j < Wo; ++j)
                            gy[i * Wo + j] += go[(2 * i + ri) * W + 2 * j + cj];
                }
            }
    });
    return out;
}

Tensor freq_gate(const Tensor& x, const Tensor& gate) {
    HEGS_CHECK(x.ndim() == 4, "freq_gate expects NCHW input");
    HEGS_CHECK(gate.ndim() == 3 && gate.dim(0) == x.dim(1),
               "freq_gate gate must be (C,Gh,Gw) with C matching input");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Gh = gate.dim(1), Gw = gate.dim(2);
    const double norm = static_cast<double>(H * W);

    const ResizePlan plan = make_resize_plan(Gh, Gw, H, W);
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    const double* gv = gate.data();
    double* ov = out.data();

    std::vector<double> full;
    for (int64_t c = 0; c < C; ++c) {
        build_symmetric_gate(gv + c * Gh * Gw, plan, H, W, full);
        for (int64_t n = 0; n < N; ++n) {
            auto spec = fft::fft2_real(xv + (n * C + c) * H * W, H, W);
            for (int64_t i = 0; i < H * W; ++i) spec[i] *= full[i];
            fft::fft2(spec, H, W, true);
            double* q = ov + (n * C + c) * H * W;
            for (int64_t i = 0; i < H * W; ++i) q[i] = spec[i].real();
        }
    }

    hegs::detail::make_node(out, {x, gate}, [x, gate, plan, N, C, H, W, Gh, Gw,
                                             norm](TensorImpl& o) {
        auto xi = x.impl();
        auto gi = gate.impl();
        if (xi->requires_grad) xi->ensure_grad();
        if (gi->requires_grad) gi->ensure_grad();
        std::vector<double> full;
        std::vector<double> gfull(static_cast<size_t>(H * W));
        for (int64_t c = 0; c < C; ++c) {
            build_symmetric_gate(gi->v.data() + c * Gh * Gw, plan, H, W, full);
            std::fill(gfull.begin(), gfull.end(), 0.0);
            for (int64_t n = 0; n < N; ++n) {
                const double* go = o.g.data() + (n * C + c) * H * W;
                auto Z = fft::fft2_real(go, H, W);
                if (xi->requires_grad) {
                    // the gated operator is self-adjoint for a symmetric gate
                    auto back = Z;
                    for (int64_t i = 0; i < H * W; ++i) back[i] *= full[i];
                    fft::fft2(back, H, W, true);
                    double* gx = xi->g.data() + (n * C + c) * H * W;
                    for (int64_t i = 0; i < H * W; ++i) gx[i] += back[i].real();
                }
                if (gi->requires_grad) {
                    auto X = fft::fft2_real(xi->v.data() + (n * C + c) * H * W, H, W);
                    for (int64_t i = 0; i < H * W; ++i)
                        gfull[i] += (X[i] * std::conj(Z[i])).real() / norm;
                }
            }
            if (gi->requires_grad)
                scatter_gate_grad(gfull, plan, H, W, gi->g.data() + c * Gh * Gw);
        }
    });
    return out;
}

double freq_gate_imag_residue(const Tensor& x, const Tensor& gate) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Gh = gate.dim(1), Gw = gate.dim(2);
    const ResizePlan plan = make_resize_plan(Gh, Gw, H, W);
    std::vector<double> full;
    double residue = 0;
    for (int64_t c = 0; c < C; ++c) {
        build_symmetric_gate(gate.data() + c * Gh * Gw, plan, H, W, full);
        for (int64_t n = 0; n < N; ++n) {
            auto spec = fft::fft2_real(x.data() + (n * C + c) * H * W, H, W);
            for (int64_t i = 0; i < H * W; ++i) spec[i] *= full[i];
            fft::fft2(spec, H, W, true);
            for (const auto& z : spec) residue = std::max(residue, std::fabs(z.imag()));
        }
    }
    return residue;
}

Tensor freq_mag_mean(const Tensor& x) {
    HEGS_CHECK(x.ndim() == 4, "freq_mag_mean expects NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const double inv = 1.0 / static_cast<double>(H * W);
    Tensor out = Tensor::zeros({N, C});
    const double* xv = x.data();
    double* ov = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        auto spec = fft::fft2_real(xv + nc * H * W, H, W);
        double s = 0;
        for (const auto& z : spec) s += std::abs(z);
        ov[nc] = s * inv;
    }
    hegs::detail::make_node(out, {x}, [x, N, C, H, W, inv](TensorImpl& o) {
        auto xi = x.impl();
        xi->ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const double gs = o.g[nc];
            if (gs == 0.0) continue;
            auto X = fft::fft2_real(xi->v.data() + nc * H * W, H, W);
            // d|X_k|/dx = Re(conj(X_k)/|X_k| * e^{-2pi i k.n/N}); summing over k
            // is a forward transform of conj(X)/|X|
            std::vector<fft::cd> coef(X.size());
            for (size_t i = 0; i < X.size(); ++i) {
                const double m = std::abs(X[i]);
                coef[i] = m > 1e-300 ? std::conj(X[i]) / m : fft::cd(0, 0);
            }
            fft::fft2(coef, H, W, false);
            double* gx = xi->g.data() + nc * H * W;
            for (int64_t i = 0; i < H * W; ++i) gx[i] += gs * inv * coef[i].real();
        }
    });
    return out;
}

} // namespace hegs::ops
