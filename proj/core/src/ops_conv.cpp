#include <Eigen/Core>

#include "hegs/ops.hpp"
#include "hegs/parallel.hpp"

namespace hegs::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col: (Cin*kh*kw, Ho*Wo) for one sample, rows ordered channel-major then
// kernel row/col, matching the OIHW weight layout flattened per output.
void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad_h, int64_t pad_w, int64_t Ho, int64_t Wo,
            double* col) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t ki = 0; ki < kh; ++ki)
            for (int64_t kj = 0; kj < kw; ++kj) {
                double* row = col + ((c * kh + ki) * kw + kj) * Ho * Wo;
                for (int64_t oi = 0; oi < Ho; ++oi) {
                    const int64_t ii = oi * stride + ki - pad_h;
                    if (ii < 0 || ii >= H) {
                        std::fill(row + oi * Wo, row + (oi + 1) * Wo, 0.0);
                        continue;
                    }
                    const double* src = x + (c * H + ii) * W;
                    for (int64_t oj = 0; oj < Wo; ++oj) {
                        const int64_t jj = oj * stride + kj - pad_w;
                        row[oi * Wo + oj] = (jj < 0 || jj >= W) ? 0.0 : src[jj];
                    }
                }
            }
}

void col2im_acc(const double* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad_h, int64_t pad_w, int64_t Ho, int64_t Wo,
                double* gx) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t ki = 0; ki < kh; ++ki)
            for (int64_t kj = 0; kj < kw; ++kj) {
                const double* row = col + ((c * kh + ki) * kw + kj) * Ho * Wo;
                for (int64_t oi = 0; oi < Ho; ++oi) {
                    const int64_t ii = oi * stride + ki - pad_h;
                    if (ii < 0 || ii >= H) continue;
                    double* dst = gx + (c * H + ii) * W;
                    for (int64_t oj = 0; oj < Wo; ++oj) {
                        const int64_t jj = oj * stride + kj - pad_w;
                        if (jj >= 0 && jj < W) dst[jj] += row[oi * Wo + oj];
                    }
                }
            }
}

// Depthwise convolutions skip im2col entirely: the unfolded matrix for
// groups == C is huge (C*kh*kw rows) while the direct loop touches each
// input once.
Tensor conv2d_depthwise(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int pad_h, int pad_w) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t kh = w.dim(2), kw = w.dim(3);
    const int64_t Ho = (H + 2 * pad_h - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad_w - kw) / stride + 1;
    HEGS_CHECK(Ho > 0 && Wo > 0, "conv2d output collapsed to zero size");
    const bool has_bias = b.defined();

    Tensor out = Tensor::zeros({N, C, Ho, Wo});
    const double* xv = x.data();
    const double* wv = w.data();
    const double* bv = has_bias ? b.data() : nullptr;
    double* ov = out.data();
    parallel_for(N * C, [&](int64_t lo, int64_t hi) {
        for (int64_t nc = lo; nc < hi; ++nc) {
            const int64_t c = nc % C;
            const double* xp = xv + nc * H * W;
            const double* wp = wv + c * kh * kw;
            double* op = ov + nc * Ho * Wo;
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    double acc = has_bias ? bv[c] : 0.0;
                    const int64_t iy0 = oy * stride - pad_h;
                    const int64_t ix0 = ox * stride - pad_w;
                    const int64_t ki_lo = std::max<int64_t>(0, -iy0);
                    const int64_t ki_hi = std::min<int64_t>(kh, H - iy0);
                    const int64_t kj_lo = std::max<int64_t>(0, -ix0);
                    const int64_t kj_hi = std::min<int64_t>(kw, W - ix0);
                    for (int64_t ki = ki_lo; ki < ki_hi; ++ki) {
                        const double* xrow = xp + (iy0 + ki) * W + ix0;
                        const double* wrow = wp + ki * kw;
                        for (int64_t kj = kj_lo; kj < kj_hi; ++kj)
                            acc += wrow[kj] * xrow[kj];
                    }
                    op[oy * Wo + ox] = acc;
                }
        }
    });

    std::vector<Tensor> parents = has_bias ? std::vector<Tensor>{x, w, b}
                                           : std::vector<Tensor>{x, w};
    hegs::detail::make_node(out, parents, [x, w, b, has_bias, stride, pad_h, pad_w, N, C, H,
                                           W, kh, kw, Ho, Wo](TensorImpl& o) {
        auto xi = x.impl();
        auto wi = w.impl();
        if (xi->requires_grad) xi->ensure_grad();
        if (wi->requires_grad) wi->ensure_grad();
        if (has_bias && b.impl()->requires_grad) {
            auto bi = b.impl();
            bi->ensure_grad();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const double* go = o.g.data() + nc * Ho * Wo;
                double s = 0;
                for (int64_t i = 0; i < Ho * Wo; ++i) s += go[i];
                bi->g[nc % C] += s;
            }
        }
        // weight gradient: per channel, accumulated serially for determinism
        if (wi->requires_grad) {
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const int64_t c = nc % C;
                const double* xp = xi->v.data() + nc * H * W;
                const double* go = o.g.data() + nc * Ho * Wo;
                double* gw = wi->g.data() + c * kh * kw;
                for (int64_t oy = 0; oy < Ho; ++oy)
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        const double g = go[oy * Wo + ox];
                        if (g == 0.0) continue;
                        const int64_t iy0 = oy * stride - pad_h;
                        const int64_t ix0 = ox * stride - pad_w;
                        const int64_t ki_lo = std::max<int64_t>(0, -iy0);
                        const int64_t ki_hi = std::min<int64_t>(kh, H - iy0);
                        const int64_t kj_lo = std::max<int64_t>(0, -ix0);
                        const int64_t kj_hi = std::min<int64_t>(kw, W - ix0);
                        for (int64_t ki = ki_lo; ki < ki_hi; ++ki) {
                            const double* xrow = xp + (iy0 + ki) * W + ix0;
                            for (int64_t kj = kj_lo; kj < kj_hi; ++kj)
                                gw[ki * kw + kj] += g * xrow[kj];
                        }
                    }
            }
        }
        if (xi->requires_grad) {
            parallel_for(N * C, [&](int64_t lo, int64_t hi) {
                for (int64_t nc = lo; nc < hi; ++nc) {
                    const int64_t c = nc % C;
                    const double* wp = wi->v.data() + c * kh * kw;
                    const double* go = o.g.data() + nc * Ho * Wo;
                    double* gx = xi->g.data() + nc * H * W;
                    for (int64_t oy = 0; oy < Ho; ++oy)
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            const double g = go[oy * Wo + ox];
                            if (g == 0.0) continue;
                            const int64_t iy0 = oy * stride - pad_h;
                            const int64_t ix0 = ox * stride - pad_w;
                            const int64_t ki_lo = std::max<int64_t>(0, -iy0);
                            const int64_t ki_hi = std::min<int64_t>(kh, H - iy0);
                            const int64_t kj_lo = std::max<int64_t>(0, -ix0);
                            const int64_t kj_hi = std::min<int64_t>(kw, W - ix0);
                            for (int64_t ki = ki_lo; ki < ki_hi; ++ki) {
                                double* xrow = gx + (iy0 + ki) * W + ix0;
                                const double* wrow = wp + ki * kw;
                                for (int64_t kj = kj_lo; kj < kj_hi; ++kj)
                                    xrow[kj] += g * wrow[kj];
                            }
                        }
                }
            });
        }
    });
    return out;
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
              int groups) {
    return conv2d_rect(x, w, b, stride, pad, pad, groups);
}

Tensor conv2d_rect(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad_h,
                   int pad_w, int groups) {
    HEGS_CHECK(x.ndim() == 4 && w.ndim() == 4, "conv2d expects NCHW input and OIHW weight");
    if (groups > 1 && groups == x.dim(1) && w.dim(0) == x.dim(1) && w.dim(1) == 1)
        return conv2d_depthwise(x, w, b, stride, pad_h, pad_w);
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(0), Cin_g = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    HEGS_CHECK(C == Cin_g * groups, "conv2d channel/group mismatch: C=" << C << " w expects "
                                                                        << Cin_g * groups);
    HEGS_CHECK(Cout % groups == 0, "conv2d Cout must divide groups");
    const int64_t Ho = (H + 2 * pad_h - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad_w - kw) / stride + 1;
    HEGS_CHECK(Ho > 0 && Wo > 0, "conv2d output collapsed to zero size");
    const bool has_bias = b.defined();
    if (has_bias) HEGS_CHECK(b.numel() == Cout, "conv2d bias size");

    const int64_t Cout_g = Cout / groups;
    const int64_t krows = Cin_g * kh * kw;

    Tensor out = Tensor::zeros({N, Cout, Ho, Wo});
    const double* xv = x.data();
    const double* wv = w.data();
    double* ov = out.data();

    parallel_for(N, [&](int64_t lo, int64_t hi) {
        std::vector<double> col(static_cast<size_t>(C * kh * kw * Ho * Wo));
        for (int64_t n = lo; n < hi; ++n) {
            im2col(xv + n * C * H * W, C, H, W, kh, kw, stride, pad_h, pad_w, Ho, Wo, col.data());
            for (int g = 0; g < groups; ++g) {
                Eigen::Map<MatRM> o(ov + (n * Cout + g * Cout_g) * Ho * Wo, Cout_g, Ho * Wo);
                Eigen::Map<const MatRM> wm(wv + g * Cout_g * krows, Cout_g, krows);
                Eigen::Map<const MatRM> cm(col.data() + g * krows * Ho * Wo, krows, Ho * Wo);
                o.noalias() = wm * cm;
            }
        }
    });
    if (has_bias) {
        const double* bv = b.data();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < Cout; ++c) {
                double* p = ov + (n * Cout + c) * Ho * Wo;
                for (int64_t i = 0; i < Ho * Wo; ++i) p[i] += bv[c];
            }
    }

    std::vector<Tensor> parents = has_bias ? std::vector<Tensor>{x, w, b}
                                           : std::vector<Tensor>{x, w};
    hegs::detail::make_node(out, parents,
                            [x, w, b, has_bias, stride, pad_h, pad_w, groups, N, C, H, W, Cout,
                             Cout_g, krows, kh, kw, Ho, Wo](TensorImpl& o) {
        auto xi = x.impl();
        auto wi = w.impl();
        if (xi->requires_grad) xi->ensure_grad();
        if (wi->requires_grad) wi->ensure_grad();
        if (has_bias && b.impl()->requires_grad) {
            auto bi = b.impl();
            bi->ensure_grad();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < Cout; ++c) {
                    const double* go = o.g.data() + (n * Cout + c) * Ho * Wo;
                    double s = 0;
                    for (int64_t i = 0; i < Ho * Wo; ++i) s += go[i];
                    bi->g[c] += s;
                }
        }
        if (!xi->requires_grad && !wi->requires_grad) return;
        if (wi->requires_grad) {
            // weight gradient accumulates across the batch: kept serial so the
            // summation order is independent of the thread count
            std::vector<double> col(static_cast<size_t>(C * kh * kw * Ho * Wo));
            for (int64_t n = 0; n < N; ++n) {
                im2col(xi->v.data() + n * C * H * W, C, H, W, kh, kw, stride, pad_h, pad_w,
                       Ho, Wo, col.data());
                for (int g = 0; g < groups; ++g) {
                    Eigen::Map<const MatRM> go(o.g.data() + (n * Cout + g * Cout_g) * Ho * Wo,
                                               Cout_g, Ho * Wo);
                    Eigen::Map<MatRM> gw(wi->g.data() + g * Cout_g * krows, Cout_g, krows);
                    Eigen::Map<const MatRM> cm(col.data() + g * krows * Ho * Wo, krows,
                                               Ho * Wo);
                    gw.noalias() += go * cm.transpose();
                }
            }
        }
        if (xi->requires_grad) {
            parallel_for(N, [&](int64_t lo, int64_t hi) {
                std::vector<double> col_g(static_cast<size_t>(C * kh * kw * Ho * Wo));
                for (int64_t n = lo; n < hi; ++n) {
                    for (int g = 0; g < groups; ++g) {
                        Eigen::Map<const MatRM> go(
                            o.g.data() + (n * Cout + g * Cout_g) * Ho * Wo, Cout_g, Ho * Wo);
                        Eigen::Map<MatRM> gc(col_g.data() + g * krows * Ho * Wo, krows,
                                             Ho * Wo);
                        Eigen::Map<const MatRM> wm(wi->v.data() + g * Cout_g * krows, Cout_g,
                                                   krows);
                        gc.noalias() = wm.transpose() * go;
                    }
                    col2im_acc(col_g.data(), C, H, W, kh, kw, stride, pad_h, pad_w, Ho, Wo,
                               xi->g.data() + n * C * H * W);
                }
            });
        }
    });
    return out;
}

Tensor avg_blur3(const Tensor& x) {
    HEGS_CHECK(x.ndim() == 4, "avg_blur3 expects NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* ov = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* p = xv + nc * H * W;
        double* q = ov + nc * H * W;
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
                double s = 0;
                int cnt = 0;
                for (int64_t di = -1; di <= 1; ++di)
                    for (int64_t dj = -1; dj <= 1; ++dj) {
                        const int64_t ii = i + di, jj = j + dj;
                        if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                        s += p[ii * W + jj];
                        ++cnt;
                    }
                q[i * W + j] = s / cnt;  // divisor=valid taps so constants are preserved
            }
    }
    hegs::detail::make_node(out, {x}, [x, N, C, H, W](TensorImpl& o) {
        auto xi = x.impl();
        xi->ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const double* go = o.g.data() + nc * H * W;
            double* gx = xi->g.data() + nc * H * W;
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    int cnt = ((i > 0) + (i < H - 1) + 1) * ((j > 0) + (j < W - 1) + 1);
                    const double g = go[i * W + j] / cnt;
                    for (int64_t di = -1; di <= 1; ++di)
                        for (int64_t dj = -1; dj <= 1; ++dj) {
                            const int64_t ii = i + di, jj = j + dj;
                            if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                            gx[ii * W + jj] += g;
                        }
                }
        }
    });
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    HEGS_CHECK(x.ndim() == 4, "global_avg_pool expects NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor out = Tensor::zeros({N, C});
    const double* xv = x.data();
    double* ov = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        double s = 0;
        const double* p = xv + nc * plane;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
        ov[nc] = s / plane;
    }
    hegs::detail::make_node(out, {x}, [x, plane](TensorImpl& o) {
        auto xi = x.impl();
        xi->ensure_grad();
        for (size_t nc = 0; nc < o.g.size(); ++nc) {
            const double g = o.g[nc] / plane;
            double* gx = xi->g.data() + nc * plane;
            for (int64_t i = 0; i < plane; ++i) gx[i] += g;
        }
    });
    return out;
}

Tensor upsample_nearest2(const Tensor& x) {
    HEGS_CHECK(x.ndim() == 4, "upsample_nearest2 expects NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out = Tensor::zeros({N, C, H * 2, W * 2});
    const double* xv = x.data();
    double* ov = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* p = xv + nc * H * W;
        double* q = ov + nc * 4 * H * W;
        for (int64_t i = 0; i < 2 * H; ++i)
            for (int64_t j = 0; j < 2 * W; ++j) q[i * 2 * W + j] = p[(i / 2) * W + j / 2];
    }
    hegs::detail::make_node(out, {x}, [x, N, C, H, W](TensorImpl& o) {
        auto xi = x.impl();
        xi->ensure_grad();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const double* go = o.g.data() + nc * 4 * H * W;
            double* gx = xi->g.data() + nc * H * W;
            for (int64_t i = 0; i < 2 * H; ++i)
                for (int64_t j = 0; j < 2 * W; ++j) gx[(i / 2) * W + j / 2] += go[i * 2 * W + j];
        }
    });
    return out;
}

} // namespace hegs::ops
