#include <numeric>

#include "hegs/ops.hpp"

namespace hegs::ops {

namespace {

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

} // namespace

Tensor reshape(const Tensor& a, Shape shape) {
    int64_t n = 1;
    int infer = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            HEGS_CHECK(infer < 0, "at most one -1 dim in reshape");
            infer = static_cast<int>(i);
        } else {
            n *= shape[i];
        }
    }
    if (infer >= 0) shape[infer] = a.numel() / n;
    HEGS_CHECK(shape_numel(shape) == a.numel(),
               "reshape " << shape_str(a.shape()) << " -> " << shape_str(shape));
    Tensor out = Tensor::from(shape, a.values());
    hegs::detail::make_node(out, {a}, [a](TensorImpl& o) {
        auto ai = a.impl();
        ai->ensure_grad();
        for (size_t i = 0; i < o.g.size(); ++i) ai->g[i] += o.g[i];
    });
    return out;
}

Tensor permute(const Tensor& a, const std::vector<int>& dims) {
    const Shape& is = a.shape();
    const int nd = static_cast<int>(is.size());
    HEGS_CHECK(static_cast<int>(dims.size()) == nd, "permute rank mismatch");
    Shape os(nd);
    for (int i = 0; i < nd; ++i) os[i] = is[dims[i]];
    auto ist = row_major_strides(is);

    Tensor out = Tensor::zeros(os);
    const double* av = a.data();
    double* ov = out.data();
    std::vector<int64_t> idx(nd, 0);
    const int64_t n = out.numel();
    for (int64_t lin = 0; lin < n; ++lin) {
        int64_t src = 0;
        for (int d = 0; d < nd; ++d) src += idx[d] * ist[dims[d]];
        ov[lin] = av[src];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[d] < os[d]) break;
            idx[d] = 0;
        }
    }
    hegs::detail::make_node(out, {a}, [a, dims, ist](TensorImpl& o) {
        auto ai = a.impl();
        ai->ensure_grad();
        const int nd = static_cast<int>(dims.size());
        std::vector<int64_t> idx(nd, 0);
        for (size_t lin = 0; lin < o.g.size(); ++lin) {
            int64_t src = 0;
            for (int d = 0; d < nd; ++d) src += idx[d] * ist[dims[d]];
            ai->g[src] += o.g[lin];
            for (int d = nd - 1; d >= 0; --d) {
                if (++idx[d] < o.shape[d]) break;
                idx[d] = 0;
            }
        }
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    HEGS_CHECK(!parts.empty(), "concat of nothing");
    Shape os = parts[0].shape();
    if (axis < 0) axis += static_cast<int>(os.size());
    int64_t total = 0;
    for (const auto& p : parts) {
        HEGS_CHECK(p.ndim() == static_cast<int>(os.size()), "concat rank mismatch");
        for (int d = 0; d < p.ndim(); ++d)
            HEGS_CHECK(d == axis || p.dim(d) == os[d],
                       "concat shape mismatch at dim " << d);
        total += p.dim(axis);
    }
    os[axis] = total;

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= os[d];
    for (size_t d = axis + 1; d < os.size(); ++d) inner *= os[d];

    Tensor out = Tensor::zeros(os);
    double* ov = out.data();
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t len = p.dim(axis) * inner;
        const double* pv = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pv + o * len, pv + (o + 1) * len, ov + o * total * inner + off);
        off += len;
    }
    hegs::detail::make_node(out, parts, [parts, axis, outer, inner, total](TensorImpl& o) {
        int64_t off = 0;
        for (const auto& p : parts) {
            const int64_t len = p.dim(axis) * inner;
            auto pi = p.impl();
            if (pi->requires_grad) {
                pi->ensure_grad();
                for (int64_t ou = 0; ou < outer; ++ou)
                    for (int64_t i = 0; i < len; ++i)
                        pi->g[ou * len + i] += o.g[ou * total * inner + off + i];
            }
            off += len;
        }
    });
    return out;
}

Tensor narrow(const Tensor& a, int axis, int64_t start, int64_t len) {
    Shape os = a.shape();
    if (axis < 0) axis += static_cast<int>(os.size());
    HEGS_CHECK(start >= 0 && start + len <= os[axis],
               "narrow [" << start << "," << start + len << ") out of dim " << os[axis]);
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= os[d];
    for (size_t d = axis + 1; d < os.size(); ++d) inner *= os[d];
    const int64_t full = os[axis];
    os[axis] = len;

    Tensor out = Tensor::zeros(os);
    double* ov = out.data();
    const double* av = a.data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(av + (o * full + start) * inner, av + (o * full + start + len) * inner,
                  ov + o * len * inner);
    hegs::detail::make_node(out, {a}, [a, start, len, outer, inner, full](TensorImpl& o) {
        auto ai = a.impl();
        ai->ensure_grad();
        for (int64_t ou = 0; ou < outer; ++ou)
            for (int64_t i = 0; i < len * inner; ++i)
                ai->g[(ou * full + start) * inner + i] += o.g[ou * len * inner + i];
    });
    return out;
}

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) {
    Shape is = a.shape();
    if (axis < 0) axis += static_cast<int>(is.size());
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= is[d];
    for (size_t d = axis + 1; d < is.size(); ++d) inner *= is[d];
    const int64_t mid = is[axis];

    Shape os;
    for (int d = 0; d < static_cast<int>(is.size()); ++d) {
        if (d == axis) {
            if (keepdim) os.push_back(1);
        } else {
            os.push_back(is[d]);
        }
    }
    if (os.empty()) os.push_back(1);

    Tensor out = Tensor::zeros(os);
    double* ov = out.data();
    const double* av = a.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t m = 0; m < mid; ++m)
            for (int64_t i = 0; i < inner; ++i)
                ov[o * inner + i] += av[(o * mid + m) * inner + i];
    hegs::detail::make_node(out, {a}, [a, outer, mid, inner](TensorImpl& o) {
        auto ai = a.impl();
        ai->ensure_grad();
        for (int64_t ou = 0; ou < outer; ++ou)
            for (int64_t m = 0; m < mid; ++m)
                for (int64_t i = 0; i < inner; ++i)
                    ai->g[(ou * mid + m) * inner + i] += o.g[ou * inner + i];
    });
    return out;
}

Tensor sum_all(const Tensor& a) {
    double s = 0;
    for (double x : a.values()) s += x;
    Tensor out = Tensor::from({1}, {s});
    hegs::detail::make_node(out, {a}, [a](TensorImpl& o) {
        auto ai = a.impl();
        ai->ensure_grad();
        for (auto& g : ai->g) g += o.g[0];
    });
    return out;
}

Tensor mean_all(const Tensor& a) { return mul_scalar(sum_all(a), 1.0 / a.numel()); }

Tensor gather_rows(const Tensor& x, const std::vector<std::vector<int64_t>>& idx) {
    HEGS_CHECK(x.ndim() == 3, "gather_rows expects (B,T,C)");
    const int64_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
    HEGS_CHECK(static_cast<int64_t>(idx.size()) == B, "gather_rows batch mismatch");
    const int64_t K = static_cast<int64_t>(idx[0].size());
    Tensor out = Tensor::zeros({B, K, C});
    double* ov = out.data();
    const double* xv = x.data();
    for (int64_t b = 0; b < B; ++b) {
        HEGS_CHECK(static_cast<int64_t>(idx[b].size()) == K, "ragged gather index");
        for (int64_t k = 0; k < K; ++k) {
            const int64_t t = idx[b][k];
            HEGS_CHECK(t >= 0 && t < T, "gather index " << t << " out of [0," << T << ")");
            std::copy(xv + (b * T + t) * C, xv + (b * T + t + 1) * C, ov + (b * K + k) * C);
        }
    }
    hegs::detail::make_node(out, {x}, [x, idx, T, C, K](TensorImpl& o) {
        auto xi = x.impl();
        xi->ensure_grad();
        const int64_t B = static_cast<int64_t>(idx.size());
        for (int64_t b = 0; b < B; ++b)
            for (int64_t k = 0; k < K; ++k) {
                const int64_t t = idx[b][k];
                for (int64_t c = 0; c < C; ++c)
                    xi->g[(b * T + t) * C + c] += o.g[(b * K + k) * C + c];
            }
    });
    return out;
}

} // namespace hegs::ops
