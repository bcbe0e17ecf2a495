#include <cmath>

#include "hegs/ops.hpp"
#include "hegs/parallel.hpp"

namespace hegs::ops {

namespace detail {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (size_t i = 0; i < n; ++i) {
        int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        HEGS_CHECK(da == db || da == 1 || db == 1,
                   "cannot broadcast " << shape_str(a) << " with " << shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides with 0 on broadcast dims, right-aligned against `out`.
static std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
        size_t oi = out.size() - in.size() + i;
        strides[oi] = (in[i] == 1) ? 0 : s;
        s *= in[i];
    }
    return strides;
}

void reduce_to_shape(const std::vector<double>& grad, const Shape& grad_shape,
                     std::vector<double>& out, const Shape& target) {
    if (grad_shape == target) {
        for (size_t i = 0; i < grad.size(); ++i) out[i] += grad[i];
        return;
    }
    auto strides = broadcast_strides(target, grad_shape);
    const int nd = static_cast<int>(grad_shape.size());
    std::vector<int64_t> idx(nd, 0);
    for (size_t lin = 0; lin < grad.size(); ++lin) {
        int64_t off = 0;
        for (int d = 0; d < nd; ++d) off += idx[d] * strides[d];
        out[off] += grad[lin];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[d] < grad_shape[d]) break;
            idx[d] = 0;
        }
    }
}

} // namespace detail

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    const Shape os = detail::broadcast_shape(a.shape(), b.shape());
    Tensor out = Tensor::zeros(os);
    const int64_t n = out.numel();
    double* ov = out.data();

    if (a.shape() == os && b.shape() == os) {
        const double* av = a.data();
        const double* bv = b.data();
        parallel_for(n, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) ov[i] = fwd(av[i], bv[i]);
        });
    } else {
        auto sa = detail::broadcast_strides(a.shape(), os);
        auto sb = detail::broadcast_strides(b.shape(), os);
        const int nd = static_cast<int>(os.size());
        std::vector<int64_t> idx(nd, 0);
        const double* av = a.data();
        const double* bv = b.data();
        for (int64_t lin = 0; lin < n; ++lin) {
            int64_t oa = 0, ob = 0;
            for (int d = 0; d < nd; ++d) {
                oa += idx[d] * sa[d];
                ob += idx[d] * sb[d];
            }
            ov[lin] = fwd(av[oa], bv[ob]);
            for (int d = nd - 1; d >= 0; --d) {
                if (++idx[d] < os[d]) break;
                idx[d] = 0;
            }
        }
    }

    hegs::detail::make_node(out, {a, b}, [a, b, bwd](TensorImpl& o) {
        const Shape& os = o.shape;
        auto sa = detail::broadcast_strides(a.shape(), os);
        auto sb = detail::broadcast_strides(b.shape(), os);
        const int nd = static_cast<int>(os.size());
        std::vector<int64_t> idx(nd, 0);
        auto ai = a.impl();
        auto bi = b.impl();
        if (ai->requires_grad) ai->ensure_grad();
        if (bi->requires_grad) bi->ensure_grad();
        const double* av = ai->v.data();
        const double* bv = bi->v.data();
        for (size_t lin = 0; lin < o.g.size(); ++lin) {
            int64_t oa = 0, ob = 0;
            for (int d = 0; d < nd; ++d) {
                oa += idx[d] * sa[d];
                ob += idx[d] * sb[d];
            }
            double ga, gb;
            bwd(av[oa], bv[ob], o.g[lin], ga, gb);
            if (ai->requires_grad) ai->g[oa] += ga;
            if (bi->requires_grad) bi->g[ob] += gb;
            for (int d = nd - 1; d >= 0; --d) {
                if (++idx[d] < os[d]) break;
                idx[d] = 0;
            }
        }
    });
    return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.numel();
    const double* av = a.data();
    double* ov = out.data();
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) ov[i] = fwd(av[i]);
    });
    hegs::detail::make_node(out, {a}, [a, bwd](TensorImpl& o) {
        auto ai = a.impl();
        ai->ensure_grad();
        const double* av = ai->v.data();
        parallel_for(static_cast<int64_t>(o.g.size()), [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) ai->g[i] += bwd(av[i], o.v[i]) * o.g[i];
        });
    });
    return out;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& ga, double& gb) { ga = g; gb = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& ga, double& gb) { ga = g; gb = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& ga, double& gb) { ga = g * y; gb = g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& ga, double& gb) {
            ga = g / y;
            gb = -g * x / (y * y);
        });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double g, double& ga, double& gb) {
            ga = x <= y ? g : 0.0;
            gb = x <= y ? 0.0 : g;
        });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y, double g, double& ga, double& gb) {
            ga = x >= y ? g : 0.0;
            gb = x >= y ? 0.0 : g;
        });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(
        a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(
        a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    return unary_op(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a,
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / (y > 0 ? y : 1e-300); });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        a,
        [](double x) { return std::log1p(std::exp(-std::fabs(x))) + (x > 0 ? x : 0.0); },
        [](double x, double) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        });
}

Tensor pow_scalar(const Tensor& a, double p) {
    return unary_op(
        a, [p](double x) { return std::pow(x, p); },
        [p](double x, double) { return x == 0.0 ? 0.0 : p * std::pow(x, p - 1.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary_op(
        a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

} // namespace hegs::ops
