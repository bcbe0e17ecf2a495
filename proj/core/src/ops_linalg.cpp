#include <Eigen/Core>

#include "hegs/ops.hpp"
#include "hegs/parallel.hpp"

namespace hegs::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

// C (m,n) = A (m,k) * B (k,n), all row-major raw buffers
void gemm(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    MapM(c, m, n).noalias() = MapC(a, m, k) * MapC(b, k, n);
}

void gemm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    MapM(c, m, n).noalias() += MapC(a, m, k) * MapC(b, k, n);
}

// C += A^T * B, A (k,m), B (k,n)
void gemm_at_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    MapM(c, m, n).noalias() += MapC(a, k, m).transpose() * MapC(b, k, n);
}

// C += A * B^T, A (m,k), B (n,k)
void gemm_bt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    MapM(c, m, n).noalias() += MapC(a, m, k) * MapC(b, n, k).transpose();
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const int ar = a.ndim(), br = b.ndim();
    HEGS_CHECK((ar == 2 && br == 2) || (ar == 3 && br == 3) || (ar == 3 && br == 2),
               "matmul ranks " << ar << "x" << br << " unsupported");

    const int64_t M = a.dim(ar - 2), K = a.dim(ar - 1);
    const int64_t Kb = b.dim(br - 2), N = b.dim(br - 1);
    HEGS_CHECK(K == Kb, "matmul inner dims " << K << " vs " << Kb);
    const int64_t B = ar == 3 ? a.dim(0) : 1;
    if (ar == 3 && br == 3) HEGS_CHECK(a.dim(0) == b.dim(0), "batched matmul batch mismatch");
    const bool b_batched = (br == 3);

    Shape os = ar == 3 ? Shape{B, M, N} : Shape{M, N};
    Tensor out = Tensor::zeros(os);

    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    parallel_for(B, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            gemm(av + i * M * K, bv + (b_batched ? i * K * N : 0), ov + i * M * N, M, K, N);
    });

    hegs::detail::make_node(out, {a, b}, [a, b, B, M, K, N, b_batched](TensorImpl& o) {
        auto ai = a.impl();
        auto bi = b.impl();
        const double* go = o.g.data();
        if (ai->requires_grad) {
            ai->ensure_grad();
            // dA = dC * B^T; batch entries write disjoint blocks
            parallel_for(B, [&](int64_t lo, int64_t hi) {
                for (int64_t i = lo; i < hi; ++i)
                    gemm_bt_acc(go + i * M * N, bi->v.data() + (b_batched ? i * K * N : 0),
                                ai->g.data() + i * M * K, M, N, K);
            });
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            // dB = A^T * dC
            for (int64_t i = 0; i < B; ++i)
                gemm_at_acc(ai->v.data() + i * M * K, go + i * M * N,
                            bi->g.data() + (b_batched ? i * K * N : 0), K, M, N);
        }
    });
    return out;
}

} // namespace hegs::ops
