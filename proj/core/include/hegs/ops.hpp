#pragma once

#include <vector>

#include "hegs/tensor.hpp"

namespace hegs::ops {

// ---- elementwise (NumPy-style right-aligned broadcasting on binaries) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties route gradient to a
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);       // subgradient 0 at 0
Tensor softplus(const Tensor& a);  // log(1+e^x), overflow-safe
Tensor pow_scalar(const Tensor& a, double p);  // requires a >= 0 for fractional p
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& dims);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor narrow(const Tensor& a, int axis, int64_t start, int64_t len);
Tensor sum_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// Gathers rows along axis 1: x:(B,T,C), idx:(B,K) -> (B,K,C).
Tensor gather_rows(const Tensor& x, const std::vector<std::vector<int64_t>>& idx);

// ---- linear algebra ----
// (M,K)x(K,N); (B,M,K)x(B,K,N); (B,M,K)x(K,N)
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- normalization / attention ----
Tensor softmax_lastdim(const Tensor& a);
Tensor layer_norm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          double eps = 1e-5);
Tensor batch_norm_nchw(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       Tensor& running_mean, Tensor& running_var, bool training,
                       double momentum = 0.1, double eps = 1e-5);

// ---- convolution & pooling (NCHW, OIHW weights) ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
              int groups = 1);
// rectangular-kernel variant with independent vertical/horizontal padding
Tensor conv2d_rect(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad_h,
                   int pad_w, int groups = 1);
Tensor avg_blur3(const Tensor& x);  // 3x3 mean, same size, divisor = valid taps
Tensor global_avg_pool(const Tensor& x);  // (N,C,H,W) -> (N,C)
Tensor upsample_nearest2(const Tensor& x);

// ---- space-to-depth ----
// (N,C,H,W) -> (N,4C,H/2,W/2); channel blocks ordered
// [even-row/even-col, even/odd, odd/even, odd/odd].
Tensor spd_rearrange(const Tensor& x);
Tensor spd_inverse(const Tensor& y);
// Fault-injection hook used by the selftest to prove the invariant suite
// actually detects a broken inverse.
void set_spd_fault_injection(bool enabled);

// ---- frequency domain ----
// y = Re(ifft2(G (.) fft2(x))) per channel. gate:(C,Gh,Gw) is bilinearly
// resized to the full spectrum and symmetrized so y is real for real x.
Tensor freq_gate(const Tensor& x, const Tensor& gate);
// Mean spectral magnitude per channel: (N,C,H,W) -> (N,C).
Tensor freq_mag_mean(const Tensor& x);
// Diagnostic: max |imag| of the complex inverse transform inside freq_gate
// (realness check; ~0 for any gate because of the symmetrization).
double freq_gate_imag_residue(const Tensor& x, const Tensor& gate);

// ---- sampling ----
// feat:(N,C,H,W), coords:(N,S,2) normalized to [0,1] with pixel-center
// convention (u*W - 0.5); border-clamped bilinear. Returns (N,S,C).
Tensor grid_sample_bilinear(const Tensor& feat, const Tensor& coords);
// x:(N,Q,H,M,D) -> (N,Q,H,M,D/heads), head h keeping channel block h.
Tensor take_head_channels(const Tensor& x, int heads);

// ---- internal helpers shared across op implementations ----
namespace detail {
Shape broadcast_shape(const Shape& a, const Shape& b);
// Sums grad over broadcast dimensions so it matches `target` shape.
void reduce_to_shape(const std::vector<double>& grad, const Shape& grad_shape,
                     std::vector<double>& out, const Shape& target);
} // namespace detail

} // namespace hegs::ops

namespace hegs {
inline Tensor operator+(const Tensor& a, const Tensor& b) { return ops::add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return ops::sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return ops::mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return ops::div(a, b); }
} // namespace hegs
