#pragma once

#include <complex>
#include <vector>

#include "hegs/common.hpp"

namespace hegs::fft {

using cd = std::complex<double>;

// In-place forward/inverse DFT of arbitrary length (radix-2 when the length
// is a power of two, Bluestein otherwise). The inverse includes the 1/N
// factor, so ifft(fft(x)) == x up to rounding.
void fft(std::vector<cd>& a, bool inverse);

// 2-D transforms over a row-major (h, w) plane.
void fft2(std::vector<cd>& plane, int64_t h, int64_t w, bool inverse);

// Convenience: complex spectrum of a real plane.
std::vector<cd> fft2_real(const double* plane, int64_t h, int64_t w);

} // namespace hegs::fft
