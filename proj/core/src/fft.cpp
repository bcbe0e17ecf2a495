#include "hegs/fft.hpp"

#include <cmath>

namespace hegs::fft {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(size_t n) { return n && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative Cooley-Tukey, n must be a power of two.
void fft_pow2(std::vector<cd>& a, bool inverse) {
    const size_t n = a.size();
    if (n <= 1) return;
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? kTwoPi : -kTwoPi) / static_cast<double>(len);
        const cd wn(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                cd u = a[i + k];
                cd v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wn;
            }
        }
    }
}

// Bluestein's chirp-z trick for arbitrary n, expressed as a circular
// convolution of power-of-two length >= 2n-1.
void fft_bluestein(std::vector<cd>& a, bool inverse) {
    const size_t n = a.size();
    const size_t m = next_pow2(2 * n - 1);
    const double sign = inverse ? 1.0 : -1.0;

    std::vector<cd> chirp(n);
    for (size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for large k
        const uint64_t k2 = (static_cast<uint64_t>(k) * k) % (2 * n);
        const double ang = sign * kTwoPi * static_cast<double>(k2) / (2.0 * static_cast<double>(n));
        chirp[k] = cd(std::cos(ang), std::sin(ang));
    }

    std::vector<cd> x(m, cd(0, 0)), y(m, cd(0, 0));
    for (size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    for (size_t k = 0; k < n; ++k) {
        y[k] = std::conj(chirp[k]);
        if (k > 0) y[m - k] = std::conj(chirp[k]);
    }
    fft_pow2(x, false);
    fft_pow2(y, false);
    for (size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_pow2(x, true);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (size_t k = 0; k < n; ++k) a[k] = x[k] * inv_m * chirp[k];
}

} // namespace

void fft(std::vector<cd>& a, bool inverse) {
    const size_t n = a.size();
    if (n <= 1) return;
    if (is_pow2(n)) {
        fft_pow2(a, inverse);
    } else {
        fft_bluestein(a, inverse);
    }
    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (auto& v : a) v *= inv_n;
    }
}

void fft2(std::vector<cd>& plane, int64_t h, int64_t w, bool inverse) {
    HEGS_CHECK(static_cast<int64_t>(plane.size()) == h * w, "fft2 plane size mismatch");
    std::vector<cd> tmp;
    tmp.resize(static_cast<size_t>(std::max(h, w)));
    for (int64_t r = 0; r < h; ++r) {
        tmp.assign(plane.begin() + r * w, plane.begin() + (r + 1) * w);
        fft(tmp, inverse);
        std::copy(tmp.begin(), tmp.end(), plane.begin() + r * w);
    }
    for (int64_t c = 0; c < w; ++c) {
        tmp.resize(static_cast<size_t>(h));
        for (int64_t r = 0; r < h; ++r) tmp[r] = plane[r * w + c];
        fft(tmp, inverse);
        for (int64_t r = 0; r < h; ++r) plane[r * w + c] = tmp[r];
    }
}

std::vector<cd> fft2_real(const double* plane, int64_t h, int64_t w) {
    std::vector<cd> out(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h * w; ++i) out[i] = cd(plane[i], 0.0);
    fft2(out, h, w, false);
    return out;
}

} // namespace hegs::fft
