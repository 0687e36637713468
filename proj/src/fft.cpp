#include "omoq/fft.hpp"

#include <cmath>

#include "omoq/errors.hpp"

namespace omoq {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Fft::Fft(size_t n) : n_(n) {
    require(n >= 2 && (n & (n - 1)) == 0, "fft: size must be a power of two >= 2");
    rev_.resize(n);
    size_t log2n = 0;
    while ((size_t(1) << log2n) < n) ++log2n;
    for (size_t i = 0; i < n; ++i) {
        size_t r = 0;
        for (size_t b = 0; b < log2n; ++b)
            if (i & (size_t(1) << b)) r |= size_t(1) << (log2n - 1 - b);
        rev_[i] = r;
    }
    tw_.resize(n / 2);
    for (size_t k = 0; k < n / 2; ++k) {
        const double ang = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
        tw_[k] = {std::cos(ang), std::sin(ang)};
    }
    work_.resize(n);
}

void Fft::forward(std::complex<double>* x) const {
    const size_t n = n_;
    for (size_t i = 0; i < n; ++i) {
        const size_t r = rev_[i];
        if (i < r) std::swap(x[i], x[r]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const size_t half = len >> 1;
        const size_t step = n / len;
        for (size_t start = 0; start < n; start += len) {
            for (size_t k = 0; k < half; ++k) {
                const std::complex<double> w = tw_[k * step];
                const std::complex<double> u = x[start + k];
                const std::complex<double> t = w * x[start + k + half];
                x[start + k] = u + t;
                x[start + k + half] = u - t;
            }
        }
    }
}

void Fft::forward_real(const double* in, std::complex<double>* out_half) const {
    for (size_t i = 0; i < n_; ++i) work_[i] = {in[i], 0.0};
    forward(work_.data());
    for (size_t k = 0; k <= n_ / 2; ++k) out_half[k] = work_[k];
}

} // namespace omoq
