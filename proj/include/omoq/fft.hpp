#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace omoq {

// Iterative radix-2 FFT of a fixed power-of-two size. Twiddles and the
// bit-reversal permutation are precomputed once per plan; transforms are
// deterministic (no runtime tuning).
class Fft {
public:
    explicit Fft(size_t n);

    size_t size() const { return n_; }

    // In-place complex transform.
    void forward(std::complex<double>* x) const;

    // Real input of length n; writes bins 0..n/2 (n/2+1 values).
    void forward_real(const double* in, std::complex<double>* out_half) const;

private:
    size_t n_;
    std::vector<size_t> rev_;
    std::vector<std::complex<double>> tw_;
    mutable std::vector<std::complex<double>> work_;
};

} // namespace omoq
