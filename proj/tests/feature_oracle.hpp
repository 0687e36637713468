#pragma once

// Test-only straight-line reference for the feature pipeline. Every stage is
// spelled out with naive loops (direct DFT summation instead of an FFT) and
// shares no code with src/, so it can serve as an independent oracle.

#include <cstddef>
#include <vector>

namespace oracle {

struct MfccParams {
    double sample_rate = 44100.0;
    size_t frame_length = 2048;
    size_t hop = 1024;
    size_t n_mels = 128;
    double fmin = 0.0;
    double fmax = 0.0; // 0 -> sample_rate / 2
    double log_eps = 1e-10;
};

// frames x (order+1)*n_mels rows: MFCC, then optionally deltas / delta-deltas
// (9-frame regression window, replicated edges). order = 0, 1 or 2.
std::vector<std::vector<double>> mfcc_with_deltas(const std::vector<float>& samples,
                                                  const MfccParams& p, int order);

// frames x (frame_length/2 + 1) Hann-windowed magnitude spectra via direct DFT.
std::vector<std::vector<double>> magnitude_spectra(const std::vector<float>& samples,
                                                   const MfccParams& p);

} // namespace oracle
