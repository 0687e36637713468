#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "omoq/wav.hpp"

namespace omoq {

struct StftConfig {
    size_t frame_length = 2048; // N, power of two
    size_t hop = 1024;          // N/2 by default
    // Periodic Hann window; frames lie fully inside the signal (no padding).
};

enum class FeatureKind : uint32_t {
    magnitude = 0,
    phase = 1,
    power = 2,
    mag_phase = 3, // [|X| ; angle(X)]
    mfcc = 4,
    mfcc_d = 5,    // [MFCC ; D]
    mfcc_d_dd = 6, // [MFCC ; D ; D']
};

const char* feature_kind_name(FeatureKind k);
FeatureKind feature_kind_from_name(const std::string& name);

struct FeatureConfig {
    StftConfig stft;
    size_t n_mfcc = 128;   // mel filters == retained DCT coefficients
    double fmin = 0.0;
    double fmax = 0.0;     // 0 -> sample_rate / 2
    double log_eps = 1e-10;
};

size_t feature_dim(FeatureKind kind, const FeatureConfig& cfg);

// Time-major feature matrix: frames x dim, row-major float32.
struct FeatureMatrix {
    FeatureKind kind = FeatureKind::mfcc;
    size_t frames = 0;
    size_t dim = 0;
    std::vector<float> data;

    float at(size_t t, size_t d) const { return data[t * dim + d]; }
    float& at(size_t t, size_t d) { return data[t * dim + d]; }
};

struct ComplexFrames {
    size_t frames = 0;
    size_t bins = 0; // frame_length/2 + 1
    std::vector<std::complex<double>> data;

    const std::complex<double>* frame(size_t t) const { return data.data() + t * bins; }
};

// Hann-windowed STFT, frame t covering samples [t*hop, t*hop + N).
// L = 1 + floor((len - N) / hop). Throws if the clip is shorter than a frame.
ComplexFrames stft(const AudioClip& clip, const StftConfig& cfg);

// magnitude / phase (principal value in (-pi, pi]) / power / [mag ; phase].
FeatureMatrix spectra(const ComplexFrames& frames, FeatureKind kind);

// Slaney-style mel filterbank: linear below 1 kHz, logarithmic above,
// triangular filters area-normalized by 2 / (f[m+2] - f[m]).
struct MelFilterbank {
    size_t n_mels = 0;
    size_t bins = 0;
    double fmin = 0.0;
    double fmax = 0.0;
    std::vector<double> weights; // n_mels x bins, row-major

    static MelFilterbank build(double sample_rate, size_t n_fft, size_t n_mels,
                               double fmin, double fmax);
};

// Orthonormal DCT-II matrix, n x n row-major (row = output coefficient).
std::vector<double> dct_ii_orthonormal(size_t n);

// power spectrogram -> mel energies -> log(e + eps) -> orthonormal DCT-II.
FeatureMatrix mfcc(const AudioClip& clip, const FeatureConfig& cfg);

// Regression delta over a 9-frame window (t-4 .. t+4), edges replicated:
//   delta_t = sum_{k=1..4} k*(c[t+k] - c[t-k]) / (2 * sum k^2)
// order 1 appends D; order 2 appends D and D' (delta of the deltas).
FeatureMatrix append_deltas(const FeatureMatrix& feat, int order);

// Single entry point used by the cache/training paths.
FeatureMatrix compute_features(const AudioClip& clip, FeatureKind kind, const FeatureConfig& cfg);

enum class StandardizeMode { none, overall, per_bin };

const char* standardize_mode_name(StandardizeMode m);
StandardizeMode standardize_mode_from_name(const std::string& name);

struct FeatureStats {
    StandardizeMode mode = StandardizeMode::none;
    std::vector<double> mean; // size 1 (overall) or dim (per_bin)
    std::vector<double> stdev;
};

// Moments over every frame of the given matrices (training split only).
FeatureStats compute_feature_stats(const std::vector<const FeatureMatrix*>& mats,
                                   StandardizeMode mode);

// (x - mean) / max(std, 1e-8); mode none is the identity.
FeatureMatrix standardize(const FeatureMatrix& feat, const FeatureStats& stats);

// ---- binary feature cache ----
// Blob: magic "OMOQFEAT", u32 version, u32 kind, u32 frames, u32 dim,
//       u64 source_hash, i64 source_mtime, float32 data (little-endian).
void write_feature_file(const std::string& path, const FeatureMatrix& m,
                        uint64_t source_hash, int64_t source_mtime);
FeatureMatrix read_feature_file(const std::string& path,
                                uint64_t* source_hash = nullptr,
                                int64_t* source_mtime = nullptr);

uint64_t fnv1a_file(const std::string& path);
int64_t file_mtime(const std::string& path);

} // namespace omoq
