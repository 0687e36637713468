#include "omoq/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "omoq/errors.hpp"
#include "omoq/fft.hpp"

namespace omoq {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    constexpr double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (hz < min_log_hz) return hz / f_sp;
    return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    constexpr double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (mel < min_log_mel) return mel * f_sp;
    return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

std::vector<double> hann_periodic(size_t n) {
    std::vector<double> w(n);
    for (size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

} // namespace

const char* feature_kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::magnitude: return "mag";
        case FeatureKind::phase: return "phase";
        case FeatureKind::power: return "power";
        case FeatureKind::mag_phase: return "mag_phase";
        case FeatureKind::mfcc: return "mfcc";
        case FeatureKind::mfcc_d: return "mfcc_d";
        case FeatureKind::mfcc_d_dd: return "mfcc_d_dd";
    }
    return "?";
}

FeatureKind feature_kind_from_name(const std::string& name) {
    for (auto k : {FeatureKind::magnitude, FeatureKind::phase, FeatureKind::power,
                   FeatureKind::mag_phase, FeatureKind::mfcc, FeatureKind::mfcc_d,
                   FeatureKind::mfcc_d_dd}) {
        if (name == feature_kind_name(k)) return k;
    }
    fail("features: unknown kind '" + name +
         "' (mag|phase|power|mag_phase|mfcc|mfcc_d|mfcc_d_dd)");
}

size_t feature_dim(FeatureKind kind, const FeatureConfig& cfg) {
    const size_t bins = cfg.stft.frame_length / 2 + 1;
    switch (kind) {
        case FeatureKind::magnitude:
        case FeatureKind::phase:
        case FeatureKind::power: return bins;
        case FeatureKind::mag_phase: return 2 * bins;
        case FeatureKind::mfcc: return cfg.n_mfcc;
        case FeatureKind::mfcc_d: return 2 * cfg.n_mfcc;
        case FeatureKind::mfcc_d_dd: return 3 * cfg.n_mfcc;
    }
    return 0;
}

ComplexFrames stft(const AudioClip& clip, const StftConfig& cfg) {
    const size_t n = cfg.frame_length;
    require(cfg.hop >= 1 && cfg.hop <= n, "stft: hop must be in [1, frame_length]");
    require((n & (n - 1)) == 0, "stft: frame_length must be a power of two");
    const size_t len = clip.samples.size();
    if (len < n)
        fail("stft: " + clip.source_path + ": clip shorter than one frame (" +
             std::to_string(len) + " < " + std::to_string(n) + " samples)");

    const size_t frames = 1 + (len - n) / cfg.hop;
    const size_t bins = n / 2 + 1;
    const auto window = hann_periodic(n);
    Fft fft(n);

    ComplexFrames out;
    out.frames = frames;
    out.bins = bins;
    out.data.resize(frames * bins);

    std::vector<double> buf(n);
    for (size_t t = 0; t < frames; ++t) {
        const size_t start = t * cfg.hop;
        for (size_t i = 0; i < n; ++i)
            buf[i] = static_cast<double>(clip.samples[start + i]) * window[i];
        fft.forward_real(buf.data(), out.data.data() + t * bins);
    }
    return out;
}

FeatureMatrix spectra(const ComplexFrames& frames, FeatureKind kind) {
    require(frames.frames >= 1 && frames.bins >= 1, "spectra: empty input");
    const bool concat = kind == FeatureKind::mag_phase;
    require(kind == FeatureKind::magnitude || kind == FeatureKind::phase ||
                kind == FeatureKind::power || concat,
            "spectra: kind must be a spectral kind");

    FeatureMatrix out;
    out.kind = kind;
    out.frames = frames.frames;
    out.dim = concat ? 2 * frames.bins : frames.bins;
    out.data.resize(out.frames * out.dim);

    auto phase_principal = [](const std::complex<double>& v) {
        double p = std::atan2(v.imag(), v.real());
        if (p <= -kPi) p += 2.0 * kPi; // principal value in (-pi, pi]
        return p;
    };

    for (size_t t = 0; t < frames.frames; ++t) {
        const auto* src = frames.frame(t);
        float* dst = out.data.data() + t * out.dim;
        for (size_t b = 0; b < frames.bins; ++b) {
            const double mag = std::abs(src[b]);
            switch (kind) {
                case FeatureKind::magnitude: dst[b] = static_cast<float>(mag); break;
                case FeatureKind::phase: dst[b] = static_cast<float>(phase_principal(src[b])); break;
                case FeatureKind::power: dst[b] = static_cast<float>(mag * mag); break;
                default:
                    dst[b] = static_cast<float>(mag);
                    dst[frames.bins + b] = static_cast<float>(phase_principal(src[b]));
                    break;
            }
        }
    }
    return out;
}

MelFilterbank MelFilterbank::build(double sample_rate, size_t n_fft, size_t n_mels,
                                   double fmin, double fmax) {
    require(n_mels >= 1, "mel: need at least one filter");
    if (fmax <= 0.0) fmax = sample_rate / 2.0;
    require(fmin >= 0.0 && fmin < fmax, "mel: need 0 <= fmin < fmax");

    MelFilterbank fb;
    fb.n_mels = n_mels;
    fb.bins = n_fft / 2 + 1;
    fb.fmin = fmin;
    fb.fmax = fmax;
    fb.weights.assign(n_mels * fb.bins, 0.0);

    // n_mels + 2 points uniformly spaced on the mel scale.
    std::vector<double> hz(n_mels + 2);
    const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
    for (size_t m = 0; m < n_mels + 2; ++m)
        hz[m] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(m) / static_cast<double>(n_mels + 1));

    for (size_t m = 0; m < n_mels; ++m) {
        const double lo = hz[m], mid = hz[m + 1], hi = hz[m + 2];
        const double enorm = 2.0 / (hi - lo); // area normalization
        for (size_t b = 0; b < fb.bins; ++b) {
            const double f = static_cast<double>(b) * sample_rate / static_cast<double>(n_fft);
            const double up = (f - lo) / (mid - lo);
            const double down = (hi - f) / (hi - mid);
            const double w = std::max(0.0, std::min(up, down));
            fb.weights[m * fb.bins + b] = w * enorm;
        }
    }
    return fb;
}

std::vector<double> dct_ii_orthonormal(size_t n) {
    std::vector<double> m(n * n);
    const double s0 = std::sqrt(1.0 / static_cast<double>(n));
    const double sk = std::sqrt(2.0 / static_cast<double>(n));
    for (size_t k = 0; k < n; ++k) {
        const double scale = k == 0 ? s0 : sk;
        for (size_t i = 0; i < n; ++i)
            m[k * n + i] = scale * std::cos(kPi * (2.0 * static_cast<double>(i) + 1.0) *
                                            static_cast<double>(k) / (2.0 * static_cast<double>(n)));
    }
    return m;
}

FeatureMatrix mfcc(const AudioClip& clip, const FeatureConfig& cfg) {
    const auto frames = stft(clip, cfg.stft);
    const auto fb = MelFilterbank::build(clip.sample_rate, cfg.stft.frame_length, cfg.n_mfcc,
                                         cfg.fmin, cfg.fmax);
    const auto dct = dct_ii_orthonormal(cfg.n_mfcc);

    FeatureMatrix out;
    out.kind = FeatureKind::mfcc;
    out.frames = frames.frames;
    out.dim = cfg.n_mfcc;
    out.data.resize(out.frames * out.dim);

    std::vector<double> power(frames.bins), loge(cfg.n_mfcc);
    for (size_t t = 0; t < frames.frames; ++t) {
        const auto* src = frames.frame(t);
        for (size_t b = 0; b < frames.bins; ++b) power[b] = std::norm(src[b]);
        for (size_t m = 0; m < cfg.n_mfcc; ++m) {
            const double* w = fb.weights.data() + m * frames.bins;
            double e = 0.0;
            for (size_t b = 0; b < frames.bins; ++b) e += w[b] * power[b];
            loge[m] = std::log(e + cfg.log_eps);
        }
        float* dst = out.data.data() + t * out.dim;
        for (size_t k = 0; k < cfg.n_mfcc; ++k) {
            const double* row = dct.data() + k * cfg.n_mfcc;
            double c = 0.0;
            for (size_t m = 0; m < cfg.n_mfcc; ++m) c += row[m] * loge[m];
            dst[k] = static_cast<float>(c);
        }
    }
    return out;
}

namespace {

// One delta pass over a frames x dim block; edges replicate the first/last frame.
void delta_pass(const float* src, size_t frames, size_t dim, float* dst) {
    constexpr int kHalf = 4;
    constexpr double kDenom = 60.0; // 2 * (1+4+9+16)
    for (size_t t = 0; t < frames; ++t) {
        for (size_t d = 0; d < dim; ++d) {
            double acc = 0.0;
            for (int k = 1; k <= kHalf; ++k) {
                const size_t tp = std::min(frames - 1, t + static_cast<size_t>(k));
                const size_t tm = t >= static_cast<size_t>(k) ? t - static_cast<size_t>(k) : 0;
                acc += k * (static_cast<double>(src[tp * dim + d]) -
                            static_cast<double>(src[tm * dim + d]));
            }
            dst[t * dim + d] = static_cast<float>(acc / kDenom);
        }
    }
}

} // namespace

FeatureMatrix append_deltas(const FeatureMatrix& feat, int order) {
    require(order == 1 || order == 2, "deltas: order must be 1 or 2");
    require(feat.frames >= 1, "deltas: empty feature matrix");
    const size_t base = feat.dim;
    const size_t blocks = static_cast<size_t>(order) + 1;

    FeatureMatrix out;
    out.kind = order == 1 ? FeatureKind::mfcc_d : FeatureKind::mfcc_d_dd;
    out.frames = feat.frames;
    out.dim = blocks * base;
    out.data.resize(out.frames * out.dim);

    std::vector<float> d1(feat.frames * base), d2;
    delta_pass(feat.data.data(), feat.frames, base, d1.data());
    if (order == 2) {
        d2.resize(feat.frames * base);
        delta_pass(d1.data(), feat.frames, base, d2.data());
    }
    for (size_t t = 0; t < feat.frames; ++t) {
        float* dst = out.data.data() + t * out.dim;
        std::memcpy(dst, feat.data.data() + t * base, base * sizeof(float));
        std::memcpy(dst + base, d1.data() + t * base, base * sizeof(float));
        if (order == 2) std::memcpy(dst + 2 * base, d2.data() + t * base, base * sizeof(float));
    }
    return out;
}

FeatureMatrix compute_features(const AudioClip& clip, FeatureKind kind, const FeatureConfig& cfg) {
    switch (kind) {
        case FeatureKind::magnitude:
        case FeatureKind::phase:
        case FeatureKind::power:
        case FeatureKind::mag_phase: return spectra(stft(clip, cfg.stft), kind);
        case FeatureKind::mfcc: return mfcc(clip, cfg);
        case FeatureKind::mfcc_d: return append_deltas(mfcc(clip, cfg), 1);
        case FeatureKind::mfcc_d_dd: return append_deltas(mfcc(clip, cfg), 2);
    }
    fail("features: bad kind");
}

const char* standardize_mode_name(StandardizeMode m) {
    switch (m) {
        case StandardizeMode::none: return "none";
        case StandardizeMode::overall: return "overall";
        case StandardizeMode::per_bin: return "per_bin";
    }
    return "?";
}

StandardizeMode standardize_mode_from_name(const std::string& name) {
    if (name == "none") return StandardizeMode::none;
    if (name == "overall") return StandardizeMode::overall;
    if (name == "per_bin") return StandardizeMode::per_bin;
    fail("features: unknown standardize mode '" + name + "' (none|overall|per_bin)");
}

FeatureStats compute_feature_stats(const std::vector<const FeatureMatrix*>& mats,
                                   StandardizeMode mode) {
    FeatureStats stats;
    stats.mode = mode;
    if (mode == StandardizeMode::none) return stats;
    require(!mats.empty(), "standardize: no matrices to compute stats from");
    const size_t dim = mats[0]->dim;
    for (const auto* m : mats)
        require(m->dim == dim, "standardize: inconsistent feature dims across files");

    const size_t cols = mode == StandardizeMode::overall ? 1 : dim;
    std::vector<double> sum(cols, 0.0), sumsq(cols, 0.0);
    uint64_t frames = 0;
    for (const auto* m : mats) {
        frames += m->frames;
        for (size_t t = 0; t < m->frames; ++t) {
            const float* row = m->data.data() + t * dim;
            for (size_t d = 0; d < dim; ++d) {
                const size_t c = mode == StandardizeMode::overall ? 0 : d;
                sum[c] += row[d];
                sumsq[c] += static_cast<double>(row[d]) * row[d];
            }
        }
    }
    require(frames > 0, "standardize: zero frames in stat source");
    const double denom = mode == StandardizeMode::overall
                             ? static_cast<double>(frames) * static_cast<double>(dim)
                             : static_cast<double>(frames);
    stats.mean.resize(cols);
    stats.stdev.resize(cols);
    for (size_t c = 0; c < cols; ++c) {
        stats.mean[c] = sum[c] / denom;
        const double var = std::max(0.0, sumsq[c] / denom - stats.mean[c] * stats.mean[c]);
        stats.stdev[c] = std::sqrt(var);
    }
    return stats;
}

FeatureMatrix standardize(const FeatureMatrix& feat, const FeatureStats& stats) {
    if (stats.mode == StandardizeMode::none) return feat;
    require(!stats.mean.empty(), "standardize: stats missing for mode " +
                                     std::string(standardize_mode_name(stats.mode)));
    if (stats.mode == StandardizeMode::per_bin)
        require(stats.mean.size() == feat.dim, "standardize: stats dim mismatch");

    FeatureMatrix out = feat;
    for (size_t t = 0; t < feat.frames; ++t) {
        float* row = out.data.data() + t * feat.dim;
        for (size_t d = 0; d < feat.dim; ++d) {
            const size_t c = stats.mode == StandardizeMode::overall ? 0 : d;
            const double sd = std::max(stats.stdev[c], 1e-8);
            row[d] = static_cast<float>((row[d] - stats.mean[c]) / sd);
        }
    }
    return out;
}

namespace {
constexpr char kFeatMagic[8] = {'O', 'M', 'O', 'Q', 'F', 'E', 'A', 'T'};
constexpr uint32_t kFeatVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) fail("features: truncated cache file " + path);
    return v;
}
} // namespace

void write_feature_file(const std::string& path, const FeatureMatrix& m,
                        uint64_t source_hash, int64_t source_mtime) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("features: cannot write " + path);
    out.write(kFeatMagic, 8);
    write_pod(out, kFeatVersion);
    write_pod(out, static_cast<uint32_t>(m.kind));
    write_pod(out, static_cast<uint32_t>(m.frames));
    write_pod(out, static_cast<uint32_t>(m.dim));
    write_pod(out, source_hash);
    write_pod(out, source_mtime);
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (!out) fail("features: short write to " + path);
}

FeatureMatrix read_feature_file(const std::string& path, uint64_t* source_hash,
                                int64_t* source_mtime) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("features: cannot open cache file " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kFeatMagic, 8) != 0)
        fail("features: " + path + " is not a feature cache file");
    const auto version = read_pod<uint32_t>(in, path);
    if (version != kFeatVersion)
        fail("features: " + path + ": unsupported cache version " + std::to_string(version));
    FeatureMatrix m;
    m.kind = static_cast<FeatureKind>(read_pod<uint32_t>(in, path));
    m.frames = read_pod<uint32_t>(in, path);
    m.dim = read_pod<uint32_t>(in, path);
    const auto hash = read_pod<uint64_t>(in, path);
    const auto mtime = read_pod<int64_t>(in, path);
    if (source_hash) *source_hash = hash;
    if (source_mtime) *source_mtime = mtime;
    m.data.resize(m.frames * m.dim);
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (!in) fail("features: truncated cache file " + path);
    return m;
}

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("features: cannot open " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<uint8_t>(buf[i]);
            h *= 1099511628211ull;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

int64_t file_mtime(const std::string& path) {
    std::error_code ec;
    const auto t = std::filesystem::last_write_time(path, ec);
    if (ec) fail("features: cannot stat " + path);
    return static_cast<int64_t>(t.time_since_epoch().count());
}

} // namespace omoq
