#include "feature_oracle.hpp"

#include <cmath>

namespace oracle {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) {
    const double f_sp = 200.0 / 3.0;
    if (hz < 1000.0) return hz / f_sp;
    return 15.0 + std::log(hz / 1000.0) / (std::log(6.4) / 27.0);
}

double mel_to_hz(double mel) {
    const double f_sp = 200.0 / 3.0;
    if (mel < 15.0) return mel * f_sp;
    return 1000.0 * std::exp((std::log(6.4) / 27.0) * (mel - 15.0));
}

} // namespace

std::vector<std::vector<double>> magnitude_spectra(const std::vector<float>& samples,
                                                   const MfccParams& p) {
    const size_t n = p.frame_length;
    const size_t bins = n / 2 + 1;
    const size_t frames = samples.size() < n ? 0 : 1 + (samples.size() - n) / p.hop;

    std::vector<double> window(n);
    for (size_t i = 0; i < n; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));

    std::vector<std::vector<double>> mags(frames, std::vector<double>(bins, 0.0));
    std::vector<double> frame(n);
    for (size_t t = 0; t < frames; ++t) {
        for (size_t i = 0; i < n; ++i)
            frame[i] = static_cast<double>(samples[t * p.hop + i]) * window[i];
        for (size_t k = 0; k < bins; ++k) {
            double re = 0.0, im = 0.0;
            for (size_t i = 0; i < n; ++i) {
                const double ang = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(i) /
                                   static_cast<double>(n);
                re += frame[i] * std::cos(ang);
                im += frame[i] * std::sin(ang);
            }
            mags[t][k] = std::sqrt(re * re + im * im);
        }
    }
    return mags;
}

std::vector<std::vector<double>> mfcc_with_deltas(const std::vector<float>& samples,
                                                  const MfccParams& p, int order) {
    const size_t bins = p.frame_length / 2 + 1;
    const double fmax = p.fmax > 0.0 ? p.fmax : p.sample_rate / 2.0;

    // 1. periodogram (power of the windowed DFT)
    const auto mags = magnitude_spectra(samples, p);
    const size_t frames = mags.size();

    // 2. triangular mel filterbank, linear < 1 kHz, log above, area-normalized
    std::vector<double> hz_points(p.n_mels + 2);
    const double mlo = hz_to_mel(p.fmin), mhi = hz_to_mel(fmax);
    for (size_t m = 0; m < p.n_mels + 2; ++m)
        hz_points[m] =
            mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(m) / static_cast<double>(p.n_mels + 1));

    std::vector<std::vector<double>> fb(p.n_mels, std::vector<double>(bins, 0.0));
    for (size_t m = 0; m < p.n_mels; ++m) {
        const double lo = hz_points[m], mid = hz_points[m + 1], hi = hz_points[m + 2];
        for (size_t b = 0; b < bins; ++b) {
            const double f = static_cast<double>(b) * p.sample_rate / static_cast<double>(p.frame_length);
            double w = 0.0;
            if (f > lo && f < hi) w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
            fb[m][b] = w * 2.0 / (hi - lo);
        }
    }

    // 3. log mel energies, 4. orthonormal DCT-II
    std::vector<std::vector<double>> cepstra(frames, std::vector<double>(p.n_mels, 0.0));
    std::vector<double> loge(p.n_mels);
    for (size_t t = 0; t < frames; ++t) {
        for (size_t m = 0; m < p.n_mels; ++m) {
            double e = 0.0;
            for (size_t b = 0; b < bins; ++b) e += fb[m][b] * mags[t][b] * mags[t][b];
            loge[m] = std::log(e + p.log_eps);
        }
        for (size_t k = 0; k < p.n_mels; ++k) {
            double c = 0.0;
            for (size_t m = 0; m < p.n_mels; ++m)
                c += loge[m] * std::cos(kPi * (2.0 * static_cast<double>(m) + 1.0) *
                                        static_cast<double>(k) / (2.0 * static_cast<double>(p.n_mels)));
            const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(p.n_mels))
                                        : std::sqrt(2.0 / static_cast<double>(p.n_mels));
            cepstra[t][k] = scale * c;
        }
    }

    // 5. regression deltas over t-4 .. t+4, replicated edges
    auto delta_of = [frames](const std::vector<std::vector<double>>& src) {
        const size_t dim = src.empty() ? 0 : src[0].size();
        std::vector<std::vector<double>> out(frames, std::vector<double>(dim, 0.0));
        for (size_t t = 0; t < frames; ++t)
            for (size_t d = 0; d < dim; ++d) {
                double acc = 0.0;
                for (int k = 1; k <= 4; ++k) {
                    const size_t tp = std::min(frames - 1, t + static_cast<size_t>(k));
                    const size_t tm = t >= static_cast<size_t>(k) ? t - static_cast<size_t>(k) : 0;
                    acc += k * (src[tp][d] - src[tm][d]);
                }
                out[t][d] = acc / 60.0;
            }
        return out;
    };

    std::vector<std::vector<double>> result(frames);
    std::vector<std::vector<double>> d1, d2;
    if (order >= 1) d1 = delta_of(cepstra);
    if (order >= 2) d2 = delta_of(d1);
    for (size_t t = 0; t < frames; ++t) {
        result[t] = cepstra[t];
        if (order >= 1) result[t].insert(result[t].end(), d1[t].begin(), d1[t].end());
        if (order >= 2) result[t].insert(result[t].end(), d2[t].begin(), d2[t].end());
    }
    return result;
}

} // namespace oracle
