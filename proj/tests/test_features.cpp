#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "feature_oracle.hpp"
#include "omoq/errors.hpp"
#include "omoq/features.hpp"
#include "omoq/rng.hpp"

using namespace omoq;

namespace {

AudioClip make_clip(std::vector<float> s, uint32_t rate = 44100) {
    AudioClip c;
    c.samples = std::move(s);
    c.sample_rate = rate;
    c.source_path = "test";
    return c;
}

std::vector<float> sine(double freq, double rate, size_t n, double amp = 0.8) {
    std::vector<float> s(n);
    for (size_t i = 0; i < n; ++i)
        s[i] = static_cast<float>(amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / rate));
    return s;
}

} // namespace

TEST_CASE("stft frame-count formula and shapes") {
    StftConfig cfg;
    const auto clip = make_clip(std::vector<float>(2048 + 1024, 0.1f));
    const auto frames = stft(clip, cfg);
    CHECK(frames.frames == 2);
    CHECK(frames.bins == 1025);
    CHECK_THROWS_AS(stft(make_clip(std::vector<float>(2047, 0.1f)), cfg), Error);
}

TEST_CASE("stft of silence is all-zero") {
    const auto frames = stft(make_clip(std::vector<float>(4096, 0.0f)), {});
    for (const auto& v : frames.data) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("pure sinusoid at a bin-center frequency peaks at that bin") {
    // Hann-windowed DFT of sin(2*pi*k*fs/N): |X[k]| = A*N/4, |X[k +- 1]| = A*N/8.
    StftConfig cfg;
    const size_t k = 100;
    const double rate = 44100.0;
    const double freq = k * rate / 2048.0;
    const double amp = 0.8;
    const auto frames = stft(make_clip(sine(freq, rate, 3 * 2048)), cfg);
    const auto mag = spectra(frames, FeatureKind::magnitude);
    for (size_t t = 0; t < mag.frames; ++t) {
        size_t argmax = 0;
        for (size_t b = 1; b < mag.dim; ++b)
            if (mag.at(t, b) > mag.at(t, argmax)) argmax = b;
        CHECK(argmax == k);
        CHECK(mag.at(t, k) == doctest::Approx(amp * 2048.0 / 4.0).epsilon(1e-4));
        CHECK(mag.at(t, k + 1) == doctest::Approx(amp * 2048.0 / 8.0).epsilon(1e-3));
    }
}

TEST_CASE("spectra arithmetic and kinds") {
    ComplexFrames f;
    f.frames = 1;
    f.bins = 2;
    f.data = {{3.0, 4.0}, {-1.0, 0.0}};
    const auto mag = spectra(f, FeatureKind::magnitude);
    const auto pow = spectra(f, FeatureKind::power);
    const auto ph = spectra(f, FeatureKind::phase);
    const auto both = spectra(f, FeatureKind::mag_phase);
    CHECK(mag.at(0, 0) == doctest::Approx(5.0));
    CHECK(pow.at(0, 0) == doctest::Approx(25.0));
    CHECK(ph.at(0, 0) == doctest::Approx(std::atan2(4.0, 3.0)));
    // principal value is (-pi, pi]: the angle of -1 is +pi, not -pi
    CHECK(ph.at(0, 1) == doctest::Approx(3.14159265358979323846));
    CHECK(both.dim == 4);
    CHECK(both.at(0, 0) == mag.at(0, 0));
    CHECK(both.at(0, 2) == ph.at(0, 0));
}

TEST_CASE("power equals magnitude squared elementwise; concat dim is 2050") {
    const auto frames = stft(make_clip(sine(500.0, 44100.0, 4096)), {});
    const auto mag = spectra(frames, FeatureKind::magnitude);
    const auto pow = spectra(frames, FeatureKind::power);
    for (size_t i = 0; i < mag.data.size(); ++i)
        CHECK(pow.data[i] == doctest::Approx(mag.data[i] * mag.data[i]).epsilon(1e-5));
    CHECK(spectra(frames, FeatureKind::mag_phase).dim == 2050);
}

TEST_CASE("mel filterbank structure") {
    const auto fb = MelFilterbank::build(44100.0, 2048, 128, 0.0, 0.0);
    REQUIRE(fb.n_mels == 128);
    REQUIRE(fb.bins == 1025);
    SUBCASE("rows are nonnegative with positive sums and contiguous support") {
        for (size_t m = 0; m < fb.n_mels; ++m) {
            double sum = 0.0;
            size_t first = fb.bins, last = 0;
            for (size_t b = 0; b < fb.bins; ++b) {
                const double w = fb.weights[m * fb.bins + b];
                CHECK(w >= 0.0);
                sum += w;
                if (w > 0.0) {
                    first = std::min(first, b);
                    last = b;
                }
            }
            CHECK(sum > 0.0);
            for (size_t b = first; b <= last; ++b)
                CHECK(fb.weights[m * fb.bins + b] > 0.0);
        }
    }
    SUBCASE("no coverage gaps between the first and last filter edges") {
        // every interior bin is inside at least one triangle
        for (size_t b = 1; b + 1 < fb.bins; ++b) {
            double total = 0.0;
            for (size_t m = 0; m < fb.n_mels; ++m) total += fb.weights[m * fb.bins + b];
            const double f = b * 44100.0 / 2048.0;
            if (f > 90.0 && f < 22000.0) CHECK(total > 0.0);
        }
    }
    SUBCASE("filter peak frequencies strictly increase") {
        double prev = -1.0;
        for (size_t m = 0; m < fb.n_mels; ++m) {
            size_t peak = 0;
            for (size_t b = 1; b < fb.bins; ++b)
                if (fb.weights[m * fb.bins + b] > fb.weights[m * fb.bins + peak]) peak = b;
            CHECK(static_cast<double>(peak) > prev);
            prev = static_cast<double>(peak);
        }
    }
}

TEST_CASE("orthonormal DCT-II: M * M^T = I within 1e-10") {
    const size_t n = 128;
    const auto m = dct_ii_orthonormal(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i; j < n; ++j) {
            double dot = 0.0;
            for (size_t k = 0; k < n; ++k) dot += m[i * n + k] * m[j * n + k];
            CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
}

TEST_CASE("mfcc shape contract and finiteness on white noise") {
    Rng rng(3);
    std::vector<float> noise(5000);
    for (auto& v : noise) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    FeatureConfig cfg;
    const auto feat = mfcc(make_clip(std::move(noise)), cfg);
    CHECK(feat.dim == 128);
    CHECK(feat.frames == 1 + (5000 - 2048) / 1024);
    for (float v : feat.data) CHECK(std::isfinite(v));
}

TEST_CASE("mfcc matches the straight-line oracle on a pure tone") {
    const auto samples = sine(1000.0, 44100.0, 6000);
    FeatureConfig cfg;
    const auto feat = compute_features(make_clip(samples), FeatureKind::mfcc_d, cfg);

    oracle::MfccParams p;
    const auto ref = oracle::mfcc_with_deltas(samples, p, 1);
    REQUIRE(feat.frames == ref.size());
    REQUIRE(feat.dim == ref[0].size());
    double max_ref = 0.0, max_err = 0.0;
    for (size_t t = 0; t < feat.frames; ++t)
        for (size_t d = 0; d < feat.dim; ++d) {
            max_ref = std::max(max_ref, std::fabs(ref[t][d]));
            max_err = std::max(max_err, std::fabs(feat.at(t, d) - ref[t][d]));
        }
    CHECK(max_err / max_ref < 1e-6);
}

TEST_CASE("deltas: constants vanish, linear ramps give the slope") {
    FeatureMatrix f;
    f.kind = FeatureKind::mfcc;
    f.frames = 20;
    f.dim = 3;
    f.data.resize(60);
    const float slope = 0.37f;
    for (size_t t = 0; t < 20; ++t) {
        f.at(t, 0) = 2.5f;                      // constant
        f.at(t, 1) = slope * static_cast<float>(t); // linear
        f.at(t, 2) = -1.0f;
    }
    const auto out = append_deltas(f, 2);
    CHECK(out.dim == 9);
    CHECK(out.kind == FeatureKind::mfcc_d_dd);
    for (size_t t = 0; t < 20; ++t) {
        CHECK(out.at(t, 3) == doctest::Approx(0.0));   // delta of constant
        CHECK(out.at(t, 5) == doctest::Approx(0.0));
        if (t >= 4 && t + 4 < 20)
            CHECK(out.at(t, 4) == doctest::Approx(slope)); // interior: exact slope
        // second delta needs its own window clear of edge-replicated frames
        if (t >= 8 && t + 8 < 20)
            CHECK(out.at(t, 7) == doctest::Approx(0.0).epsilon(1e-5));
    }
    CHECK(append_deltas(f, 1).dim == 6);
}

TEST_CASE("mfcc_d_dd dimension is 3 * 128") {
    FeatureConfig cfg;
    CHECK(feature_dim(FeatureKind::mfcc_d_dd, cfg) == 384);
    CHECK(feature_dim(FeatureKind::mfcc_d, cfg) == 256);
    CHECK(feature_dim(FeatureKind::magnitude, cfg) == 1025);
}

TEST_CASE("standardize modes") {
    Rng rng(8);
    FeatureMatrix f;
    f.kind = FeatureKind::mfcc;
    f.frames = 50;
    f.dim = 4;
    f.data.resize(200);
    for (size_t t = 0; t < 50; ++t) {
        f.at(t, 0) = static_cast<float>(rng.uniform(2.0, 9.0));
        f.at(t, 1) = static_cast<float>(rng.uniform(-3.0, 1.0));
        f.at(t, 2) = 7.0f; // constant bin
        f.at(t, 3) = static_cast<float>(rng.uniform(0.0, 1.0));
    }
    SUBCASE("mode none is the identity") {
        FeatureStats stats;
        const auto out = standardize(f, stats);
        CHECK(out.data == f.data);
    }
    SUBCASE("overall mode re-centers the stat source to mean 0, std 1") {
        const auto stats = compute_feature_stats({&f}, StandardizeMode::overall);
        const auto out = standardize(f, stats);
        double sum = 0.0, sumsq = 0.0;
        for (float v : out.data) {
            sum += v;
            sumsq += static_cast<double>(v) * v;
        }
        const double mean = sum / 200.0;
        const double var = sumsq / 200.0 - mean * mean;
        CHECK(std::fabs(mean) < 1e-6);
        CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-6);
    }
    SUBCASE("per-bin mode zeroes a constant bin via the sigma floor") {
        const auto stats = compute_feature_stats({&f}, StandardizeMode::per_bin);
        const auto out = standardize(f, stats);
        for (size_t t = 0; t < 50; ++t) CHECK(out.at(t, 2) == 0.0f);
    }
    SUBCASE("stats missing for a non-none mode is an error") {
        FeatureStats stats;
        stats.mode = StandardizeMode::per_bin;
        CHECK_THROWS_AS(standardize(f, stats), Error);
    }
}

TEST_CASE("feature cache file round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "omoq_feat_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "x.feat").string();
    FeatureMatrix f;
    f.kind = FeatureKind::mfcc_d;
    f.frames = 7;
    f.dim = 5;
    f.data.resize(35);
    for (size_t i = 0; i < 35; ++i) f.data[i] = static_cast<float>(i) * 0.25f;
    write_feature_file(path, f, 0xabcdef1234ull, 42);
    uint64_t h = 0;
    int64_t mt = 0;
    const auto g = read_feature_file(path, &h, &mt);
    CHECK(g.kind == f.kind);
    CHECK(g.frames == f.frames);
    CHECK(g.dim == f.dim);
    CHECK(g.data == f.data);
    CHECK(h == 0xabcdef1234ull);
    CHECK(mt == 42);
    std::filesystem::remove_all(dir);
}
