#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "omoq/errors.hpp"
#include "omoq/rng.hpp"
#include "omoq/wav.hpp"

using namespace omoq;

namespace {

// Hand-rolled little-endian WAV bytes, independent of the production encoder.
std::vector<uint8_t> raw_wav_pcm16(const std::vector<int16_t>& interleaved, uint16_t channels,
                                   uint32_t rate) {
    std::vector<uint8_t> b;
    auto u16 = [&](uint16_t v) {
        b.push_back(v & 0xff);
        b.push_back(v >> 8);
    };
    auto u32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
    };
    const uint32_t data_len = static_cast<uint32_t>(interleaved.size() * 2);
    b.insert(b.end(), {'R', 'I', 'F', 'F'});
    u32(36 + data_len);
    b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    u32(16);
    u16(1); // PCM
    u16(channels);
    u32(rate);
    u32(rate * channels * 2);
    u16(static_cast<uint16_t>(channels * 2));
    u16(16);
    b.insert(b.end(), {'d', 'a', 't', 'a'});
    u32(data_len);
    for (int16_t s : interleaved) u16(static_cast<uint16_t>(s));
    return b;
}

} // namespace

TEST_CASE("decode: 16-bit full scale and zero mapping") {
    const auto bytes = raw_wav_pcm16({-32768, 0, 16384}, 1, 44100);
    const auto raw = decode_wav_bytes(bytes, "mem");
    REQUIRE(raw.samples.size() == 3);
    CHECK(raw.samples[0] == -1.0f);
    CHECK(raw.samples[1] == 0.0f);
    CHECK(raw.samples[2] == 0.5f);
    CHECK(raw.sample_rate == 44100);
}

TEST_CASE("decode: 3-sample stereo file keeps layout and rate") {
    const auto bytes = raw_wav_pcm16({100, -100, 200, -200, 300, -300}, 2, 48000);
    const auto raw = decode_wav_bytes(bytes, "mem");
    CHECK(raw.channels == 2);
    CHECK(raw.frame_count() == 3);
    CHECK(raw.sample_rate == 48000);
    CHECK(raw.samples[0] == doctest::Approx(100.0 / 32768));
    CHECK(raw.samples[1] == doctest::Approx(-100.0 / 32768));
    CHECK(raw.samples[4] == doctest::Approx(300.0 / 32768));
}

TEST_CASE("decode errors: garbage, zero-length, unsupported codec") {
    CHECK_THROWS_AS(decode_wav_bytes({1, 2, 3}, "mem"), Error);
    CHECK_THROWS_AS(decode_wav("/nonexistent/file.wav"), Error);
    auto empty = raw_wav_pcm16({}, 1, 44100);
    CHECK_THROWS_AS(decode_wav_bytes(empty, "mem"), Error);
    auto alaw = raw_wav_pcm16({1, 2, 3}, 1, 44100);
    alaw[20] = 6; // format tag = A-law
    CHECK_THROWS_AS(decode_wav_bytes(alaw, "mem"), Error);
}

TEST_CASE("decode -> encode -> decode is bit-exact for PCM-16") {
    Rng rng(77);
    std::vector<int16_t> src(500);
    for (auto& s : src)
        s = static_cast<int16_t>(static_cast<int>(rng.uniform_index(65536)) - 32768);
    const auto original = raw_wav_pcm16(src, 1, 44100);
    const auto raw = decode_wav_bytes(original, "mem");
    const auto re = encode_wav_pcm16_bytes(raw.samples, raw.sample_rate);
    const auto raw2 = decode_wav_bytes(re, "mem");
    CHECK(raw.samples == raw2.samples);
}

TEST_CASE("downmix_and_normalize examples") {
    SUBCASE("mono rescale") {
        RawAudio r;
        r.channels = 1;
        r.sample_rate = 44100;
        r.samples = {0.5f, -0.25f};
        const auto clip = downmix_and_normalize(r);
        CHECK(clip.samples[0] == doctest::Approx(1.0));
        CHECK(clip.samples[1] == doctest::Approx(-0.5));
    }
    SUBCASE("stereo sums then normalizes") {
        RawAudio r;
        r.channels = 2;
        r.sample_rate = 44100;
        r.samples = {0.3f, 0.3f, -0.6f, 0.0f};
        const auto clip = downmix_and_normalize(r);
        REQUIRE(clip.samples.size() == 2);
        CHECK(clip.samples[0] == doctest::Approx(1.0));
        CHECK(clip.samples[1] == doctest::Approx(-1.0));
    }
    SUBCASE("random stereo clip peaks at exactly 1") {
        Rng rng(5);
        RawAudio r;
        r.channels = 2;
        r.sample_rate = 44100;
        r.samples.resize(2000);
        for (auto& s : r.samples) s = static_cast<float>(rng.uniform(-0.7, 0.7));
        const auto clip = downmix_and_normalize(r);
        float peak = 0;
        for (float s : clip.samples) peak = std::max(peak, std::abs(s));
        CHECK(peak == 1.0f);
    }
    SUBCASE("all-zero input rejected") {
        RawAudio r;
        r.channels = 1;
        r.sample_rate = 44100;
        r.samples = {0.0f, 0.0f, 0.0f};
        CHECK_THROWS_AS(downmix_and_normalize(r), Error);
    }
    SUBCASE("downmix of mono equals normalization of that signal") {
        Rng rng(6);
        RawAudio r;
        r.channels = 1;
        r.sample_rate = 44100;
        r.samples.resize(512);
        for (auto& s : r.samples) s = static_cast<float>(rng.uniform(-0.4, 0.4));
        const auto clip = downmix_and_normalize(r);
        float peak = 0;
        for (float s : r.samples) peak = std::max(peak, std::abs(s));
        for (size_t i = 0; i < r.samples.size(); ++i)
            CHECK(clip.samples[i] == doctest::Approx(r.samples[i] / peak));
    }
}

TEST_CASE("trim_silence examples") {
    auto make_clip = [](std::vector<float> s) {
        AudioClip c;
        c.samples = std::move(s);
        c.source_path = "test";
        return c;
    };
    // Exhaustive window scan: the trimmed range spans the first qualifying
    // window's start through the last qualifying window's final sample.
    auto scan_expected = [](const std::vector<float>& s, float thr = 0.0061f) {
        const size_t w = 4;
        std::vector<size_t> hits;
        for (size_t i = 0; i + w <= s.size(); ++i) {
            float sum = 0;
            for (size_t j = 0; j < w; ++j) sum += s[i + j];
            if (std::fabs(sum) > thr) hits.push_back(i);
        }
        REQUIRE(!hits.empty());
        return std::vector<float>(s.begin() + static_cast<ptrdiff_t>(hits.front()),
                                  s.begin() + static_cast<ptrdiff_t>(hits.back() + w));
    };
    SUBCASE("silent padding trimmed to the scan-derived range") {
        // Quiet lead/tail that no window can lift over the threshold alone;
        // the first qualifying window starts inside the ramp.
        std::vector<float> s(10, 0.0f);
        s.insert(s.end(), {0.005f, 0.005f, 0.005f, 0.005f});
        s.insert(s.end(), 10, 0.0f);
        const auto out = trim_silence(make_clip(s));
        CHECK(out.samples == scan_expected(s));
        CHECK(out.samples.size() < s.size()); // trimming actually happened
    }
    SUBCASE("every window of a one-spike signal qualifies, so nothing is cut") {
        const std::vector<float> s{0, 0, 0, 0.01f, 0.01f, 0.01f, 0.01f, 0, 0, 0};
        const auto out = trim_silence(make_clip(s));
        CHECK(out.samples == scan_expected(s));
    }
    SUBCASE("loud clip returned unchanged") {
        const std::vector<float> loud{0.5f, 0.5f, 0.5f, 0.5f, 0.1f, 0.5f, 0.5f, 0.5f, 0.5f};
        const auto out = trim_silence(make_clip(loud));
        CHECK(out.samples == loud);
    }
    SUBCASE("uniformly tiny signal is entirely silent (0.004 < 0.0061)") {
        CHECK_THROWS_AS(trim_silence(make_clip(std::vector<float>(100, 0.001f))), Error);
    }
    SUBCASE("idempotent and contiguous on random padded clips") {
        Rng rng(9);
        for (int iter = 0; iter < 25; ++iter) {
            std::vector<float> s(rng.uniform_index(200) + 50, 0.0f);
            const size_t lead = rng.uniform_index(20);
            const size_t tail = rng.uniform_index(20);
            for (size_t i = lead; i + tail < s.size(); ++i)
                s[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
            AudioClip clip = make_clip(s);
            AudioClip once;
            try {
                once = trim_silence(clip);
            } catch (const Error&) {
                continue; // drew an all-quiet signal
            }
            const auto twice = trim_silence(once);
            CHECK(once.samples == twice.samples);
            // contiguous subsequence of the input
            auto it = std::search(s.begin(), s.end(), once.samples.begin(), once.samples.end());
            CHECK(it != s.end());
        }
    }
    SUBCASE("sum-of-absolute-values rule is switchable") {
        TrimConfig cfg;
        cfg.rule = SilenceRule::window_abs_sum;
        // alternating signs: raw sum cancels, absolute sum does not
        const std::vector<float> alt{0.01f, -0.01f, 0.01f, -0.01f};
        const auto out = trim_silence(make_clip(alt), cfg);
        CHECK(out.samples == alt);
        CHECK_THROWS_AS(trim_silence(make_clip(alt)), Error); // default rule: cancelled
    }
}

TEST_CASE("encode/decode file round trip via temporary file") {
    const auto dir = std::filesystem::temp_directory_path() / "omoq_wav_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "tone.wav").string();
    std::vector<float> tone(4410);
    for (size_t i = 0; i < tone.size(); ++i)
        tone[i] = 0.5f * std::sin(2.0 * 3.14159265358979 * 440.0 * i / 44100.0);
    encode_wav_pcm16(path, tone, 44100);
    const auto raw = decode_wav(path);
    CHECK(raw.channels == 1);
    CHECK(raw.sample_rate == 44100);
    CHECK(raw.samples.size() == tone.size());
    std::filesystem::remove_all(dir);
}
