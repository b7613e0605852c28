#include <cmath>
#include <numbers>

#include "doctest.h"
#include "igsgenre/dsp.hpp"
#include "igsgenre/error.hpp"
#include "igsgenre/rng.hpp"
#include "oracles.hpp"

using namespace igsgenre;
using namespace igsgenre::dsp;

namespace {

audio_io::AudioClip make_clip(std::vector<double> samples, int rate = 16000) {
  audio_io::AudioClip c;
  c.sample_rate = rate;
  c.samples = std::move(samples);
  return c;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = std::clamp(rng.normal(0.0, amp), -1.0, 1.0);
  return x;
}

SpectralFrame spectrum_of(std::vector<double> mags, double bin_hz) { return {std::move(mags), bin_hz}; }

}  // namespace

TEST_CASE("framing") {
  const auto l = frame_layout(16000, 16000);
  CHECK(l.length == 400);
  CHECK(l.hop == 160);
  CHECK(l.count == 98);
  CHECK(frame_layout(400, 16000).count == 1);
  CHECK_THROWS_AS(frame_layout(399, 16000), TooShortError);
  CHECK(frame_layout(8000, 8000).length == 200);

  const auto frames = frame_signal(make_clip(noise(1000, 1)));
  REQUIRE(frames.size() == 4);
  CHECK(frames[2].size() == 400);
}

TEST_CASE("hamming") {
  const auto w = hamming_coefficients(401);
  CHECK(w[0] == doctest::Approx(0.08).epsilon(1e-15));
  CHECK(w[200] == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> ones(400, 1.0);
  CHECK(hamming_window(ones) == hamming_coefficients(400));
}

TEST_CASE("power spectrum") {
  SUBCASE("zero frame") {
    const auto s = power_spectrum(std::vector<double>(400, 0.0), 512, 16000);
    CHECK(s.bins() == 257);
    CHECK(s.bin_hz == 16000.0 / 512.0);
    for (double m : s.magnitudes) CHECK(m == 0.0);
  }
  SUBCASE("cosine on a bin") {
    std::vector<double> x(512);
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::cos(2.0 * std::numbers::pi * 37.0 * n / 512.0);
    const auto s = power_spectrum(x, 512, 16000);
    const auto peak = std::max_element(s.magnitudes.begin(), s.magnitudes.end()) - s.magnitudes.begin();
    CHECK(peak == 37);
  }
  SUBCASE("matches direct DFT and Parseval") {
    const auto x = noise(400, 5);
    const auto s = power_spectrum(x, 512, 16000);
    const auto ref = oracle::dft_magnitudes(x, 512);
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(std::abs(s.magnitudes[k] - ref[k]) < 1e-9);
    double energy = 0.0, spec = 0.0;
    for (double v : x) energy += v * v;
    for (std::size_t k = 0; k < s.bins(); ++k)
      spec += (k == 0 || k == 256 ? 1.0 : 2.0) * s.magnitudes[k] * s.magnitudes[k];
    CHECK(spec == doctest::Approx(512.0 * energy).epsilon(1e-12));
  }
  SUBCASE("bad sizes") {
    CHECK_THROWS_AS(power_spectrum(std::vector<double>(400, 0.0), 256, 16000), ConfigError);
    CHECK_THROWS_AS(power_spectrum(std::vector<double>(400, 0.0), 500, 16000), ConfigError);
  }
}

TEST_CASE("dct and mfcc") {
  SUBCASE("constant log energies") {
    const double c = 1.75;
    const auto out = dct_ii_orthonormal(std::vector<double>(26, c), 13);
    CHECK(out[0] == doctest::Approx(c * std::sqrt(26.0)));
    for (std::size_t k = 1; k < 13; ++k) CHECK(std::abs(out[k]) < 1e-12);
  }
  SUBCASE("random vector against direct summation") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(26);
      for (double& v : x) v = rng.normal(0.0, 5.0);
      const auto got = dct_ii_orthonormal(x, 13);
      const auto ref = oracle::dct2_orthonormal(x, 13);
      for (std::size_t k = 0; k < 13; ++k) CHECK(std::abs(got[k] - ref[k]) < 1e-9);
    }
  }
  SUBCASE("silence uses the log floor") {
    const auto out = mfcc(spectrum_of(std::vector<double>(257, 0.0), 31.25));
    REQUIRE(out.size() == 13);
    CHECK(out[0] == doctest::Approx(std::log(1e-10) * std::sqrt(26.0)));
    for (std::size_t k = 1; k < 13; ++k) CHECK(std::abs(out[k]) < 1e-9);
  }
  SUBCASE("first index switch") {
    const auto s = power_spectrum(hamming_window(noise(400, 3)), 512, 16000);
    const auto from0 = mfcc(s, 26, 14, 0);
    const auto from1 = mfcc(s, 26, 13, 1);
    for (std::size_t k = 0; k < 13; ++k) CHECK(from1[k] == from0[k + 1]);
  }
}

TEST_CASE("zero crossing rate") {
  CHECK(zero_crossing_rate(std::vector<double>(50, 0.3)) == 0.0);
  std::vector<double> alt(64);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? -1.0 : 1.0;
  CHECK(zero_crossing_rate(alt) == 1.0);
  CHECK(zero_crossing_rate(std::vector<double>{0.0, -0.0, 0.0}) == 0.0);

  // Direct scans of 400 samples at 16 kHz: the sine starts on an exact zero
  // and crosses 4 times; the cosine crosses 5 times.
  std::vector<double> sine(400), cosine(400);
  for (std::size_t n = 0; n < 400; ++n) {
    sine[n] = std::sin(2.0 * std::numbers::pi * 100.0 * n / 16000.0);
    cosine[n] = std::cos(2.0 * std::numbers::pi * 100.0 * n / 16000.0);
  }
  CHECK(zero_crossing_rate(sine) == oracle::zcr(sine));
  CHECK(zero_crossing_rate(sine) == 4.0 / 399.0);
  CHECK(zero_crossing_rate(cosine) == 5.0 / 399.0);
}

TEST_CASE("centroid and rolloff") {
  std::vector<double> point(257, 0.0);
  point[32] = 2.0;
  const auto p = spectrum_of(point, 31.25);
  CHECK(spectral_centroid(p) == 1000.0);
  CHECK(spectral_rolloff(p, 0.85) == 1000.0);
  CHECK(spectral_rolloff(p, 0.1) == 1000.0);

  const auto zero = spectrum_of(std::vector<double>(257, 0.0), 31.25);
  CHECK(spectral_centroid(zero) == 0.0);
  CHECK(spectral_rolloff(zero) == 0.0);

  const auto flat = spectrum_of(std::vector<double>(257, 1.0), 31.25);
  CHECK(spectral_centroid(flat) == doctest::Approx(256 * 31.25 / 2));

  const auto flat100 = spectrum_of(std::vector<double>(100, 1.0), 1.0);
  CHECK(spectral_rolloff(flat100, 0.85) == 84.0);
}

TEST_CASE("flux") {
  std::vector<double> e1(10, 0.0), e2(10, 0.0);
  e1[0] = 1.0;
  e2[1] = 3.0;
  const auto a = spectrum_of(e1, 1.0), b = spectrum_of(e2, 1.0);
  CHECK(spectral_flux(a, nullptr) == 0.0);
  CHECK(spectral_flux(a, &a) == 0.0);
  CHECK(spectral_flux(b, &a) == doctest::Approx(2.0));
  const auto zero = spectrum_of(std::vector<double>(10, 0.0), 1.0);
  CHECK(spectral_flux(zero, &a) == doctest::Approx(1.0));
  const auto other = spectrum_of(std::vector<double>(11, 1.0), 1.0);
  CHECK_THROWS_AS(spectral_flux(other, &a), ConfigError);
}

TEST_CASE("features match direct oracles on random frames") {
  Rng rng(21);
  std::vector<double> prev_mags;
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = noise(400, 1000 + trial, rng.uniform(0.01, 0.5));
    const auto s = power_spectrum(hamming_window(x), 512, 16000);
    auto windowed = hamming_window(x);
    const auto ref = oracle::dft_magnitudes(windowed, 512);
    const auto m = mfcc(s);
    const auto mr = oracle::mfcc(ref, s.bin_hz, 26, 13);
    for (std::size_t k = 0; k < 13; ++k) CHECK(std::abs(m[k] - mr[k]) < 1e-9);
    CHECK(std::abs(spectral_centroid(s) - oracle::centroid(ref, s.bin_hz)) < 1e-9);
    CHECK(std::abs(spectral_rolloff(s) - oracle::rolloff(ref, s.bin_hz, 0.85)) < 1e-9);
    if (!prev_mags.empty()) {
      const SpectralFrame prev{prev_mags, s.bin_hz};
      CHECK(std::abs(spectral_flux(s, &prev) - oracle::flux(ref, prev_mags)) < 1e-9);
    }
    prev_mags = s.magnitudes;
  }
}

TEST_CASE("extraction pipeline") {
  const auto clip = make_clip(noise(16000, 4));
  const auto f = extract_timbral_features(clip);
  REQUIRE(f.size() == 98);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f[i].frame_index == i);
    CHECK(f[i].values.size() == kFeatureDim);
    CHECK(f[i].values[kZcr] >= 0.0);
    CHECK(f[i].values[kZcr] <= 1.0);
    CHECK(f[i].values[kCentroid] <= 8000.0);
    CHECK(f[i].values[kRolloff] <= 8000.0);
    CHECK(f[i].values[kFlux] >= 0.0);
  }
  CHECK(f[0].values[kFlux] == 0.0);
  CHECK(extract_timbral_features(clip) == f);
  CHECK(extract_timbral_features_serial(clip) == f);

  // Layout: frame 5 recomputed by hand from its samples.
  const std::span<const double> raw(clip.samples.data() + 5 * 160, 400);
  const auto s = power_spectrum(hamming_window(raw), 512, 16000);
  const auto m = mfcc(s);
  for (std::size_t k = 0; k < 13; ++k) CHECK(f[5].values[k] == m[k]);
  CHECK(f[5].values[kZcr] == zero_crossing_rate(raw));
  CHECK(f[5].values[kCentroid] == spectral_centroid(s));
  CHECK(f[5].values[kRolloff] == spectral_rolloff(s));
}

TEST_CASE("silent clip") {
  for (const auto& f : extract_timbral_features(make_clip(std::vector<double>(8000, 0.0)))) {
    CHECK(f.values[kZcr] == 0.0);
    CHECK(f.values[kCentroid] == 0.0);
    CHECK(f.values[kRolloff] == 0.0);
    CHECK(f.values[kFlux] == 0.0);
  }
}

TEST_CASE("amplitude scaling only shifts mfcc 0") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = noise(4000, 50 + seed, 0.2);
    auto y = x;
    for (double& v : y) v *= 2.0;
    const auto fx = extract_timbral_features(make_clip(x));
    const auto fy = extract_timbral_features(make_clip(y));
    REQUIRE(fx.size() == fy.size());
    // Filter energies scale by 4, so c0 shifts by log(4) * sqrt(26).
    const double shift = std::log(4.0) * std::sqrt(26.0);
    for (std::size_t i = 0; i < fx.size(); ++i) {
      CHECK(fy[i].values[0] - fx[i].values[0] == doctest::Approx(shift).epsilon(1e-9));
      for (std::size_t k = 1; k < 13; ++k) CHECK(std::abs(fy[i].values[k] - fx[i].values[k]) < 1e-9);
      CHECK(fy[i].values[kZcr] == fx[i].values[kZcr]);
      CHECK(fy[i].values[kCentroid] == doctest::Approx(fx[i].values[kCentroid]).epsilon(1e-12));
      CHECK(fy[i].values[kRolloff] == fx[i].values[kRolloff]);
      CHECK(std::abs(fy[i].values[kFlux] - fx[i].values[kFlux]) < 1e-12);
    }
  }
}

TEST_CASE("other sample rates") {
  const auto f = extract_timbral_features(make_clip(noise(8000, 8), 8000));
  CHECK(f.size() == frame_layout(8000, 8000).count);
  for (const auto& v : f) CHECK(v.values[kRolloff] <= 4000.0);
}
