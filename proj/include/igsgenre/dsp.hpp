#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "igsgenre/audio_io.hpp"

namespace igsgenre::dsp {

inline constexpr std::size_t kNumMfcc = 13;
inline constexpr std::size_t kFeatureDim = 17;

/// Feature layout: [mfcc_1..mfcc_13, zcr, centroid_hz, rolloff_hz, flux].
enum FeatureIndex : std::size_t {
  kMfccBegin = 0,
  kZcr = 13,
  kCentroid = 14,
  kRolloff = 15,
  kFlux = 16,
};

struct FrameFeatures {
  std::array<double, kFeatureDim> values{};
  std::size_t frame_index = 0;

  friend bool operator==(const FrameFeatures&, const FrameFeatures&) = default;
};

/// Magnitudes |X[i]| for DFT bins 0..fft_size/2.
struct SpectralFrame {
  std::vector<double> magnitudes;
  double bin_hz = 0.0;

  std::size_t bins() const noexcept { return magnitudes.size(); }
};

struct DspConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  /// 0 selects the next power of two at or above the frame length.
  std::size_t fft_size = 0;
  std::size_t n_mels = 26;
  /// Index of the first returned cepstral coefficient: 0 returns c0..c12,
  /// 1 returns c1..c13.
  std::size_t mfcc_first_index = 0;
  double rolloff_fraction = 0.85;
  double log_floor = 1e-10;
};

struct FrameLayout {
  std::size_t length = 0;
  std::size_t hop = 0;
  std::size_t count = 0;
};

/// L = round(frame_ms * rate / 1000), H = round(hop_ms * rate / 1000),
/// count = floor((n - L) / H) + 1. Throws TooShortError when n < L.
FrameLayout frame_layout(std::size_t n_samples, int sample_rate, double frame_ms = 25.0, double hop_ms = 10.0);

std::vector<std::vector<double>> frame_signal(const audio_io::AudioClip& clip, double frame_ms = 25.0,
                                              double hop_ms = 10.0);

/// w[n] = 0.54 - 0.46 cos(2 pi n / (L - 1)).
std::vector<double> hamming_coefficients(std::size_t length);
std::vector<double> hamming_window(std::span<const double> frame);

std::size_t next_pow2(std::size_t n);

/// Zero-pads `frame` to fft_size and returns |DFT| over bins 0..fft_size/2.
/// Throws ConfigError if fft_size is not a power of two or is shorter than the frame.
SpectralFrame power_spectrum(std::span<const double> frame, std::size_t fft_size, int sample_rate);

/// Triangular filters equally spaced on the mel scale 2595 log10(1 + f/700)
/// between 0 Hz and Nyquist, evaluated at each bin's centre frequency.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t n_bins, double bin_hz, std::size_t n_mels);

  /// Filter energies over squared magnitudes.
  std::vector<double> energies(const SpectralFrame& spec) const;

  std::size_t n_mels() const noexcept { return n_mels_; }
  std::size_t n_bins() const noexcept { return n_bins_; }
  double bin_hz() const noexcept { return bin_hz_; }
  double weight(std::size_t mel, std::size_t bin) const noexcept { return weights_[mel * n_bins_ + bin]; }

 private:
  std::size_t n_bins_;
  double bin_hz_;
  std::size_t n_mels_;
  std::vector<double> weights_;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Orthonormal DCT-II: c0 = sqrt(1/M) sum x, ck = sqrt(2/M) sum x cos(pi k (m + 1/2) / M).
std::vector<double> dct_ii_orthonormal(std::span<const double> x, std::size_t n_out);

/// Cepstrum of log(max(filter energy, log_floor)); returns coefficients
/// first_index .. first_index + n_coeffs - 1.
std::vector<double> mfcc_from_energies(std::span<const double> mel_energies, std::size_t n_coeffs,
                                       std::size_t first_index = 0, double log_floor = 1e-10);
std::vector<double> mfcc(const SpectralFrame& spec, std::size_t n_mels = 26, std::size_t n_coeffs = 13,
                         std::size_t first_index = 0, double log_floor = 1e-10);

/// Sign changes between consecutive samples over L - 1; zero counts as non-negative.
double zero_crossing_rate(std::span<const double> frame);

double spectral_centroid(const SpectralFrame& spec);
double spectral_rolloff(const SpectralFrame& spec, double fraction = 0.85);
/// Squared distance between unit-L2 magnitude vectors; 0 for the first frame.
double spectral_flux(const SpectralFrame& spec, const SpectralFrame* prev);

/// Full per-frame pipeline: frame -> Hamming -> spectrum -> {mfcc, centroid,
/// rolloff, flux}; ZCR on the un-windowed frame. Frames are processed in
/// parallel (OpenMP); output is bit-identical to the serial reference.
std::vector<FrameFeatures> extract_timbral_features(const audio_io::AudioClip& clip, const DspConfig& config = {});
std::vector<FrameFeatures> extract_timbral_features_serial(const audio_io::AudioClip& clip,
                                                           const DspConfig& config = {});

}  // namespace igsgenre::dsp
