#include "igsgenre/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

#include "igsgenre/error.hpp"

namespace igsgenre::dsp {

namespace {

// The FFTW planner is not thread-safe; plan execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftWorkspace {
  std::size_t size;
  double* in;
  fftw_complex* out;
  fftw_plan plan;

  explicit FftWorkspace(std::size_t n) : size(n) {
    std::lock_guard lock(planner_mutex());
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~FftWorkspace() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftWorkspace(const FftWorkspace&) = delete;
  FftWorkspace& operator=(const FftWorkspace&) = delete;
};

FftWorkspace& workspace_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<FftWorkspace>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftWorkspace>(n);
  return *slot;
}

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

FrameLayout frame_layout(std::size_t n_samples, int sample_rate, double frame_ms, double hop_ms) {
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  if (frame_ms <= 0 || hop_ms <= 0) throw ConfigError("frame and hop durations must be positive");
  FrameLayout layout;
  layout.length = static_cast<std::size_t>(std::lround(frame_ms * sample_rate / 1000.0));
  layout.hop = static_cast<std::size_t>(std::lround(hop_ms * sample_rate / 1000.0));
  if (layout.length < 2 || layout.hop < 1) throw ConfigError("frame must span at least 2 samples and hop at least 1");
  if (n_samples < layout.length)
    throw TooShortError("clip of " + std::to_string(n_samples) + " samples is shorter than one " +
                        std::to_string(layout.length) + "-sample frame");
  layout.count = (n_samples - layout.length) / layout.hop + 1;
  return layout;
}

std::vector<std::vector<double>> frame_signal(const audio_io::AudioClip& clip, double frame_ms, double hop_ms) {
  const FrameLayout layout = frame_layout(clip.samples.size(), clip.sample_rate, frame_ms, hop_ms);
  std::vector<std::vector<double>> frames(layout.count);
  for (std::size_t i = 0; i < layout.count; ++i) {
    auto first = clip.samples.begin() + static_cast<std::ptrdiff_t>(i * layout.hop);
    frames[i].assign(first, first + static_cast<std::ptrdiff_t>(layout.length));
  }
  return frames;
}

std::vector<double> hamming_coefficients(std::size_t length) {
  if (length < 2) throw ConfigError("Hamming window needs at least 2 samples");
  std::vector<double> w(length);
  const double denom = static_cast<double>(length - 1);
  for (std::size_t n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / denom);
  return w;
}

std::vector<double> hamming_window(std::span<const double> frame) {
  std::vector<double> out = hamming_coefficients(frame.size());
  for (std::size_t n = 0; n < frame.size(); ++n) out[n] *= frame[n];
  return out;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

SpectralFrame power_spectrum(std::span<const double> frame, std::size_t fft_size, int sample_rate) {
  if (!is_pow2(fft_size)) throw ConfigError("fft_size " + std::to_string(fft_size) + " is not a power of two");
  if (fft_size < frame.size())
    throw ConfigError("fft_size " + std::to_string(fft_size) + " is shorter than the frame (" +
                      std::to_string(frame.size()) + ")");
  FftWorkspace& ws = workspace_for(fft_size);
  std::copy(frame.begin(), frame.end(), ws.in);
  std::fill(ws.in + frame.size(), ws.in + fft_size, 0.0);
  fftw_execute(ws.plan);

  SpectralFrame spec;
  spec.bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  spec.magnitudes.resize(fft_size / 2 + 1);
  for (std::size_t i = 0; i < spec.magnitudes.size(); ++i) spec.magnitudes[i] = std::hypot(ws.out[i][0], ws.out[i][1]);
  return spec;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t n_bins, double bin_hz, std::size_t n_mels)
    : n_bins_(n_bins), bin_hz_(bin_hz), n_mels_(n_mels), weights_(n_mels * n_bins, 0.0) {
  if (n_mels == 0 || n_bins < 2) throw ConfigError("mel filterbank needs at least one filter and two bins");
  const double nyquist = bin_hz * static_cast<double>(n_bins - 1);
  const double top = hz_to_mel(nyquist);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t j = 0; j < edges.size(); ++j)
    edges[j] = mel_to_hz(top * static_cast<double>(j) / static_cast<double>(n_mels + 1));

  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = bin_hz * static_cast<double>(b);
      double w = 0.0;
      if (f >= lo && f <= centre) w = (f - lo) / (centre - lo);
      else if (f > centre && f <= hi) w = (hi - f) / (hi - centre);
      weights_[m * n_bins + b] = w;
    }
  }
}

std::vector<double> MelFilterbank::energies(const SpectralFrame& spec) const {
  if (spec.bins() != n_bins_) throw ConfigError("spectrum bin count does not match the filterbank");
  std::vector<double> e(n_mels_, 0.0);
  for (std::size_t m = 0; m < n_mels_; ++m) {
    const double* w = weights_.data() + m * n_bins_;
    double acc = 0.0;
    for (std::size_t b = 0; b < n_bins_; ++b) acc += w[b] * spec.magnitudes[b] * spec.magnitudes[b];
    e[m] = acc;
  }
  return e;
}

std::vector<double> dct_ii_orthonormal(std::span<const double> x, std::size_t n_out) {
  const std::size_t m = x.size();
  if (n_out > m) throw ConfigError("cannot take more DCT coefficients than inputs");
  std::vector<double> c(n_out, 0.0);
  const double md = static_cast<double>(m);
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) / md);
    c[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / md);
  }
  return c;
}

std::vector<double> mfcc_from_energies(std::span<const double> mel_energies, std::size_t n_coeffs,
                                       std::size_t first_index, double log_floor) {
  if (first_index + n_coeffs > mel_energies.size())
    throw ConfigError("requested cepstral coefficients exceed the number of mel filters");
  std::vector<double> logs(mel_energies.size());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(std::max(mel_energies[i], log_floor));
  std::vector<double> c = dct_ii_orthonormal(logs, first_index + n_coeffs);
  c.erase(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(first_index));
  return c;
}

std::vector<double> mfcc(const SpectralFrame& spec, std::size_t n_mels, std::size_t n_coeffs, std::size_t first_index,
                         double log_floor) {
  MelFilterbank bank(spec.bins(), spec.bin_hz, n_mels);
  return mfcc_from_energies(bank.energies(spec), n_coeffs, first_index, log_floor);
}

double zero_crossing_rate(std::span<const double> frame) {
  if (frame.size() < 2) throw ConfigError("zero-crossing rate needs at least 2 samples");
  std::size_t changes = 0;
  for (std::size_t i = 1; i < frame.size(); ++i)
    if ((frame[i] >= 0.0) != (frame[i - 1] >= 0.0)) ++changes;
  return static_cast<double>(changes) / static_cast<double>(frame.size() - 1);
}

double spectral_centroid(const SpectralFrame& spec) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < spec.bins(); ++i) {
    num += static_cast<double>(i) * spec.bin_hz * spec.magnitudes[i];
    den += spec.magnitudes[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

double spectral_rolloff(const SpectralFrame& spec, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("roll-off fraction must lie in (0, 1)");
  const double total = std::accumulate(spec.magnitudes.begin(), spec.magnitudes.end(), 0.0);
  if (total <= 0.0) return 0.0;
  const double target = fraction * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < spec.bins(); ++i) {
    cum += spec.magnitudes[i];
    if (cum >= target) return static_cast<double>(i) * spec.bin_hz;
  }
  // Rounding can leave the running sum a hair under the target on the last bin.
  return static_cast<double>(spec.bins() - 1) * spec.bin_hz;
}

double spectral_flux(const SpectralFrame& spec, const SpectralFrame* prev) {
  if (prev == nullptr) return 0.0;
  if (prev->bins() != spec.bins() || prev->bin_hz != spec.bin_hz)
    throw ConfigError("spectral flux needs frames with the same bin layout");
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  const double na = norm(spec.magnitudes), nb = norm(prev->magnitudes);
  double flux = 0.0;
  for (std::size_t i = 0; i < spec.bins(); ++i) {
    const double a = na > 0.0 ? spec.magnitudes[i] / na : 0.0;
    const double b = nb > 0.0 ? prev->magnitudes[i] / nb : 0.0;
    flux += (a - b) * (a - b);
  }
  return flux;
}

}  // namespace igsgenre::dsp
