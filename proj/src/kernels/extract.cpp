// Per-frame timbral feature extraction. Spectra are computed independently
// per frame (parallel), then flux reads neighbouring spectra.

#include <string>

#include "igsgenre/dsp.hpp"
#include "igsgenre/error.hpp"

namespace igsgenre::dsp {

namespace {

struct Plan {
  FrameLayout layout;
  std::size_t fft_size;
  std::vector<double> window;
  MelFilterbank bank;
};

Plan make_plan(const audio_io::AudioClip& clip, const DspConfig& config) {
  FrameLayout layout = frame_layout(clip.samples.size(), clip.sample_rate, config.frame_ms, config.hop_ms);
  const std::size_t fft = config.fft_size == 0 ? next_pow2(layout.length) : config.fft_size;
  if (fft < layout.length)
    throw ConfigError("fft_size " + std::to_string(fft) + " is shorter than the " + std::to_string(layout.length) +
                      "-sample frame");
  if (config.mfcc_first_index + kNumMfcc > config.n_mels)
    throw ConfigError("n_mels must be at least " + std::to_string(config.mfcc_first_index + kNumMfcc));
  return Plan{layout, fft, hamming_coefficients(layout.length),
              MelFilterbank(fft / 2 + 1, static_cast<double>(clip.sample_rate) / static_cast<double>(fft), config.n_mels)};
}

// Everything except flux for frame i.
void analyse_frame(const audio_io::AudioClip& clip, const DspConfig& config, const Plan& plan, std::size_t i,
                   SpectralFrame& spec, FrameFeatures& out) {
  const std::span<const double> raw(clip.samples.data() + i * plan.layout.hop, plan.layout.length);
  std::vector<double> windowed(raw.size());
  for (std::size_t n = 0; n < raw.size(); ++n) windowed[n] = raw[n] * plan.window[n];
  spec = power_spectrum(windowed, plan.fft_size, clip.sample_rate);

  const auto cep = mfcc_from_energies(plan.bank.energies(spec), kNumMfcc, config.mfcc_first_index, config.log_floor);
  std::copy(cep.begin(), cep.end(), out.values.begin() + kMfccBegin);
  out.values[kZcr] = zero_crossing_rate(raw);
  out.values[kCentroid] = spectral_centroid(spec);
  out.values[kRolloff] = spectral_rolloff(spec, config.rolloff_fraction);
  out.frame_index = i;
}

}  // namespace

std::vector<FrameFeatures> extract_timbral_features(const audio_io::AudioClip& clip, const DspConfig& config) {
  const Plan plan = make_plan(clip, config);
  const std::size_t count = plan.layout.count;
  std::vector<FrameFeatures> out(count);
  std::vector<SpectralFrame> spectra(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto f = static_cast<std::size_t>(i);
      analyse_frame(clip, config, plan, f, spectra[f], out[f]);
    }
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto f = static_cast<std::size_t>(i);
      out[f].values[kFlux] = spectral_flux(spectra[f], f == 0 ? nullptr : &spectra[f - 1]);
    }
  }
  return out;
}

std::vector<FrameFeatures> extract_timbral_features_serial(const audio_io::AudioClip& clip, const DspConfig& config) {
  const Plan plan = make_plan(clip, config);
  std::vector<FrameFeatures> out(plan.layout.count);
  SpectralFrame prev, spec;
  for (std::size_t f = 0; f < plan.layout.count; ++f) {
    analyse_frame(clip, config, plan, f, spec, out[f]);
    out[f].values[kFlux] = spectral_flux(spec, f == 0 ? nullptr : &prev);
    std::swap(prev, spec);
  }
  return out;
}

}  // namespace igsgenre::dsp
