#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igsgenre/dsp.hpp"
#include "igsgenre/eval.hpp"
#include "igsgenre/igs.hpp"
#include "json.hpp"

namespace igsgenre::cli {

/// Everything that influences a pipeline result. Paths and worker counts are
/// not part of it.
struct PipelineConfig {
  std::uint64_t seed = 0;
  dsp::DspConfig dsp;
  /// `k` is overwritten per entry of `mixtures`.
  igs::ClassifierConfig classifier;
  std::vector<std::size_t> mixtures{16};
  std::vector<igs::Variant> variants{igs::Variant::flat, igs::Variant::igs};
  std::vector<eval::DecisionWindowSpec> windows = eval::default_windows();
  eval::SynthConfig synth;

  double hop_seconds() const { return dsp.hop_ms / 1000.0; }
  /// Classifier settings for one mixture count, seeded from `seed`.
  igs::ClassifierConfig classifier_for(std::size_t k) const;
  eval::CvConfig cv_config() const;
  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);

/// Overlays `patch` (a possibly partial config document) on `base`. Unknown
/// keys and ill-typed values raise ConfigError.
PipelineConfig merge_config(const PipelineConfig& base, const nlohmann::json& patch);

/// Reads a JSON config file over the defaults. Throws ConfigError.
PipelineConfig load_config_file(const std::string& path);

/// "flat,igs" -> variants. Throws ConfigError.
std::vector<igs::Variant> parse_variant_list(const std::vector<std::string>& items);

}  // namespace igsgenre::cli
