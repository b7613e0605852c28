#include "igsgenre/cli/config.hpp"

#include <algorithm>
#include <fstream>

#include "igsgenre/error.hpp"

namespace igsgenre::cli {

using nlohmann::json;

igs::ClassifierConfig PipelineConfig::classifier_for(std::size_t k) const {
  igs::ClassifierConfig c = classifier;
  c.k = k;
  c.em.seed = seed;
  return c;
}

eval::CvConfig PipelineConfig::cv_config() const {
  eval::CvConfig cv;
  cv.variants = variants;
  cv.mixtures = mixtures;
  cv.classifier = classifier_for(mixtures.empty() ? classifier.k : mixtures.front());
  cv.windows = windows;
  cv.hop_seconds = hop_seconds();
  cv.fold_seed = seed;
  return cv;
}

void PipelineConfig::validate() const {
  if (mixtures.empty()) throw ConfigError("at least one mixture count is required");
  if (variants.empty()) throw ConfigError("at least one variant is required");
  if (windows.empty()) throw ConfigError("at least one decision window is required");
  if (!(dsp.frame_ms > 0.0) || !(dsp.hop_ms > 0.0)) throw ConfigError("frame and hop lengths must be positive");
  if (dsp.n_mels == 0) throw ConfigError("mel filter count must be positive");
  if (!(dsp.rolloff_fraction > 0.0 && dsp.rolloff_fraction <= 1.0))
    throw ConfigError("rolloff fraction must lie in (0, 1]");
  if (dsp.mfcc_first_index > 1) throw ConfigError("mfcc_first_index must be 0 or 1");
  for (std::size_t k : mixtures)
    for (igs::Variant v : variants) classifier_for(k).validate(v);
}

json to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["dsp"] = {{"frame_ms", c.dsp.frame_ms},
              {"hop_ms", c.dsp.hop_ms},
              {"fft_size", c.dsp.fft_size},
              {"n_mels", c.dsp.n_mels},
              {"mfcc_first_index", c.dsp.mfcc_first_index},
              {"rolloff_fraction", c.dsp.rolloff_fraction},
              {"log_floor", c.dsp.log_floor}};
  json model = igs::to_json(c.classifier);
  model.erase("k");
  model["em"].erase("seed");
  j["model"] = model;
  j["mixtures"] = c.mixtures;
  j["variants"] = json::array();
  for (auto v : c.variants) j["variants"].push_back(igs::to_string(v));
  j["windows"] = json::array();
  for (const auto& w : c.windows) j["windows"].push_back(w.label());
  j["synth"] = eval::to_json(c.synth);
  return j;
}

namespace {

void check_keys(const json& patch, const json& reference, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config " + (where.empty() ? std::string("document") : where) + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    if (reference.at(it.key()).is_object()) check_keys(it.value(), reference.at(it.key()), path);
  }
}

PipelineConfig from_full_json(const json& j) {
  PipelineConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& d = j.at("dsp");
  c.dsp.frame_ms = d.at("frame_ms").get<double>();
  c.dsp.hop_ms = d.at("hop_ms").get<double>();
  c.dsp.fft_size = d.at("fft_size").get<std::size_t>();
  c.dsp.n_mels = d.at("n_mels").get<std::size_t>();
  c.dsp.mfcc_first_index = d.at("mfcc_first_index").get<std::size_t>();
  c.dsp.rolloff_fraction = d.at("rolloff_fraction").get<double>();
  c.dsp.log_floor = d.at("log_floor").get<double>();

  json model = j.at("model");
  model["k"] = 1;
  model["em"]["seed"] = 0;
  c.classifier = igs::config_from_json(model);
  c.mixtures = j.at("mixtures").get<std::vector<std::size_t>>();
  c.classifier.k = c.mixtures.empty() ? 1 : c.mixtures.front();
  c.variants = parse_variant_list(j.at("variants").get<std::vector<std::string>>());
  c.windows.clear();
  for (const auto& w : j.at("windows")) c.windows.push_back(eval::parse_window(w.get<std::string>()));

  const auto& s = j.at("synth");
  c.synth.n_genres = s.at("n_genres").get<std::size_t>();
  c.synth.overlap = s.at("overlap").get<double>();
  c.synth.clips_per_genre = s.at("clips_per_genre").get<std::size_t>();
  c.synth.seconds_per_clip = s.at("seconds_per_clip").get<double>();
  c.synth.seed = s.at("seed").get<std::uint64_t>();
  c.synth.dim = s.at("dim").get<std::size_t>();
  c.synth.components_per_genre = s.at("components_per_genre").get<std::size_t>();
  c.synth.shared_components = s.at("shared_components").get<std::size_t>();
  c.synth.shared_per_clip = s.at("shared_per_clip").get<std::size_t>();
  c.synth.shared_spread = s.at("shared_spread").get<double>();
  c.synth.genre_spread = s.at("genre_spread").get<double>();
  c.synth.component_spread = s.at("component_spread").get<double>();
  c.synth.shared_sd = s.at("shared_sd").get<double>();
  c.synth.clip_offset_sd = s.at("clip_offset_sd").get<double>();
  return c;
}

}  // namespace

PipelineConfig merge_config(const PipelineConfig& base, const json& patch) {
  json full = to_json(base);
  check_keys(patch, full, "");
  full.merge_patch(patch);
  try {
    return from_full_json(full);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

PipelineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return merge_config(PipelineConfig{}, doc);
}

std::vector<igs::Variant> parse_variant_list(const std::vector<std::string>& items) {
  std::vector<igs::Variant> out;
  for (const auto& item : items) {
    std::size_t start = 0;
    while (start <= item.size()) {
      const auto comma = item.find(',', start);
      const auto piece = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!piece.empty()) {
        const auto v = igs::parse_variant(piece);
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

}  // namespace igsgenre::cli
