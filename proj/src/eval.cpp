#include "igsgenre/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "igsgenre/error.hpp"
#include "igsgenre/rng.hpp"

namespace igsgenre::eval {

using audio_io::Fold;

std::string DecisionWindowSpec::label() const {
  if (kind == Kind::whole_clip) return "whole-clip";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gs", seconds);
  return buf;
}

DecisionWindowSpec parse_window(const std::string& text) {
  std::string t = text;
  t.erase(std::remove_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }), t.end());
  if (t == "whole-clip" || t == "whole") return DecisionWindowSpec::whole_clip();
  if (!t.empty() && (t.back() == 's' || t.back() == 'S')) t.pop_back();
  try {
    std::size_t used = 0;
    const double s = std::stod(t, &used);
    if (used != t.size() || !(s > 0.0) || !std::isfinite(s)) throw ConfigError("");
    return DecisionWindowSpec::of_seconds(s);
  } catch (const std::exception&) {
    throw ConfigError("bad decision window '" + text + "' (expected seconds > 0 or whole-clip)");
  }
}

std::vector<DecisionWindowSpec> parse_window_list(const std::string& text) {
  std::vector<DecisionWindowSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_window(item));
  if (out.empty()) throw ConfigError("no decision windows given");
  return out;
}

std::size_t window_frames(const DecisionWindowSpec& spec, std::size_t n_frames, double hop_seconds) {
  if (spec.kind == DecisionWindowSpec::Kind::whole_clip) return n_frames;
  if (!(hop_seconds > 0.0)) throw ConfigError("frame hop must be positive");
  // The small slack keeps e.g. 0.5 / 0.01 at 50 rather than 49.
  const double frames = std::floor(spec.seconds / hop_seconds + 1e-9);
  if (frames < 1.0)
    throw ConfigError("decision window " + spec.label() + " is shorter than one frame hop");
  return static_cast<std::size_t>(frames);
}

std::vector<WindowSlice> segment_windows(std::size_t n_frames, const DecisionWindowSpec& spec, double hop_seconds) {
  std::vector<WindowSlice> out;
  const std::size_t w = window_frames(spec, n_frames, hop_seconds);
  if (w == 0) return out;
  for (std::size_t b = 0; b + w <= n_frames; b += w) out.push_back({b, w});
  return out;
}

void assign_missing_folds(Corpus& corpus, std::uint64_t seed) {
  const bool complete = std::all_of(corpus.clips.begin(), corpus.clips.end(), [](const LabeledClip& c) { return c.fold.has_value(); });
  if (complete) return;
  audio_io::DatasetManifest m;
  m.genre_set = corpus.genre_labels;
  for (const auto& c : corpus.clips) m.entries.push_back({c.source_id, corpus.genre_labels.at(c.genre), std::nullopt});
  const auto split = audio_io::split_two_fold(m, seed);
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) corpus.clips[i].fold = split.entries[i].fold;
}

igs::TrainingSet training_set(const Corpus& corpus, Fold fold) {
  igs::TrainingSet t;
  t.labels = corpus.genre_labels;
  std::size_t dim = 0;
  for (const auto& c : corpus.clips) dim = std::max(dim, c.frames.cols());
  t.frames.assign(corpus.genre_labels.size(), Matrix(0, dim));
  for (const auto& c : corpus.clips) {
    if (c.fold != fold) continue;
    for (std::size_t r = 0; r < c.frames.rows(); ++r) t.frames.at(c.genre).append_row(c.frames.row(r));
  }
  return t;
}

namespace {

struct Job {
  std::size_t clip;
  WindowSlice slice;
};

double ccr_of(const Confusion& m) {
  std::uint64_t trace = 0, total = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) {
      total += m[i][j];
      if (i == j) trace += m[i][j];
    }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(trace) / static_cast<double>(total);
}

}  // namespace

std::vector<WindowEvaluation> evaluate_decisions(std::size_t n_genres, const std::vector<const LabeledClip*>& clips,
                                                 const std::vector<DecisionWindowSpec>& specs, const Decider& decide,
                                                 bool parallel, double hop_seconds) {
  std::vector<WindowEvaluation> out;
  for (const auto& spec : specs) {
    WindowEvaluation ev;
    ev.confusion.assign(n_genres, std::vector<std::uint64_t>(n_genres, 0));
    ev.eliminated_fraction.assign(n_genres, 0.0);

    std::vector<Job> jobs;
    for (std::size_t c = 0; c < clips.size(); ++c) {
      if (clips[c]->genre >= n_genres) throw DataError("clip '" + clips[c]->source_id + "' has an unknown genre index");
      const auto slices = segment_windows(clips[c]->frames.rows(), spec, hop_seconds);
      if (slices.empty()) ev.short_clips.push_back(clips[c]->source_id);
      for (const auto& s : slices) jobs.push_back({c, s});
    }

    std::vector<Decision> decisions(jobs.size());
    const auto n = static_cast<std::ptrdiff_t>(jobs.size());
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 4)
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        const Job& j = jobs[static_cast<std::size_t>(i)];
        decisions[static_cast<std::size_t>(i)] = decide(j.clip, j.slice.begin, j.slice.begin + j.slice.length);
      }
    } else {
      for (std::size_t i = 0; i < jobs.size(); ++i)
        decisions[i] = decide(jobs[i].clip, jobs[i].slice.begin, jobs[i].slice.begin + jobs[i].slice.length);
    }

    std::uint64_t frames = 0;
    std::vector<std::uint64_t> eliminated(n_genres, 0);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const Decision& d = decisions[i];
      if (d.genre >= n_genres) throw DataError("decision rule returned an out-of-range genre");
      ++ev.confusion[clips[jobs[i].clip]->genre][d.genre];
      frames += jobs[i].slice.length;
      for (std::size_t g = 0; g < d.eliminated.size() && g < n_genres; ++g) eliminated[g] += d.eliminated[g];
    }
    ev.windows = jobs.size();
    ev.empty = jobs.empty();
    ev.ccr = ccr_of(ev.confusion);
    for (std::size_t g = 0; g < n_genres; ++g)
      ev.eliminated_fraction[g] = frames == 0 ? 0.0 : static_cast<double>(eliminated[g]) / static_cast<double>(frames);
    out.push_back(std::move(ev));
  }
  return out;
}

std::vector<WindowEvaluation> evaluate(const igs::IgsClassifier& classifier,
                                       const std::vector<const LabeledClip*>& test,
                                       const std::vector<DecisionWindowSpec>& specs, double hop_seconds) {
  std::vector<Matrix> scores;
  scores.reserve(test.size());
  for (const LabeledClip* c : test) {
    if (c->frames.rows() > 0 && c->frames.cols() != classifier.dim())
      throw DimensionError("clip '" + c->source_id + "' has " + std::to_string(c->frames.cols()) +
                           "-dim frames, classifier expects " + std::to_string(classifier.dim()));
    scores.push_back(c->frames.rows() > 0 ? igs::score_frames(classifier, c->frames) : Matrix());
  }
  Decider decide = [&](std::size_t clip, std::size_t begin, std::size_t end) {
    const auto d = igs::decide(classifier, scores[clip], begin, end);
    return Decision{d.genre, d.eliminated};
  };
  return evaluate_decisions(classifier.n_genres(), test, specs, decide, true, hop_seconds);
}

void EvaluationReport::add(igs::Variant variant, std::size_t k, const DecisionWindowSpec& window, WindowEvaluation fold) {
  auto it = std::find_if(cells.begin(), cells.end(), [&](const ReportCell& c) {
    return c.variant == variant && c.k == k && c.window == window;
  });
  if (it == cells.end()) {
    cells.push_back(ReportCell{variant, k, window, {}, 0.0, true, {}, {}});
    it = cells.end() - 1;
  }
  ReportCell& cell = *it;
  cell.folds.push_back(std::move(fold));

  const std::size_t n = genre_labels.size();
  cell.confusion.assign(n, std::vector<std::uint64_t>(n, 0));
  cell.eliminated_fraction.assign(n, 0.0);
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& f : cell.folds) {
    for (std::size_t i = 0; i < n && i < f.confusion.size(); ++i)
      for (std::size_t j = 0; j < n && j < f.confusion[i].size(); ++j) cell.confusion[i][j] += f.confusion[i][j];
    if (f.empty) continue;
    sum += f.ccr;
    for (std::size_t g = 0; g < n && g < f.eliminated_fraction.size(); ++g) cell.eliminated_fraction[g] += f.eliminated_fraction[g];
    ++used;
  }
  cell.empty = used == 0;
  cell.ccr = used == 0 ? 0.0 : sum / static_cast<double>(used);
  if (used > 0)
    for (double& e : cell.eliminated_fraction) e /= static_cast<double>(used);
}

const ReportCell* EvaluationReport::find(igs::Variant variant, std::size_t k, const DecisionWindowSpec& window) const {
  for (const auto& c : cells)
    if (c.variant == variant && c.k == k && c.window == window) return &c;
  return nullptr;
}

nlohmann::json to_json(const CvConfig& c) {
  nlohmann::json j;
  j["variants"] = nlohmann::json::array();
  for (auto v : c.variants) j["variants"].push_back(igs::to_string(v));
  j["mixtures"] = c.mixtures;
  j["classifier"] = igs::to_json(c.classifier);
  j["windows"] = nlohmann::json::array();
  for (const auto& w : c.windows) j["windows"].push_back(w.label());
  j["hop_seconds"] = c.hop_seconds;
  j["fold_seed"] = c.fold_seed;
  return j;
}

EvaluationReport cross_validate(Corpus corpus, const CvConfig& config) {
  assign_missing_folds(corpus, config.fold_seed);
  EvaluationReport report;
  report.genre_labels = corpus.genre_labels;
  report.config = to_json(config);

  std::vector<const LabeledClip*> by_fold[2];
  for (const auto& c : corpus.clips) by_fold[*c.fold == Fold::A ? 0 : 1].push_back(&c);
  const igs::TrainingSet train_sets[2] = {training_set(corpus, Fold::A), training_set(corpus, Fold::B)};

  for (std::size_t k : config.mixtures) {
    igs::ClassifierConfig cc = config.classifier;
    cc.k = k;
    for (igs::Variant v : config.variants) {
      for (int f = 0; f < 2; ++f) {
        const igs::IgsClassifier cls = igs::train(v, train_sets[f], cc);
        auto evals = evaluate(cls, by_fold[1 - f], config.windows, config.hop_seconds);
        for (std::size_t s = 0; s < config.windows.size(); ++s) {
          evals[s].train_fold = f == 0 ? "A" : "B";
          evals[s].test_fold = f == 0 ? "B" : "A";
          report.add(v, k, config.windows[s], std::move(evals[s]));
        }
      }
    }
  }
  return report;
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_genres", c.n_genres},
          {"overlap", c.overlap},
          {"clips_per_genre", c.clips_per_genre},
          {"seconds_per_clip", c.seconds_per_clip},
          {"seed", c.seed},
          {"dim", c.dim},
          {"components_per_genre", c.components_per_genre},
          {"shared_components", c.shared_components},
          {"shared_per_clip", c.shared_per_clip},
          {"shared_spread", c.shared_spread},
          {"genre_spread", c.genre_spread},
          {"component_spread", c.component_spread},
          {"shared_sd", c.shared_sd},
          {"clip_offset_sd", c.clip_offset_sd}};
}

std::size_t synth_frames_per_clip(double seconds) {
  const auto samples = static_cast<std::size_t>(std::llround(seconds * 16000.0));
  if (samples < 400) return 0;
  return (samples - 400) / 160 + 1;
}

Corpus synth_corpus(const SynthConfig& config) {
  if (config.n_genres < 2) throw ConfigError("synthetic corpus needs at least two genres");
  if (!(config.overlap >= 0.0 && config.overlap <= 1.0)) throw ConfigError("overlap must lie in [0, 1]");
  if (config.dim == 0 || config.components_per_genre == 0 || config.shared_components == 0)
    throw ConfigError("synthetic corpus dimensions and component counts must be positive");

  struct Component {
    std::vector<double> mean, sd;
  };
  const std::size_t d = config.dim;
  auto draw_components = [&](Rng& rng, std::size_t count, const std::vector<double>& centre, double spread,
                             double sd_lo, double sd_hi) {
    std::vector<Component> comps(count);
    for (auto& c : comps) {
      c.mean.resize(d);
      c.sd.resize(d);
      for (std::size_t j = 0; j < d; ++j) {
        c.mean[j] = centre[j] + rng.normal(0.0, spread);
        c.sd[j] = rng.uniform(sd_lo, sd_hi);
      }
    }
    return comps;
  };

  std::vector<std::vector<Component>> genres(config.n_genres);
  for (std::size_t g = 0; g < config.n_genres; ++g) {
    Rng rng(derive_seed(config.seed, 1, g));
    std::vector<double> centre(d);
    for (double& x : centre) x = rng.normal(0.0, config.genre_spread);
    genres[g] = draw_components(rng, config.components_per_genre, centre, config.component_spread, 0.6, 1.2);
  }
  Rng shared_rng(derive_seed(config.seed, 2));
  const auto shared = draw_components(shared_rng, config.shared_components, std::vector<double>(d, 0.0),
                                      config.shared_spread, 0.8 * config.shared_sd, 1.2 * config.shared_sd);

  Corpus corpus;
  for (std::size_t g = 0; g < config.n_genres; ++g) corpus.genre_labels.push_back("genre" + std::to_string(g));
  const std::size_t n_frames = synth_frames_per_clip(config.seconds_per_clip);
  for (std::size_t g = 0; g < config.n_genres; ++g) {
    for (std::size_t c = 0; c < config.clips_per_genre; ++c) {
      Rng rng(derive_seed(config.seed, 3, derive_seed(g, c)));
      std::vector<double> offset(d);
      for (double& x : offset) x = rng.normal(0.0, config.clip_offset_sd);
      std::vector<const Component*> clip_shared;
      if (config.shared_per_clip == 0 || config.shared_per_clip >= shared.size()) {
        for (const auto& s : shared) clip_shared.push_back(&s);
      } else {
        std::vector<std::size_t> idx(shared.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        for (std::size_t i = 0; i < config.shared_per_clip; ++i) clip_shared.push_back(&shared[idx[i]]);
      }
      LabeledClip clip;
      char id[64];
      std::snprintf(id, sizeof id, "synth_g%zu_c%03zu", g, c);
      clip.source_id = id;
      clip.genre = g;
      clip.frames = Matrix(n_frames, d);
      for (std::size_t r = 0; r < n_frames; ++r) {
        const bool confusable = rng.uniform() < config.overlap;
        const Component& comp = confusable ? *clip_shared[rng.index(clip_shared.size())]
                                           : genres[g][rng.index(genres[g].size())];
        for (std::size_t j = 0; j < d; ++j) clip.frames(r, j) = comp.mean[j] + comp.sd[j] * rng.normal() + offset[j];
      }
      corpus.clips.push_back(std::move(clip));
    }
  }
  return corpus;
}

}  // namespace igsgenre::eval
