#include "igsgenre/igs.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

#include "igsgenre/error.hpp"
#include "igsgenre/rng.hpp"

namespace igsgenre::igs {

namespace {

enum Stage : std::uint64_t { kFlatGenre = 1, kIgsModel = 2, kRefitGenre = 3, kScoreTrue = 4, kScoreMis = 5 };

std::uint64_t stage_seed(const ClassifierConfig& c, Stage stage, std::uint64_t t, std::uint64_t n = 0) {
  return derive_seed(c.em.seed, stage, derive_seed(t, n));
}

gmm::Gmm fit(const Matrix& data, std::size_t k, const ClassifierConfig& c, std::uint64_t seed) {
  gmm::EmConfig em = c.em;
  em.n_components = k;
  em.seed = seed;
  return gmm::fit_gmm(data, em);
}

std::vector<const gmm::Gmm*> model_ptrs(std::span<const gmm::Gmm> genres, std::span<const gmm::Gmm> igs) {
  std::vector<const gmm::Gmm*> out;
  out.reserve(genres.size() + igs.size());
  for (const auto& g : genres) out.push_back(&g);
  for (const auto& g : igs) out.push_back(&g);
  return out;
}

void append_rows(Matrix& dst, const Matrix& src, std::span<const FrameLabel> labels, FrameLabel keep) {
  for (std::size_t r = 0; r < src.rows(); ++r)
    if (labels[r] == keep) dst.append_row(src.row(r));
}

Matrix select_rows(const Matrix& src, std::span<const FrameLabel> labels, FrameLabel keep) {
  Matrix out(0, src.cols());
  append_rows(out, src, labels, keep);
  return out;
}

void check_training_set(const TrainingSet& train, std::size_t k) {
  if (train.labels.size() != train.frames.size()) throw ConfigError("training set labels and frame groups differ in count");
  if (train.labels.size() < 2) throw InsufficientDataError("need at least two genres to train a classifier");
  const std::size_t dim = train.frames.front().cols();
  for (std::size_t n = 0; n < train.labels.size(); ++n) {
    if (train.frames[n].rows() < k)
      throw InsufficientDataError("genre '" + train.labels[n] + "' has " + std::to_string(train.frames[n].rows()) +
                                  " training frames, fewer than the " + std::to_string(k) + " mixtures requested");
    if (train.frames[n].cols() != dim) throw DimensionError("genre '" + train.labels[n] + "' frames have a different dimension");
  }
}

/// Refits every genre model on its true-classified frames; genres with too
/// few such frames keep their current model and are flagged.
void refit_genres(IgsClassifier& cls, const TrainingSet& train, const std::vector<std::vector<FrameLabel>>& labels,
                  std::uint64_t t) {
  const auto& c = cls.config;
  for (std::size_t n = 0; n < cls.n_genres(); ++n) {
    Matrix kept = select_rows(train.frames[n], labels[n], FrameLabel::true_classification);
    if (kept.rows() < c.k) {
      cls.degenerate_flags.push_back({"genre:" + cls.genre_labels[n],
                                      "iteration " + std::to_string(t) + ": " + std::to_string(kept.rows()) +
                                          " true-classified frames, fewer than k=" + std::to_string(c.k) +
                                          "; kept previous model"});
      continue;
    }
    cls.genre_models[n] = fit(kept, c.k, c, stage_seed(c, kRefitGenre, t));
  }
}

struct IgsStage {
  IgsClassifier classifier;
  /// Two-way labels from the flat pass, per genre.
  std::vector<std::vector<FrameLabel>> labels;
};

IgsStage igs_stage(const TrainingSet& train, const ClassifierConfig& config) {
  IgsStage stage{train_flat(train, config), {}};
  IgsClassifier& cls = stage.classifier;
  const std::size_t k_igs = config.igs_mixtures();

  Matrix pool(0, cls.dim());
  for (std::size_t n = 0; n < cls.n_genres(); ++n) {
    stage.labels.push_back(label_frames(cls.genre_models, {}, train.frames[n], n));
    append_rows(pool, train.frames[n], stage.labels[n], FrameLabel::mis_classification);
  }
  if (pool.rows() < k_igs) {
    cls.degenerate_flags.push_back({"igs", std::to_string(pool.rows()) + " mis-classified frames, fewer than k_igs=" +
                                               std::to_string(k_igs) + "; IGS model absent, genre models left flat"});
    return stage;
  }
  cls.igs_models.push_back(fit(pool, k_igs, config, stage_seed(config, kIgsModel, 1)));
  refit_genres(cls, train, stage.labels, 1);
  return stage;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::flat: return "flat";
    case Variant::igs: return "igs";
    case Variant::iigs: return "iigs";
    case Variant::smigs: return "smigs";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (l == "flat") return Variant::flat;
  if (l == "igs") return Variant::igs;
  if (l == "iigs") return Variant::iigs;
  if (l == "smigs") return Variant::smigs;
  throw ConfigError("unknown variant '" + s + "' (expected flat, igs, iigs or smigs)");
}

void ClassifierConfig::validate(Variant v) const {
  if (k == 0) throw ConfigError("genre mixture count k must be >= 1");
  if (k_score == 0) throw ConfigError("score model mixture count must be >= 1");
  if (v == Variant::iigs && iterations == 0) throw ConfigError("IIGS iteration count T must be >= 1");
  if (em.max_iters == 0 || !(em.tol > 0.0) || !(em.variance_floor_factor > 0.0))
    throw ConfigError("EM settings must be positive");
}

nlohmann::json to_json(const ClassifierConfig& c) {
  return {{"k", c.k},
          {"k_igs", c.k_igs},
          {"k_score", c.k_score},
          {"iterations", c.iterations},
          {"iigs_rule", c.iigs_rule == IigsRule::max_over_t ? "max_over_t" : "any_t"},
          {"score_two_dims", c.score_two_dims},
          {"em",
           {{"max_iters", c.em.max_iters},
            {"tol", c.em.tol},
            {"seed", c.em.seed},
            {"variance_floor_factor", c.em.variance_floor_factor},
            {"normalize", c.em.normalize}}}};
}

ClassifierConfig config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.k = j.at("k").get<std::size_t>();
  c.k_igs = j.at("k_igs").get<std::size_t>();
  c.k_score = j.at("k_score").get<std::size_t>();
  c.iterations = j.at("iterations").get<std::size_t>();
  const auto rule = j.at("iigs_rule").get<std::string>();
  if (rule == "max_over_t") c.iigs_rule = IigsRule::max_over_t;
  else if (rule == "any_t") c.iigs_rule = IigsRule::any_t;
  else throw ConfigError("unknown iigs_rule '" + rule + "'");
  c.score_two_dims = j.at("score_two_dims").get<bool>();
  const auto& em = j.at("em");
  c.em.max_iters = em.at("max_iters").get<std::size_t>();
  c.em.tol = em.at("tol").get<double>();
  c.em.seed = em.at("seed").get<std::uint64_t>();
  c.em.variance_floor_factor = em.at("variance_floor_factor").get<double>();
  c.em.normalize = em.at("normalize").get<bool>();
  return c;
}

void IgsClassifier::validate() const {
  const std::size_t n = n_genres();
  if (n < 2) throw DataError("classifier needs at least two genres");
  if (genre_labels.size() != n) throw DataError("genre label count does not match genre models");
  for (const auto& g : genre_models)
    if (g.dim() != dim()) throw DataError("genre models disagree on dimension");
  for (const auto& g : igs_models)
    if (g.dim() != dim()) throw DataError("IGS model dimension differs from genre models");
  auto has_flag = [&](const std::string& prefix) {
    return std::any_of(degenerate_flags.begin(), degenerate_flags.end(),
                       [&](const DegeneracyFlag& f) { return f.component.rfind(prefix, 0) == 0; });
  };
  switch (variant) {
    case Variant::flat:
      if (!igs_models.empty() || !score_models.empty()) throw DataError("flat classifier carries IGS payload");
      break;
    case Variant::igs:
      if (igs_models.size() > 1 || !score_models.empty()) throw DataError("igs classifier has a malformed payload");
      if (igs_models.empty() && !has_flag("igs")) throw DataError("igs classifier lacks an IGS model without a flag");
      break;
    case Variant::iigs:
      if (config.iterations == 0 || igs_models.size() > config.iterations)
        throw DataError("iigs classifier has more IGS models than iterations");
      if (igs_models.size() < config.iterations && !has_flag("igs"))
        throw DataError("iigs classifier stopped early without a flag");
      break;
    case Variant::smigs:
      if (igs_models.size() > 1) throw DataError("smigs classifier has more than one IGS model");
      if (score_models.size() != n) throw DataError("smigs classifier needs one score slot per genre");
      for (std::size_t i = 0; i < n; ++i) {
        if (!score_models[i]) {
          if (!has_flag("score:" + genre_labels[i])) throw DataError("smigs genre without score models is not flagged");
          continue;
        }
        if (score_models[i]->true_model.dim() != config.score_dim() || score_models[i]->mis_model.dim() != config.score_dim())
          throw DataError("score models have the wrong dimension");
      }
      break;
  }
}

IgsClassifier train_flat(const TrainingSet& train, const ClassifierConfig& config) {
  config.validate(Variant::flat);
  check_training_set(train, config.k);
  IgsClassifier cls;
  cls.variant = Variant::flat;
  cls.genre_labels = train.labels;
  cls.config = config;
  for (std::size_t n = 0; n < train.labels.size(); ++n)
    cls.genre_models.push_back(fit(train.frames[n], config.k, config, stage_seed(config, kFlatGenre, 0)));
  return cls;
}

std::vector<FrameLabel> label_frames(std::span<const gmm::Gmm> genre_models, std::span<const gmm::Gmm> igs_models,
                                     const Matrix& frames, std::size_t true_genre) {
  const auto models = model_ptrs(genre_models, igs_models);
  const Matrix scores = gmm::score_frames(models, frames);
  std::vector<FrameLabel> labels(frames.rows());
  for (std::size_t r = 0; r < frames.rows(); ++r) {
    auto row = scores.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == true_genre) labels[r] = FrameLabel::true_classification;
    else if (best >= genre_models.size()) labels[r] = FrameLabel::true_igs;
    else labels[r] = FrameLabel::mis_classification;
  }
  return labels;
}

IgsClassifier train_igs(const TrainingSet& train, const ClassifierConfig& config) {
  config.validate(Variant::igs);
  IgsClassifier cls = igs_stage(train, config).classifier;
  cls.variant = Variant::igs;
  return cls;
}

IgsClassifier train_iigs(const TrainingSet& train, const ClassifierConfig& config) {
  config.validate(Variant::iigs);
  IgsClassifier cls = igs_stage(train, config).classifier;
  cls.variant = Variant::iigs;
  if (cls.igs_models.empty()) {
    cls.degenerate_flags.push_back({"igs[1]", "early stop at t=1: no IGS model could be trained"});
    return cls;
  }
  const std::size_t k_igs = config.igs_mixtures();
  for (std::size_t t = 2; t <= config.iterations; ++t) {
    std::vector<std::vector<FrameLabel>> labels;
    Matrix pool(0, cls.dim());
    for (std::size_t n = 0; n < cls.n_genres(); ++n) {
      labels.push_back(label_frames(cls.genre_models, cls.igs_models, train.frames[n], n));
      append_rows(pool, train.frames[n], labels[n], FrameLabel::mis_classification);
    }
    if (pool.rows() < k_igs) {
      cls.degenerate_flags.push_back({"igs[" + std::to_string(t) + "]",
                                      "early stop: " + std::to_string(pool.rows()) +
                                          " mis-classified frames, fewer than k_igs=" + std::to_string(k_igs)});
      break;
    }
    cls.igs_models.push_back(fit(pool, k_igs, config, stage_seed(config, kIgsModel, t)));
    refit_genres(cls, train, labels, t);
  }
  return cls;
}

ScoreDiffVector score_diff_from_scores(std::span<const double> genre_scores, double igs_score, std::size_t genre) {
  std::size_t best = genre_scores.size();
  for (std::size_t m = 0; m < genre_scores.size(); ++m) {
    if (m == genre) continue;
    if (best == genre_scores.size() || genre_scores[m] > genre_scores[best]) best = m;
  }
  const double own = genre_scores[genre], rival = genre_scores[best];
  return {own - rival, own - igs_score, rival - igs_score};
}

std::vector<ScoreDiffSample> build_score_diffs(std::span<const gmm::Gmm> genre_models, const gmm::Gmm& igs_model,
                                               const Matrix& frames, std::size_t genre,
                                               std::span<const FrameLabel> labels) {
  if (genre_models.size() < 2) throw ConfigError("score differences need at least two genres");
  if (labels.size() != frames.rows()) throw DimensionError("one label per frame is required");
  const auto models = model_ptrs(genre_models, std::span(&igs_model, 1));
  const Matrix scores = gmm::score_frames(models, frames);
  const std::size_t n = genre_models.size();
  std::vector<ScoreDiffSample> out(frames.rows());
  for (std::size_t r = 0; r < frames.rows(); ++r) {
    auto row = scores.row(r);
    out[r].diff = score_diff_from_scores(row.first(n), row[n], genre);
    out[r].was_true_classified = labels[r] == FrameLabel::true_classification;
  }
  return out;
}

IgsClassifier train_smigs(const TrainingSet& train, const ClassifierConfig& config) {
  config.validate(Variant::smigs);
  IgsStage stage = igs_stage(train, config);
  IgsClassifier& cls = stage.classifier;
  cls.variant = Variant::smigs;
  cls.score_models.assign(cls.n_genres(), std::nullopt);
  const std::size_t sd = config.score_dim();

  for (std::size_t n = 0; n < cls.n_genres(); ++n) {
    const std::string component = "score:" + cls.genre_labels[n];
    if (cls.igs_models.empty()) {
      cls.degenerate_flags.push_back({component, "no IGS model; uses IGS weights"});
      continue;
    }
    const auto diffs = build_score_diffs(cls.genre_models, cls.igs_models.front(), train.frames[n], n, stage.labels[n]);
    Matrix good(0, sd), bad(0, sd);
    for (const auto& s : diffs) {
      const double v[3] = {s.diff.d1, s.diff.d2, s.diff.d3};
      (s.was_true_classified ? good : bad).append_row(std::span<const double>(v, sd));
    }
    if (good.rows() < config.k_score || bad.rows() < config.k_score) {
      cls.degenerate_flags.push_back({component, std::to_string(good.rows()) + " true / " + std::to_string(bad.rows()) +
                                                     " mis-classified frames, need k_score=" +
                                                     std::to_string(config.k_score) + " each; uses IGS weights"});
      continue;
    }
    cls.score_models[n] = ScoreModelPair{fit(good, config.k_score, config, stage_seed(config, kScoreTrue, 1, n)),
                                         fit(bad, config.k_score, config, stage_seed(config, kScoreMis, 1, n))};
  }
  return cls;
}

IgsClassifier train(Variant variant, const TrainingSet& train, const ClassifierConfig& config) {
  switch (variant) {
    case Variant::flat: return train_flat(train, config);
    case Variant::igs: return train_igs(train, config);
    case Variant::iigs: return train_iigs(train, config);
    case Variant::smigs: return train_smigs(train, config);
  }
  throw ConfigError("unknown variant");
}

Matrix score_frames(const IgsClassifier& classifier, const Matrix& frames) {
  const auto models = model_ptrs(classifier.genre_models, classifier.igs_models);
  return gmm::score_frames(models, frames);
}

namespace {

int igs_weight(const IgsClassifier& c, std::span<const double> scores, std::size_t genre) {
  const std::size_t n = c.n_genres();
  const std::size_t t_count = scores.size() - n;
  if (t_count == 0) return 1;
  const double own = scores[genre];
  if (c.variant == Variant::iigs && c.config.iigs_rule == IigsRule::any_t) {
    for (std::size_t t = 0; t < t_count; ++t)
      if (own > scores[n + t]) return 1;
    return 0;
  }
  double strongest = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < t_count; ++t) strongest = std::max(strongest, scores[n + t]);
  return own > strongest ? 1 : 0;
}

}  // namespace

int weight_from_scores(const IgsClassifier& classifier, std::span<const double> scores, std::size_t genre) {
  switch (classifier.variant) {
    case Variant::flat: return 1;
    case Variant::igs:
    case Variant::iigs: return igs_weight(classifier, scores, genre);
    case Variant::smigs: {
      const auto& pair = classifier.score_models[genre];
      if (!pair) return igs_weight(classifier, scores, genre);
      const std::size_t n = classifier.n_genres();
      const ScoreDiffVector s = score_diff_from_scores(scores.first(n), scores[n], genre);
      const double v[3] = {s.d1, s.d2, s.d3};
      const std::span<const double> x(v, classifier.config.score_dim());
      return pair->true_model.log_likelihood(x) > pair->mis_model.log_likelihood(x) ? 1 : 0;
    }
  }
  return 1;
}

int frame_weight(const IgsClassifier& classifier, std::span<const double> f, std::size_t genre) {
  if (genre >= classifier.n_genres()) throw ConfigError("genre index out of range");
  Matrix one(0, f.size());
  one.append_row(f);
  const Matrix scores = score_frames(classifier, one);
  return weight_from_scores(classifier, scores.row(0), genre);
}

WindowDecision decide(const IgsClassifier& classifier, const Matrix& scores, std::size_t begin, std::size_t end) {
  if (end <= begin || end > scores.rows()) throw DataError("decision window must contain at least one frame");
  const std::size_t n = classifier.n_genres();
  WindowDecision d;
  d.scores.assign(n, 0.0);
  d.eliminated.assign(n, 0);
  d.fallback.assign(n, false);
  for (std::size_t g = 0; g < n; ++g) {
    double weighted = 0.0, plain = 0.0;
    std::size_t kept = 0;
    for (std::size_t r = begin; r < end; ++r) {
      const double ll = scores(r, g);
      plain += ll;
      if (weight_from_scores(classifier, scores.row(r), g) == 1) {
        weighted += ll;
        ++kept;
      }
    }
    d.eliminated[g] = (end - begin) - kept;
    if (kept == 0) {
      d.fallback[g] = true;
      d.scores[g] = plain / static_cast<double>(end - begin);
    } else {
      d.scores[g] = weighted / static_cast<double>(kept);
    }
  }
  d.genre = 0;
  for (std::size_t g = 1; g < n; ++g)
    if (d.scores[g] > d.scores[d.genre]) d.genre = g;
  return d;
}

WindowDecision classify_window(const IgsClassifier& classifier, const Matrix& frames) {
  if (frames.rows() == 0) throw DataError("cannot classify an empty frame sequence");
  const Matrix scores = score_frames(classifier, frames);
  return decide(classifier, scores, 0, scores.rows());
}

nlohmann::json to_json(const IgsClassifier& c) {
  nlohmann::json doc;
  doc["schema_version"] = kClassifierSchema;
  doc["variant"] = to_string(c.variant);
  doc["genre_labels"] = c.genre_labels;
  doc["config"] = to_json(c.config);
  doc["genre_models"] = nlohmann::json::array();
  for (const auto& g : c.genre_models) doc["genre_models"].push_back(gmm::to_json(g));
  doc["igs_models"] = nlohmann::json::array();
  for (const auto& g : c.igs_models) doc["igs_models"].push_back(gmm::to_json(g));
  doc["score_models"] = nlohmann::json::array();
  for (std::size_t n = 0; n < c.score_models.size(); ++n) {
    const auto& s = c.score_models[n];
    if (!s) doc["score_models"].push_back(nullptr);
    else doc["score_models"].push_back({{"true_model", gmm::to_json(s->true_model)}, {"mis_model", gmm::to_json(s->mis_model)}});
  }
  doc["degenerate_flags"] = nlohmann::json::array();
  for (const auto& f : c.degenerate_flags) doc["degenerate_flags"].push_back({{"component", f.component}, {"reason", f.reason}});
  doc["provenance"] = c.provenance;
  return doc;
}

IgsClassifier classifier_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object() || !doc.contains("schema_version"))
      throw PersistenceError("classifier document lacks schema_version");
    const auto version = doc.at("schema_version").get<std::string>();
    if (version != kClassifierSchema)
      throw PersistenceError("classifier document version '" + version + "' is not supported (expected '" +
                             std::string(kClassifierSchema) + "')");
    IgsClassifier c;
    c.variant = parse_variant(doc.at("variant").get<std::string>());
    c.genre_labels = doc.at("genre_labels").get<std::vector<std::string>>();
    c.config = config_from_json(doc.at("config"));
    for (const auto& g : doc.at("genre_models")) c.genre_models.push_back(gmm::gmm_from_json(g));
    for (const auto& g : doc.at("igs_models")) c.igs_models.push_back(gmm::gmm_from_json(g));
    for (const auto& s : doc.at("score_models")) {
      if (s.is_null()) c.score_models.emplace_back(std::nullopt);
      else c.score_models.emplace_back(ScoreModelPair{gmm::gmm_from_json(s.at("true_model")), gmm::gmm_from_json(s.at("mis_model"))});
    }
    for (const auto& f : doc.at("degenerate_flags"))
      c.degenerate_flags.push_back({f.at("component").get<std::string>(), f.at("reason").get<std::string>()});
    if (doc.contains("provenance")) c.provenance = doc.at("provenance");
    c.validate();
    return c;
  } catch (const PersistenceError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError(std::string("malformed classifier document: ") + e.what());
  } catch (const Error& e) {
    throw PersistenceError(std::string("invalid classifier document: ") + e.what());
  }
}

std::string serialize(const IgsClassifier& c) { return to_json(c).dump(1); }

IgsClassifier deserialize_classifier(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError(std::string("classifier document is not valid JSON: ") + e.what());
  }
  return classifier_from_json(doc);
}

}  // namespace igsgenre::igs
