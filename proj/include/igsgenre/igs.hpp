#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "igsgenre/gmm.hpp"
#include "igsgenre/matrix.hpp"
#include "json.hpp"

namespace igsgenre::igs {

enum class Variant { flat, igs, iigs, smigs };

/// Canonical report order: Flat, IGS, SMIGS, IIGS.
inline constexpr Variant kReportOrder[] = {Variant::flat, Variant::igs, Variant::smigs, Variant::iigs};

std::string to_string(Variant v);
/// Accepts flat, igs, iigs, smigs (case-insensitive). Throws ConfigError.
Variant parse_variant(const std::string& s);

/// How several IGS models combine into one frame weight.
enum class IigsRule {
  /// Keep the frame only if the genre beats every IGS model.
  max_over_t,
  /// Keep the frame if the genre beats at least one IGS model.
  any_t,
};

enum class FrameLabel { true_classification, mis_classification, true_igs };

struct ClassifierConfig {
  /// Mixtures per genre model.
  std::size_t k = 16;
  /// Mixtures per IGS model; 0 means "same as k".
  std::size_t k_igs = 0;
  /// Mixtures per SMIGS score model.
  std::size_t k_score = 4;
  /// IIGS iterations T.
  std::size_t iterations = 3;
  /// Base EM settings. n_components is ignored; per-model seeds are derived from em.seed.
  gmm::EmConfig em;
  IigsRule iigs_rule = IigsRule::max_over_t;
  /// Train SMIGS score models on (d1, d2) only.
  bool score_two_dims = false;

  std::size_t igs_mixtures() const { return k_igs == 0 ? k : k_igs; }
  std::size_t score_dim() const { return score_two_dims ? 2 : 3; }
  /// Throws ConfigError.
  void validate(Variant v) const;

  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

nlohmann::json to_json(const ClassifierConfig& c);
ClassifierConfig config_from_json(const nlohmann::json& j);

struct DegeneracyFlag {
  /// "igs", "igs[t]", "genre:<label>" or "score:<label>".
  std::string component;
  std::string reason;

  friend bool operator==(const DegeneracyFlag&, const DegeneracyFlag&) = default;
};

/// Per-genre SMIGS models over likelihood-difference vectors.
struct ScoreModelPair {
  gmm::Gmm true_model;  ///< fit on frames the IGS stage classified correctly
  gmm::Gmm mis_model;   ///< fit on frames it mis-classified

  friend bool operator==(const ScoreModelPair&, const ScoreModelPair&) = default;
};

struct IgsClassifier {
  Variant variant = Variant::flat;
  std::vector<std::string> genre_labels;
  std::vector<gmm::Gmm> genre_models;
  /// Empty for flat or when no IGS model could be trained; one for igs/smigs; up to T for iigs.
  std::vector<gmm::Gmm> igs_models;
  /// smigs only, one slot per genre; nullopt marks a genre that falls back to IGS weights.
  std::vector<std::optional<ScoreModelPair>> score_models;
  std::vector<DegeneracyFlag> degenerate_flags;
  ClassifierConfig config;
  /// Free-form metadata (training fold, clip ids) carried through the document.
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t n_genres() const noexcept { return genre_models.size(); }
  std::size_t dim() const noexcept { return genre_models.empty() ? 0 : genre_models.front().dim(); }
  /// Throws DataError on any broken invariant.
  void validate() const;

  friend bool operator==(const IgsClassifier& a, const IgsClassifier& b) {
    return a.variant == b.variant && a.genre_labels == b.genre_labels && a.genre_models == b.genre_models &&
           a.igs_models == b.igs_models && a.score_models == b.score_models &&
           a.degenerate_flags == b.degenerate_flags && a.config == b.config && a.provenance == b.provenance;
  }
};

/// Training frames grouped by genre; labels[i] names frames[i].
struct TrainingSet {
  std::vector<std::string> labels;
  std::vector<Matrix> frames;
};

/// Likelihood differences for one frame of genre n against its strongest rival
/// genre (best) and the IGS model.
struct ScoreDiffVector {
  double d1 = 0.0;  ///< logp(f|genre) - logp(f|best)
  double d2 = 0.0;  ///< logp(f|genre) - logp(f|igs)
  double d3 = 0.0;  ///< logp(f|best) - logp(f|igs)
};

struct ScoreDiffSample {
  ScoreDiffVector diff;
  bool was_true_classified = false;
};

IgsClassifier train_flat(const TrainingSet& train, const ClassifierConfig& config);

/// Labels each frame of genre `true_genre` by the argmax over genre models
/// followed by IGS models (ties go to the lowest index, genres before IGS).
std::vector<FrameLabel> label_frames(std::span<const gmm::Gmm> genre_models, std::span<const gmm::Gmm> igs_models,
                                     const Matrix& frames, std::size_t true_genre);

IgsClassifier train_igs(const TrainingSet& train, const ClassifierConfig& config);
IgsClassifier train_iigs(const TrainingSet& train, const ClassifierConfig& config);
IgsClassifier train_smigs(const TrainingSet& train, const ClassifierConfig& config);
IgsClassifier train(Variant variant, const TrainingSet& train, const ClassifierConfig& config);

/// Difference vectors for frames of genre `genre`; `labels` are the two-way
/// labels of the same frames from the IGS stage.
std::vector<ScoreDiffSample> build_score_diffs(std::span<const gmm::Gmm> genre_models, const gmm::Gmm& igs_model,
                                               const Matrix& frames, std::size_t genre,
                                               std::span<const FrameLabel> labels);

/// Difference vector from one row of frame scores (genre scores then IGS score).
ScoreDiffVector score_diff_from_scores(std::span<const double> genre_scores, double igs_score, std::size_t genre);

/// Log-likelihoods of each frame under every genre model (columns 0..N-1)
/// followed by every IGS model.
Matrix score_frames(const IgsClassifier& classifier, const Matrix& frames);

/// The 0/1 weight for genre n given one row of score_frames output.
int weight_from_scores(const IgsClassifier& classifier, std::span<const double> scores, std::size_t genre);
int frame_weight(const IgsClassifier& classifier, std::span<const double> f, std::size_t genre);

struct WindowDecision {
  std::size_t genre = 0;
  /// Weighted mean log-likelihood per genre (or unweighted when every frame was eliminated).
  std::vector<double> scores;
  std::vector<std::size_t> eliminated;
  /// Genres whose weights summed to zero and used the unweighted mean.
  std::vector<bool> fallback;
};

/// Weighted decision over rows [begin, end) of precomputed frame scores.
WindowDecision decide(const IgsClassifier& classifier, const Matrix& scores, std::size_t begin, std::size_t end);
/// Throws DataError for an empty window.
WindowDecision classify_window(const IgsClassifier& classifier, const Matrix& frames);

inline constexpr const char* kClassifierSchema = "igsgenre.classifier/1";

nlohmann::json to_json(const IgsClassifier& c);
/// Throws PersistenceError.
IgsClassifier classifier_from_json(const nlohmann::json& doc);
std::string serialize(const IgsClassifier& c);
IgsClassifier deserialize_classifier(const std::string& text);

}  // namespace igsgenre::igs
