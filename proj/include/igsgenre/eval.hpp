#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "igsgenre/audio_io.hpp"
#include "igsgenre/igs.hpp"
#include "igsgenre/matrix.hpp"
#include "json.hpp"

namespace igsgenre::eval {

inline constexpr double kDefaultHopSeconds = 0.010;

struct DecisionWindowSpec {
  enum class Kind { seconds, whole_clip };
  Kind kind = Kind::seconds;
  double seconds = 0.0;

  static DecisionWindowSpec of_seconds(double s) { return {Kind::seconds, s}; }
  static DecisionWindowSpec whole_clip() { return {Kind::whole_clip, 0.0}; }

  /// "0.5s", "30s", "whole-clip".
  std::string label() const;
  friend bool operator==(const DecisionWindowSpec&, const DecisionWindowSpec&) = default;
};

/// Parses "0.5", "0.5s", "whole-clip". Throws ConfigError.
DecisionWindowSpec parse_window(const std::string& text);
/// Comma-separated list of parse_window items.
std::vector<DecisionWindowSpec> parse_window_list(const std::string& text);
inline std::vector<DecisionWindowSpec> default_windows() {
  return {DecisionWindowSpec::of_seconds(0.5), DecisionWindowSpec::of_seconds(1), DecisionWindowSpec::of_seconds(3),
          DecisionWindowSpec::of_seconds(30)};
}

/// Frames per window: floor(seconds / hop) (whole-clip: all frames).
std::size_t window_frames(const DecisionWindowSpec& spec, std::size_t n_frames, double hop_seconds = kDefaultHopSeconds);

struct WindowSlice {
  std::size_t begin = 0;
  std::size_t length = 0;
  friend bool operator==(const WindowSlice&, const WindowSlice&) = default;
};

/// Consecutive non-overlapping windows inside one clip; the trailing partial
/// window is dropped. Throws ConfigError when the window is shorter than one frame.
std::vector<WindowSlice> segment_windows(std::size_t n_frames, const DecisionWindowSpec& spec,
                                         double hop_seconds = kDefaultHopSeconds);

struct LabeledClip {
  std::string source_id;
  std::size_t genre = 0;
  Matrix frames;
  std::optional<audio_io::Fold> fold;
};

struct Corpus {
  std::vector<std::string> genre_labels;
  std::vector<LabeledClip> clips;
};

/// Folds from split_two_fold over (source_id, genre) for clips lacking one.
void assign_missing_folds(Corpus& corpus, std::uint64_t seed);

/// Per-genre frame pools of the clips in `fold`.
igs::TrainingSet training_set(const Corpus& corpus, audio_io::Fold fold);

using Confusion = std::vector<std::vector<std::uint64_t>>;

/// One classifier on one test set at one window size.
struct WindowEvaluation {
  std::string train_fold;  ///< "A", "B", "all" or "-"
  std::string test_fold;
  /// rows = true genre, columns = decided genre.
  Confusion confusion;
  std::uint64_t windows = 0;
  double ccr = 0.0;
  bool empty = true;
  /// Per genre model: eliminated (frame, genre) decisions / frames evaluated.
  std::vector<double> eliminated_fraction;
  /// Clips too short for a single window.
  std::vector<std::string> short_clips;
};

/// Accumulated results for (variant, k, window) over one or more folds.
struct ReportCell {
  igs::Variant variant = igs::Variant::flat;
  std::size_t k = 0;
  DecisionWindowSpec window;
  std::vector<WindowEvaluation> folds;
  /// Unweighted mean of non-empty fold CCRs.
  double ccr = 0.0;
  bool empty = true;
  /// Sum of fold confusion matrices.
  Confusion confusion;
  std::vector<double> eliminated_fraction;
};

struct EvaluationReport {
  std::vector<std::string> genre_labels;
  std::vector<ReportCell> cells;
  nlohmann::json config = nlohmann::json::object();

  /// Adds a fold-level result to its (variant, k, window) cell and refreshes the aggregates.
  void add(igs::Variant variant, std::size_t k, const DecisionWindowSpec& window, WindowEvaluation fold);
  const ReportCell* find(igs::Variant variant, std::size_t k, const DecisionWindowSpec& window) const;
};

/// Outcome of one window decision.
struct Decision {
  std::size_t genre = 0;
  std::vector<std::size_t> eliminated;  ///< per genre model; may be empty
};

/// decide(clip_index, begin, end) must be safe to call concurrently when parallel is set.
using Decider = std::function<Decision(std::size_t clip, std::size_t begin, std::size_t end)>;

/// Windowing and accumulation with an arbitrary decision rule.
std::vector<WindowEvaluation> evaluate_decisions(std::size_t n_genres, const std::vector<const LabeledClip*>& clips,
                                                 const std::vector<DecisionWindowSpec>& specs, const Decider& decide,
                                                 bool parallel, double hop_seconds = kDefaultHopSeconds);

/// Classifies every window of every clip with the weighted decision rule.
/// Returns one evaluation per spec, in spec order.
std::vector<WindowEvaluation> evaluate(const igs::IgsClassifier& classifier,
                                       const std::vector<const LabeledClip*>& test,
                                       const std::vector<DecisionWindowSpec>& specs,
                                       double hop_seconds = kDefaultHopSeconds);

struct CvConfig {
  std::vector<igs::Variant> variants{igs::Variant::flat, igs::Variant::igs};
  std::vector<std::size_t> mixtures{16};
  igs::ClassifierConfig classifier;
  std::vector<DecisionWindowSpec> windows = default_windows();
  double hop_seconds = kDefaultHopSeconds;
  std::uint64_t fold_seed = 0;
};

nlohmann::json to_json(const CvConfig& c);

/// Train on fold A and test on B, then the reverse, for every variant and
/// mixture count; assigns folds first where missing.
EvaluationReport cross_validate(Corpus corpus, const CvConfig& config);

struct SynthConfig {
  std::size_t n_genres = 5;
  double overlap = 0.4;
  std::size_t clips_per_genre = 20;
  double seconds_per_clip = 10.0;
  std::uint64_t seed = 0;
  std::size_t dim = 17;
  std::size_t components_per_genre = 3;
  std::size_t shared_components = 8;
  /// Shared components one clip draws its confusable frames from (0 = all).
  std::size_t shared_per_clip = 1;
  double genre_spread = 2.0;       ///< sd of genre centres
  double component_spread = 0.5;   ///< sd of component means around their genre centre
  double shared_spread = 3.0;      ///< sd of confusable component means around the origin
  double shared_sd = 2.0;          ///< sd of the confusable mixture components
  double clip_offset_sd = 0.2;     ///< sd of a per-clip shift applied to every frame

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

nlohmann::json to_json(const SynthConfig& c);

/// Frames per clip follow 25 ms / 10 ms framing at 16 kHz.
std::size_t synth_frames_per_clip(double seconds);

/// Labeled synthetic feature clips: each frame comes from the shared
/// "confusable" mixture with probability `overlap`, otherwise from its
/// genre's own mixture. Deterministic in the seed.
Corpus synth_corpus(const SynthConfig& config);

inline constexpr const char* kReportSchema = "igsgenre.report/1";

nlohmann::json to_json(const EvaluationReport& report);
/// Throws PersistenceError.
EvaluationReport report_from_json(const nlohmann::json& doc);

/// Aligned-text tables, one per mixture count: rows are windows, columns
/// Flat, IGS, SMIGS, IIGS (variants present only); then confusion matrices.
std::string render_text(const EvaluationReport& report);
/// Machine-readable rendering (JSON) carrying the same numbers.
std::string render_json(const EvaluationReport& report);

}  // namespace igsgenre::eval
