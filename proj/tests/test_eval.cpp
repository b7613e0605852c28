#include <cmath>
#include <numeric>

#include "doctest.h"
#include "igsgenre/error.hpp"
#include "igsgenre/eval.hpp"
#include "igsgenre/rng.hpp"

using namespace igsgenre;
using namespace igsgenre::eval;

namespace {

double trace_ccr(const Confusion& c) {
  double tr = 0.0, total = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) {
      total += static_cast<double>(c[i][j]);
      if (i == j) tr += static_cast<double>(c[i][j]);
    }
  return total > 0 ? 100.0 * tr / total : 0.0;
}

SynthConfig small_synth(std::uint64_t seed, double overlap = 0.4) {
  SynthConfig s;
  s.n_genres = 3;
  s.clips_per_genre = 6;
  s.seconds_per_clip = 2.0;
  s.overlap = overlap;
  s.seed = seed;
  return s;
}

std::vector<const LabeledClip*> fold_clips(const Corpus& c, audio_io::Fold f) {
  std::vector<const LabeledClip*> out;
  for (const auto& clip : c.clips)
    if (clip.fold == f) out.push_back(&clip);
  return out;
}

}  // namespace

TEST_CASE("window specs") {
  CHECK(parse_window("0.5") == DecisionWindowSpec::of_seconds(0.5));
  CHECK(parse_window("3s") == DecisionWindowSpec::of_seconds(3));
  CHECK(parse_window("whole-clip") == DecisionWindowSpec::whole_clip());
  CHECK(parse_window("30s").label() == "30s");
  CHECK(parse_window("0.5").label() == "0.5s");
  CHECK(DecisionWindowSpec::whole_clip().label() == "whole-clip");
  CHECK(parse_window_list("0.5,1,3,30,whole-clip").size() == 5);
  CHECK_THROWS_AS(parse_window("-1"), ConfigError);
  CHECK_THROWS_AS(parse_window("fast"), ConfigError);
  CHECK_THROWS_AS(parse_window_list(""), ConfigError);
}

TEST_CASE("segmenting") {
  const auto half = segment_windows(98, DecisionWindowSpec::of_seconds(0.5));
  REQUIRE(half.size() == 1);
  CHECK(half[0] == WindowSlice{0, 50});
  CHECK(window_frames(DecisionWindowSpec::of_seconds(0.5), 98) == 50);
  CHECK(window_frames(DecisionWindowSpec::of_seconds(3), 998) == 300);
  CHECK(segment_windows(998, DecisionWindowSpec::of_seconds(3)).size() == 3);
  CHECK(segment_windows(2998, DecisionWindowSpec::of_seconds(30)).empty());
  const auto whole = segment_windows(2998, DecisionWindowSpec::whole_clip());
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].length == 2998);
  const auto single = segment_windows(5, DecisionWindowSpec::of_seconds(0.01));
  CHECK(single.size() == 5);
  CHECK_THROWS_AS(segment_windows(50, DecisionWindowSpec::of_seconds(0.005)), ConfigError);
  const auto w = segment_windows(320, DecisionWindowSpec::of_seconds(1));
  REQUIRE(w.size() == 3);
  CHECK(w[2] == WindowSlice{200, 100});
}

TEST_CASE("synthetic corpus") {
  const auto a = synth_corpus(small_synth(3));
  const auto b = synth_corpus(small_synth(3));
  REQUIRE(a.clips.size() == 18);
  CHECK(a.genre_labels.size() == 3);
  for (std::size_t i = 0; i < a.clips.size(); ++i) {
    CHECK(a.clips[i].frames == b.clips[i].frames);
    CHECK(a.clips[i].frames.cols() == 17);
    CHECK(a.clips[i].frames.rows() == synth_frames_per_clip(2.0));
  }
  CHECK(synth_frames_per_clip(10.0) == 998);
  CHECK(synth_corpus(small_synth(4)).clips[0].frames != a.clips[0].frames);
}

TEST_CASE("folds") {
  auto c = synth_corpus(small_synth(1));
  assign_missing_folds(c, 9);
  for (std::size_t g = 0; g < 3; ++g) {
    int a = 0, b = 0;
    for (const auto& clip : c.clips)
      if (clip.genre == g) (*clip.fold == audio_io::Fold::A ? a : b)++;
    CHECK(a == 3);
    CHECK(b == 3);
  }
  const auto t = training_set(c, audio_io::Fold::A);
  CHECK(t.labels == c.genre_labels);
  CHECK(t.frames[0].rows() == 3 * synth_frames_per_clip(2.0));
}

TEST_CASE("accumulation with arbitrary decision rules") {
  auto c = synth_corpus(small_synth(2));
  std::vector<const LabeledClip*> all;
  for (const auto& clip : c.clips) all.push_back(&clip);
  const auto specs = parse_window_list("0.5,1");

  SUBCASE("oracle decisions give 100%") {
    const auto ev = evaluate_decisions(
        3, all, specs, [&](std::size_t clip, std::size_t, std::size_t) { return Decision{all[clip]->genre, {}}; }, false);
    for (const auto& e : ev) CHECK(e.ccr == 100.0);
  }
  SUBCASE("uniform random decisions") {
    // 9 classes, hashed per window so the rule is thread safe and repeatable.
    SynthConfig s = small_synth(5);
    s.n_genres = 9;
    s.clips_per_genre = 20;
    s.seconds_per_clip = 10.0;
    auto big = synth_corpus(s);
    std::vector<const LabeledClip*> clips;
    for (const auto& clip : big.clips) clips.push_back(&clip);
    const auto ev = evaluate_decisions(
        9, clips, {DecisionWindowSpec::of_seconds(0.5)},
        [](std::size_t clip, std::size_t begin, std::size_t) {
          Rng rng(derive_seed(clip, begin));
          return Decision{static_cast<std::size_t>(rng.index(9)), {}};
        },
        true);
    const double n = static_cast<double>(ev[0].windows);
    const double p = 1.0 / 9.0;
    const double sigma = 100.0 * std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(ev[0].ccr - 100.0 * p) < 3 * sigma);
  }
  SUBCASE("parallel and serial agree; confusion invariants") {
    auto rule = [&](std::size_t clip, std::size_t begin, std::size_t) {
      return Decision{(all[clip]->genre + begin / 50) % 3, {begin % 2, 0, 1}};
    };
    const auto s = evaluate_decisions(3, all, specs, rule, false);
    const auto p = evaluate_decisions(3, all, specs, rule, true);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      CHECK(s[i].confusion == p[i].confusion);
      CHECK(s[i].eliminated_fraction == p[i].eliminated_fraction);
      CHECK(std::abs(s[i].ccr - trace_ccr(s[i].confusion)) < 1e-9);
      const std::uint64_t per_clip = segment_windows(all[0]->frames.rows(), specs[i]).size();
      for (const auto& row : s[i].confusion) CHECK(std::accumulate(row.begin(), row.end(), std::uint64_t{0}) == 6 * per_clip);
    }
  }
  SUBCASE("clips shorter than the window are reported") {
    const auto ev = evaluate_decisions(
        3, all, {DecisionWindowSpec::of_seconds(30)},
        [](std::size_t, std::size_t, std::size_t) { return Decision{0, {}}; }, false);
    CHECK(ev[0].empty);
    CHECK(ev[0].windows == 0);
    CHECK(ev[0].short_clips.size() == all.size());
  }
}

TEST_CASE("evaluate with trained classifiers") {
  auto c = synth_corpus(small_synth(7, 0.0));
  assign_missing_folds(c, 7);
  igs::ClassifierConfig cfg;
  cfg.k = 4;
  cfg.em.seed = 7;
  const auto clf = igs::train_flat(training_set(c, audio_io::Fold::A), cfg);
  const auto test = fold_clips(c, audio_io::Fold::B);
  const auto ev = evaluate(clf, test, parse_window_list("0.5,1"));
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].ccr > 95.0);
  CHECK(std::abs(ev[0].ccr - trace_ccr(ev[0].confusion)) < 1e-9);
  for (double e : ev[0].eliminated_fraction) CHECK(e == 0.0);

  // Frame-level accuracy without overlap beats the overlapping corpus.
  auto frame_acc = [](const Corpus& corpus) {
    igs::ClassifierConfig k4;
    k4.k = 4;
    const auto m = igs::train_flat(training_set(corpus, audio_io::Fold::A), k4);
    std::size_t ok = 0, total = 0;
    for (const auto& clip : corpus.clips) {
      if (clip.fold != audio_io::Fold::B) continue;
      const auto s = igs::score_frames(m, clip.frames);
      for (std::size_t r = 0; r < s.rows(); ++r, ++total) {
        std::size_t best = 0;
        for (std::size_t g = 1; g < s.cols(); ++g)
          if (s(r, g) > s(r, best)) best = g;
        ok += best == clip.genre;
      }
    }
    return static_cast<double>(ok) / total;
  };
  auto overlapping = synth_corpus(small_synth(7, 0.4));
  assign_missing_folds(overlapping, 7);
  const double clean = frame_acc(c), mixed = frame_acc(overlapping);
  CHECK(clean > 0.95);
  CHECK(mixed < clean);
}

TEST_CASE("cross validation") {
  CvConfig cv;
  cv.variants = {igs::Variant::flat, igs::Variant::igs};
  cv.mixtures = {2};
  cv.classifier.em.seed = 3;
  cv.classifier.em.max_iters = 20;
  cv.windows = parse_window_list("0.5,1");
  cv.fold_seed = 3;
  const auto corpus = synth_corpus(small_synth(3));
  const auto r = cross_validate(corpus, cv);
  CHECK(r.genre_labels == corpus.genre_labels);
  for (auto v : cv.variants)
    for (const auto& w : cv.windows) {
      const auto* cell = r.find(v, 2, w);
      REQUIRE(cell != nullptr);
      REQUIRE(cell->folds.size() == 2);
      CHECK(cell->folds[0].train_fold == "A");
      CHECK(cell->folds[0].test_fold == "B");
      CHECK(cell->folds[1].train_fold == "B");
      CHECK(std::abs(cell->ccr - (cell->folds[0].ccr + cell->folds[1].ccr) / 2) < 1e-9);
      CHECK(cell->ccr >= 0.0);
      CHECK(cell->ccr <= 100.0);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
          CHECK(cell->confusion[i][j] == cell->folds[0].confusion[i][j] + cell->folds[1].confusion[i][j]);
    }
  CHECK(cross_validate(corpus, cv).cells.size() == r.cells.size());
  CHECK(render_json(cross_validate(corpus, cv)) == render_json(r));

  SUBCASE("report documents") {
    const auto back = report_from_json(to_json(r));
    CHECK(render_json(back) == render_json(r));
    CHECK(render_text(back) == render_text(r));
    const auto text = render_text(r);
    CHECK(text.find("Flat") < text.find("IGS"));
    CHECK(text.find("Confusion") != std::string::npos);
    auto doc = to_json(r);
    doc["schema_version"] = "igsgenre.report/0";
    CHECK_THROWS_AS(report_from_json(doc), PersistenceError);
  }
}

TEST_CASE("column order in the text table") {
  EvaluationReport r;
  r.genre_labels = {"a", "b"};
  const auto w = DecisionWindowSpec::of_seconds(1);
  for (auto v : {igs::Variant::iigs, igs::Variant::flat, igs::Variant::smigs, igs::Variant::igs}) {
    WindowEvaluation e;
    e.train_fold = "A";
    e.test_fold = "B";
    e.confusion = {{1, 0}, {0, 1}};
    e.windows = 2;
    e.ccr = 100.0;
    e.empty = false;
    e.eliminated_fraction = {0.0, 0.0};
    r.add(v, 8, w, e);
  }
  const auto text = render_text(r);
  const auto header = text.substr(0, text.find('\n', text.find("Flat")));
  const auto f = header.find("Flat"), i = header.find("IGS"), s = header.find("SMIGS"), ii = header.find("IIGS");
  REQUIRE(f != std::string::npos);
  CHECK(f < i);
  CHECK(i < s);
  CHECK(s < ii);
}

TEST_CASE("standard synthetic corpus: 30-frame windows") {
  SynthConfig s;
  s.seed = 1;
  CvConfig cv;
  cv.variants = {igs::Variant::flat, igs::Variant::igs, igs::Variant::iigs};
  cv.mixtures = {16};
  cv.classifier.iterations = 3;
  cv.classifier.em.seed = 1;
  cv.fold_seed = 1;
  cv.windows = {DecisionWindowSpec::of_seconds(0.3)};
  const auto r = cross_validate(synth_corpus(s), cv);
  const double flat = r.find(igs::Variant::flat, 16, cv.windows[0])->ccr;
  const double with_igs = r.find(igs::Variant::igs, 16, cv.windows[0])->ccr;
  const double iigs = r.find(igs::Variant::iigs, 16, cv.windows[0])->ccr;
  INFO("flat " << flat << " igs " << with_igs << " iigs " << iigs);
  CHECK(with_igs >= flat);
  CHECK(iigs >= with_igs - 2.0);
  CHECK(iigs >= flat);
}
