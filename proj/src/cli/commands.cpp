#include <omp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "igsgenre/audio_io.hpp"
#include "igsgenre/cli/cli.hpp"
#include "igsgenre/cli/config.hpp"
#include "igsgenre/error.hpp"
#include "igsgenre/eval.hpp"
#include "igsgenre/feature_dump.hpp"
#include "igsgenre/igs.hpp"

namespace igsgenre::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::vector<std::size_t> mixtures;
  std::vector<std::string> variants;
  std::size_t iterations = 0;
  std::string windows;
  bool strict = false;

  std::string manifest, features, out, in, format = "text";
  std::vector<std::string> models;
  std::string test_fold;
  bool no_cv = false;
  bool allow_overlap = false;

  std::size_t genres = 0, clips = 0;
  double overlap = 0.0, seconds = 0.0;
};

struct Flags {
  CLI::Option* seed = nullptr;
  CLI::Option* mixtures = nullptr;
  CLI::Option* variants = nullptr;
  CLI::Option* iterations = nullptr;
  CLI::Option* windows = nullptr;
  CLI::Option* genres = nullptr;
  CLI::Option* clips = nullptr;
  CLI::Option* overlap = nullptr;
  CLI::Option* seconds = nullptr;
};

bool given(const CLI::Option* o) { return o != nullptr && o->count() > 0; }

PipelineConfig effective_config(const Options& o, const Flags& f) {
  PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : load_config_file(o.config_path);
  if (given(f.seed)) c.seed = o.seed;
  if (given(f.mixtures)) c.mixtures = o.mixtures;
  if (given(f.variants)) c.variants = parse_variant_list(o.variants);
  if (given(f.iterations)) c.classifier.iterations = o.iterations;
  if (given(f.windows)) c.windows = eval::parse_window_list(o.windows);
  if (given(f.genres)) c.synth.n_genres = o.genres;
  if (given(f.clips)) c.synth.clips_per_genre = o.clips;
  if (given(f.overlap)) c.synth.overlap = o.overlap;
  if (given(f.seconds)) c.synth.seconds_per_clip = o.seconds;
  if (!c.mixtures.empty()) c.classifier.k = c.mixtures.front();
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

fs::path clip_location(const std::string& manifest_path, const std::string& clip_path) {
  const fs::path p(clip_path);
  if (p.is_absolute()) return p;
  return fs::path(manifest_path).parent_path() / p;
}

/// Manifest entries joined with their feature dumps; folds from the manifest
/// or, when incomplete, from the seeded split.
eval::Corpus load_corpus(const std::string& manifest_path, const std::string& features_dir, std::uint64_t seed) {
  const auto manifest = audio_io::load_manifest_file(manifest_path);
  if (manifest.entries.empty()) throw DataError("manifest has no entries: " + manifest_path);
  eval::Corpus corpus;
  corpus.genre_labels = manifest.genre_set;
  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    eval::LabeledClip clip;
    clip.source_id = dsp::source_id_for(e.clip_path);
    if (!seen.insert(clip.source_id).second) throw DuplicateEntryError("two manifest entries map to clip id " + clip.source_id);
    const fs::path dump = fs::path(features_dir) / (clip.source_id + ".feat");
    auto fc = dsp::read_feature_dump_file(dump.string());
    clip.frames = std::move(fc.frames);
    clip.genre = static_cast<std::size_t>(manifest.genre_index(e.genre_label));
    clip.fold = e.fold;
    corpus.clips.push_back(std::move(clip));
  }
  eval::assign_missing_folds(corpus, seed);
  return corpus;
}

void set_jobs(int jobs) {
  if (jobs < 0) throw ConfigError("--jobs must be >= 0");
  if (jobs > 0) omp_set_num_threads(jobs);
}

int cmd_extract(const Options& o, const Flags& f, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = effective_config(o, f);
  const auto manifest = audio_io::load_manifest_file(o.manifest);
  ensure_dir(o.out);
  std::size_t ok = 0;
  std::vector<std::string> failed;
  json clips = json::array();
  for (const auto& e : manifest.entries) {
    const fs::path path = clip_location(o.manifest, e.clip_path);
    const std::string id = dsp::source_id_for(e.clip_path);
    try {
      const auto clip = audio_io::read_wav_file(path.string());
      const auto features = dsp::extract_timbral_features(clip, cfg.dsp);
      if (features.empty()) throw TooShortError("clip shorter than one frame");
      std::ostringstream dump;
      dsp::write_feature_dump(dump, id, features);
      write_text(fs::path(o.out) / (id + ".feat"), dump.str());
      clips.push_back({{"source_id", id}, {"clip_path", e.clip_path}, {"frames", features.size()}});
      ++ok;
    } catch (const DataError& ex) {
      err << "error: " << path.string() << ": " << ex.what() << '\n';
      failed.push_back(path.string());
    }
  }
  json doc = {{"config", to_json(cfg)}, {"clips", clips}};
  write_text(fs::path(o.out) / "extract_config.json", doc.dump(1) + "\n");
  out << "extracted " << ok << " of " << manifest.entries.size() << " clips into " << o.out << '\n';
  if (!failed.empty()) {
    err << (o.strict ? "error: " : "warning: ") << failed.size() << " clip(s) failed:";
    for (const auto& p : failed) err << ' ' << p;
    err << '\n';
    if (o.strict || ok == 0) return kData;
  }
  return kOk;
}

int cmd_synth(const Options& o, const Flags& f, std::ostream& out, std::ostream&) {
  PipelineConfig cfg = effective_config(o, f);
  if (given(f.seed)) cfg.synth.seed = o.seed;
  const auto corpus = eval::synth_corpus(cfg.synth);
  ensure_dir(o.out);
  audio_io::DatasetManifest manifest;
  manifest.genre_set = corpus.genre_labels;
  for (const auto& c : corpus.clips) {
    std::ostringstream dump;
    dsp::write_feature_dump(dump, dsp::FeatureClip{c.source_id, c.frames});
    write_text(fs::path(o.out) / (c.source_id + ".feat"), dump.str());
    manifest.entries.push_back({c.source_id + ".wav", corpus.genre_labels[c.genre], std::nullopt});
  }
  write_text(fs::path(o.out) / "manifest.tsv", audio_io::format_manifest(manifest));
  write_text(fs::path(o.out) / "synth_config.json", eval::to_json(cfg.synth).dump(1) + "\n");
  out << "wrote " << corpus.clips.size() << " synthetic clips (" << corpus.genre_labels.size() << " genres) to " << o.out
      << '\n';
  return kOk;
}

std::string document_name(igs::Variant v, std::size_t k, const std::string& fold) {
  return "classifier_" + igs::to_string(v) + "_k" + std::to_string(k) + "_" + fold + ".json";
}

int cmd_train(const Options& o, const Flags& f, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = effective_config(o, f);
  const auto corpus = load_corpus(o.manifest, o.features, cfg.seed);
  ensure_dir(o.out);

  struct Part {
    std::string name;
    std::optional<audio_io::Fold> fold;
  };
  std::vector<Part> parts;
  if (o.no_cv) parts.push_back({"all", std::nullopt});
  else parts = {{"A", audio_io::Fold::A}, {"B", audio_io::Fold::B}};

  for (const auto& part : parts) {
    igs::TrainingSet set;
    json ids = json::array();
    if (part.fold) {
      set = eval::training_set(corpus, *part.fold);
    } else {
      eval::Corpus all = corpus;
      for (auto& c : all.clips) c.fold = audio_io::Fold::A;
      set = eval::training_set(all, audio_io::Fold::A);
    }
    for (const auto& c : corpus.clips)
      if (!part.fold || c.fold == part.fold) ids.push_back(c.source_id);

    for (std::size_t k : cfg.mixtures) {
      for (igs::Variant v : cfg.variants) {
        igs::IgsClassifier cls = igs::train(v, set, cfg.classifier_for(k));
        cls.provenance = {{"train_fold", part.name}, {"train_clips", ids}, {"pipeline", to_json(cfg)}};
        for (const auto& flag : cls.degenerate_flags)
          err << "warning: " << igs::to_string(v) << " k=" << k << " fold " << part.name << ": " << flag.component
              << " degenerate (" << flag.reason << ")\n";
        const auto name = document_name(v, k, part.name);
        write_text(fs::path(o.out) / name, igs::serialize(cls) + "\n");
        out << "wrote " << (fs::path(o.out) / name).string() << '\n';
      }
    }
  }
  return kOk;
}

void warn_empty(const eval::EvaluationReport& report, std::ostream& err) {
  for (const auto& cell : report.cells)
    for (const auto& fold : cell.folds)
      if (fold.windows == 0)
        err << "warning: window " << cell.window.label() << " yields no decisions for " << igs::to_string(cell.variant)
            << " k=" << cell.k << " test fold " << fold.test_fold << '\n';
}

int cmd_evaluate(const Options& o, const Flags& f, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = effective_config(o, f);
  const auto corpus = load_corpus(o.manifest, o.features, cfg.seed);
  eval::EvaluationReport report;
  json config = {{"pipeline", to_json(cfg)}};

  if (o.models.empty()) {
    report = eval::cross_validate(corpus, cfg.cv_config());
    config["mode"] = "cross_validate";
  } else {
    report.genre_labels = corpus.genre_labels;
    config["mode"] = "models";
    config["models"] = json::array();
    for (const auto& path : o.models) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw DataError("cannot open classifier document: " + path);
      std::stringstream text;
      text << in.rdbuf();
      const auto cls = igs::deserialize_classifier(text.str());
      if (cls.genre_labels != corpus.genre_labels)
        throw DataError(path + ": genre labels do not match the manifest");

      const std::string train_fold = cls.provenance.value("train_fold", std::string("-"));
      std::string test_fold = o.test_fold;
      if (test_fold.empty()) {
        if (train_fold == "A") test_fold = "B";
        else if (train_fold == "B") test_fold = "A";
        else throw ConfigError(path + ": trained on fold '" + train_fold + "'; pass --test-fold A or B");
      }
      if (test_fold != "A" && test_fold != "B") throw ConfigError("--test-fold must be A or B");
      const auto fold = test_fold == "A" ? audio_io::Fold::A : audio_io::Fold::B;

      std::set<std::string> trained;
      if (cls.provenance.contains("train_clips"))
        for (const auto& id : cls.provenance.at("train_clips")) trained.insert(id.get<std::string>());
      std::vector<const eval::LabeledClip*> test;
      std::size_t shared = 0;
      for (const auto& c : corpus.clips) {
        if (c.fold != fold) continue;
        if (trained.count(c.source_id) > 0) ++shared;
        if (c.frames.cols() != cls.dim())
          throw DimensionError(c.source_id + ": feature dimension " + std::to_string(c.frames.cols()) +
                               " does not match classifier dimension " + std::to_string(cls.dim()));
        test.push_back(&c);
      }
      if (shared > 0 && !o.allow_overlap)
        throw ConfigError(path + ": " + std::to_string(shared) + " test clip(s) of fold " + test_fold +
                          " were used for training (train and evaluate must split folds with the same --seed); pass "
                          "--allow-train-test-overlap to evaluate anyway");
      if (test.empty()) throw DataError("fold " + test_fold + " has no clips");

      auto evals = eval::evaluate(cls, test, cfg.windows, cfg.hop_seconds());
      for (std::size_t s = 0; s < cfg.windows.size(); ++s) {
        evals[s].train_fold = train_fold;
        evals[s].test_fold = test_fold;
        report.add(cls.variant, cls.config.k, cfg.windows[s], std::move(evals[s]));
      }
      config["models"].push_back(fs::path(path).filename().string());
    }
  }
  config["cv"] = report.config;
  report.config = config;
  warn_empty(report, err);

  ensure_dir(o.out);
  write_text(fs::path(o.out) / "report.json", eval::render_json(report));
  write_text(fs::path(o.out) / "report.txt", eval::render_text(report));
  out << eval::render_text(report);
  return kOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  std::ifstream in(o.in, std::ios::binary);
  if (!in) throw DataError("cannot open report: " + o.in);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw PersistenceError(o.in + ": " + e.what());
  }
  const auto report = eval::report_from_json(doc);
  if (o.format == "json") out << eval::render_json(report);
  else out << eval::render_text(report);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  Flags fx, fy, ft, fe;
  CLI::App app{"Music genre classification with inter-genre similarity modelling", "igsgenre"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "igsgenre 0.1.0");

  auto common = [&](CLI::App* sub, Flags& f) {
    sub->add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    f.seed = sub->add_option("--seed", o.seed, "Base seed");
    sub->add_option("--jobs", o.jobs, "Worker threads (0 = OpenMP default)");
  };
  auto modelling = [&](CLI::App* sub, Flags& f) {
    f.mixtures = sub->add_option("--mixtures", o.mixtures, "Mixture counts, e.g. 8,16,32")->delimiter(',');
    f.variants = sub->add_option("--variant", o.variants, "flat, igs, iigs, smigs (comma-separated)")->delimiter(',');
    f.iterations = sub->add_option("--iterations", o.iterations, "IIGS iterations T");
  };

  auto* extract = app.add_subcommand("extract", "Extract frame features for every manifest clip");
  common(extract, fx);
  extract->add_option("--manifest", o.manifest, "Manifest (path<TAB>genre[<TAB>fold])")->required();
  extract->add_option("--out", o.out, "Output directory for feature dumps")->required();
  extract->add_flag("--strict", o.strict, "Exit with status 2 if any clip fails");

  auto* synth = app.add_subcommand("synth", "Write a synthetic feature corpus and manifest");
  common(synth, fy);
  synth->add_option("--out", o.out, "Output directory")->required();
  fy.genres = synth->add_option("--genres", o.genres, "Number of genres");
  fy.overlap = synth->add_option("--overlap", o.overlap, "Fraction of confusable frames");
  fy.clips = synth->add_option("--clips", o.clips, "Clips per genre");
  fy.seconds = synth->add_option("--seconds", o.seconds, "Seconds per clip");

  auto* train = app.add_subcommand("train", "Train classifiers per fold");
  common(train, ft);
  modelling(train, ft);
  train->add_option("--features", o.features, "Directory of feature dumps")->required();
  train->add_option("--manifest", o.manifest, "Manifest")->required();
  train->add_option("--out", o.out, "Output directory for classifier documents")->required();
  train->add_flag("--no-cv", o.no_cv, "Train once on all clips instead of per fold");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate classifiers and write reports");
  common(evaluate, fe);
  modelling(evaluate, fe);
  evaluate->add_option("--features", o.features, "Directory of feature dumps")->required();
  evaluate->add_option("--manifest", o.manifest, "Manifest")->required();
  evaluate->add_option("--models", o.models, "Classifier documents (default: train and cross-validate)");
  evaluate->add_option("--out", o.out, "Output directory for report.json and report.txt")->required();
  fe.windows = evaluate->add_option("--windows", o.windows, "Decision windows, e.g. 0.5,1,3,30,whole-clip");
  evaluate->add_option("--test-fold", o.test_fold, "Fold to test on (default: the one not trained on)");
  evaluate->add_flag("--allow-train-test-overlap", o.allow_overlap, "Permit testing on training clips");

  auto* report = app.add_subcommand("report", "Render a saved report");
  report->add_option("--in", o.in, "report.json")->required();
  report->add_option("--format", o.format, "text or json")->check(CLI::IsMember({"text", "json"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    set_jobs(o.jobs);
    if (extract->parsed()) return cmd_extract(o, fx, out, err);
    if (synth->parsed()) return cmd_synth(o, fy, out, err);
    if (train->parsed()) return cmd_train(o, ft, out, err);
    if (evaluate->parsed()) return cmd_evaluate(o, fe, out, err);
    if (report->parsed()) return cmd_report(o, out);
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace igsgenre::cli
