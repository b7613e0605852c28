#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "igsgenre/audio_io.hpp"
#include "igsgenre/cli/cli.hpp"
#include "igsgenre/cli/config.hpp"
#include "igsgenre/eval.hpp"
#include "igsgenre/feature_dump.hpp"
#include "igsgenre/igs.hpp"
#include "json.hpp"

using namespace igsgenre;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("igsgenre_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

void write_tone(const std::string& path, double hz, double seconds) {
  const int sr = 16000;
  std::vector<double> x(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr);
  const auto bytes = audio_io::encode_wav(std::span<const double>(x), sr);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Small synthetic corpus on disk: dumps plus manifest.tsv in `dir`.
void synth_small(const std::string& dir) {
  const auto r = run_cli({"synth", "--out", dir, "--genres", "3", "--clips", "4", "--seconds", "2", "--seed", "5"});
  REQUIRE(r.code == 0);
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(IGSGENRE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("usage errors exit 1, help exits 0") {
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"dance"}).code == 1);
  CHECK(run_cli({"train", "--bogus"}).code == 1);
  CHECK(run_cli({"train"}).code == 1);
  const auto help = run_cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("extract") != std::string::npos);
  CHECK(run_cli({"report", "--in", "x.json", "--format", "xml"}).code == 1);
}

TEST_CASE("extract: two clips, determinism, strict failures") {
  TempDir t("extract");
  write_tone(t / "a.wav", 440.0, 0.5);
  write_tone(t / "b.wav", 1000.0, 0.5);
  write_file(t / "list.tsv", "a.wav\trock\nb.wav\tjazz\n");

  auto r = run_cli({"extract", "--manifest", t / "list.tsv", "--out", t / "f1"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(t / "f1/a.feat"));
  CHECK(fs::exists(t / "f1/b.feat"));
  const auto a = dsp::read_feature_dump_file(t / "f1/a.feat");
  CHECK(a.frames.cols() == 17);
  CHECK(a.frames.rows() == 48);

  REQUIRE(run_cli({"extract", "--manifest", t / "list.tsv", "--out", t / "f1"}).code == 0);
  REQUIRE(run_cli({"extract", "--manifest", t / "list.tsv", "--out", t / "f2", "--jobs", "2"}).code == 0);
  for (const char* name : {"a.feat", "b.feat", "extract_config.json"})
    CHECK(slurp(t / (std::string("f1/") + name)) == slurp(t / (std::string("f2/") + name)));

  write_file(t / "bad.tsv", "a.wav\trock\nmissing.wav\tjazz\n");
  r = run_cli({"extract", "--manifest", t / "bad.tsv", "--out", t / "f3", "--strict"});
  CHECK(r.code == 2);
  CHECK(r.err.find("missing.wav") != std::string::npos);
  r = run_cli({"extract", "--manifest", t / "bad.tsv", "--out", t / "f4"});
  CHECK(r.code == 0);
  CHECK(r.err.find("missing.wav") != std::string::npos);
  CHECK(fs::exists(t / "f4/a.feat"));

  CHECK(run_cli({"extract", "--manifest", t / "nope.tsv", "--out", t / "f5"}).code == 2);
}

TEST_CASE("synth writes dumps, manifest and config") {
  TempDir t("synth");
  synth_small(t / "s");
  const auto m = audio_io::load_manifest_file(t / "s/manifest.tsv");
  CHECK(m.entries.size() == 12);
  CHECK(m.genre_set.size() == 3);
  const auto cfg = nlohmann::json::parse(slurp(t / "s/synth_config.json"));
  CHECK(cfg.at("seed") == 5);
  const auto clip = dsp::read_feature_dump_file(t / ("s/" + dsp::source_id_for(m.entries[0].clip_path) + ".feat"));
  CHECK(clip.frames.rows() == eval::synth_frames_per_clip(2.0));
}

TEST_CASE("train: round trip, determinism, T = 0 rejected") {
  TempDir t("train");
  synth_small(t / "s");
  const std::vector<std::string> base = {"train", "--features", t / "s", "--manifest", t / "s/manifest.tsv",
                                         "--mixtures", "2"};

  auto args = base;
  args.insert(args.end(), {"--variant", "flat", "--no-cv", "--out", t / "m1"});
  REQUIRE(run_cli(args).code == 0);
  const auto text = slurp(t / "m1/classifier_flat_k2_all.json");
  const auto cls = igs::deserialize_classifier(text);
  CHECK(cls.variant == igs::Variant::flat);
  CHECK(cls.genre_models.size() == 3);
  CHECK(cls.provenance.at("train_fold") == "all");
  CHECK(cls.provenance.at("train_clips").size() == 12);
  CHECK(cls.provenance.at("pipeline").at("mixtures") == nlohmann::json::array({2}));
  const auto clip = dsp::read_feature_dump_file(t / "s/synth_g1_c000.feat");
  CHECK(igs::classify_window(cls, clip.frames).genre == 1);

  args = base;
  args.insert(args.end(), {"--variant", "igs,iigs", "--iterations", "2", "--out", t / "m2"});
  REQUIRE(run_cli(args).code == 0);
  args.back() = t / "m3";
  REQUIRE(run_cli(args).code == 0);
  for (const char* name : {"classifier_igs_k2_A.json", "classifier_igs_k2_B.json", "classifier_iigs_k2_A.json",
                           "classifier_iigs_k2_B.json"}) {
    INFO(name);
    REQUIRE(fs::exists(t / (std::string("m2/") + name)));
    CHECK(slurp(t / (std::string("m2/") + name)) == slurp(t / (std::string("m3/") + name)));
  }

  args = base;
  args.insert(args.end(), {"--variant", "iigs", "--iterations", "0", "--out", t / "m4"});
  const auto r = run_cli(args);
  CHECK(r.code == 1);
  CHECK(r.err.find("T must be >= 1") != std::string::npos);

  args = base;
  args.insert(args.end(), {"--variant", "flat", "--out", t / "m5"});
  args[2] = t / "nowhere";
  CHECK(run_cli(args).code == 2);
}

TEST_CASE("evaluate: grid shape, library identity, overlap guard, report rendering") {
  TempDir t("evaluate");
  synth_small(t / "s");
  const std::vector<std::string> data = {"--features", t / "s", "--manifest", t / "s/manifest.tsv"};
  auto cmd = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), data.begin(), data.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return run_cli(head);
  };

  REQUIRE(cmd({"train"}, {"--variant", "flat,igs", "--mixtures", "2", "--out", t / "m"}).code == 0);
  const std::vector<std::string> models = {t / "m/classifier_flat_k2_A.json", t / "m/classifier_flat_k2_B.json",
                                           t / "m/classifier_igs_k2_A.json", t / "m/classifier_igs_k2_B.json"};
  std::vector<std::string> tail = {"--windows", "0.5,1,1.5", "--out", t / "r", "--models"};
  tail.insert(tail.end(), models.begin(), models.end());
  auto r = cmd({"evaluate"}, tail);
  REQUIRE(r.code == 0);
  const auto report = eval::report_from_json(nlohmann::json::parse(slurp(t / "r/report.json")));
  CHECK(report.cells.size() == 6);
  CHECK(fs::exists(t / "r/report.txt"));
  CHECK(r.out.find("Flat") != std::string::npos);

  // Same numbers as the library-level cross-validation on the same data.
  eval::Corpus corpus;
  const auto m = audio_io::load_manifest_file(t / "s/manifest.tsv");
  corpus.genre_labels = m.genre_set;
  for (const auto& e : m.entries) {
    auto fc = dsp::read_feature_dump_file(t / ("s/" + dsp::source_id_for(e.clip_path) + ".feat"));
    corpus.clips.push_back({fc.source_id, static_cast<std::size_t>(m.genre_index(e.genre_label)), std::move(fc.frames), {}});
  }
  cli::PipelineConfig pc;
  pc.mixtures = {2};
  pc.variants = {igs::Variant::flat, igs::Variant::igs};
  pc.windows = eval::parse_window_list("0.5,1,1.5");
  const auto lib = eval::cross_validate(corpus, pc.cv_config());
  REQUIRE(lib.cells.size() == report.cells.size());
  for (const auto& cell : lib.cells) {
    const auto* mine = report.find(cell.variant, cell.k, cell.window);
    REQUIRE(mine != nullptr);
    CHECK(mine->ccr == cell.ccr);
    CHECK(mine->confusion == cell.confusion);
  }

  // Cross-validation mode gives the same grid.
  r = cmd({"evaluate"}, {"--variant", "flat,igs", "--mixtures", "2", "--windows", "0.5,1,1.5", "--out", t / "cv"});
  REQUIRE(r.code == 0);
  const auto cv = eval::report_from_json(nlohmann::json::parse(slurp(t / "cv/report.json")));
  for (const auto& cell : lib.cells) CHECK(cv.find(cell.variant, cell.k, cell.window)->ccr == cell.ccr);

  // Fold-A classifier on fold A is refused unless explicitly allowed.
  r = cmd({"evaluate"}, {"--models", models[0], "--test-fold", "A", "--out", t / "r2"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--allow-train-test-overlap") != std::string::npos);
  CHECK(cmd({"evaluate"}, {"--models", models[0], "--test-fold", "A", "--allow-train-test-overlap", "--out", t / "r2"})
            .code == 0);

  // A window longer than every clip yields a warning, not a failure.
  r = cmd({"evaluate"}, {"--models", models[0], "--windows", "30", "--out", t / "r3"});
  CHECK(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);

  auto text = run_cli({"report", "--in", t / "r/report.json"});
  CHECK(text.code == 0);
  CHECK(text.out == slurp(t / "r/report.txt"));
  auto js = run_cli({"report", "--in", t / "r/report.json", "--format", "json"});
  CHECK(js.code == 0);
  CHECK(js.out == slurp(t / "r/report.json"));
  CHECK(run_cli({"report", "--in", t / "r/missing.json"}).code == 2);
}

TEST_CASE("config file: precedence and validation") {
  TempDir t("config");
  write_file(t / "c.json", R"({"seed": 9, "mixtures": [3], "model": {"iterations": 2}})");
  const auto pc = cli::load_config_file(t / "c.json");
  CHECK(pc.seed == 9);
  CHECK(pc.mixtures == std::vector<std::size_t>{3});
  CHECK(pc.classifier.iterations == 2);
  CHECK(pc.classifier.k_score == 4);

  const auto round = cli::merge_config(cli::PipelineConfig{}, cli::to_json(pc));
  CHECK(cli::to_json(round) == cli::to_json(pc));

  write_file(t / "bad.json", R"({"mixturez": [3]})");
  CHECK_THROWS_AS(cli::load_config_file(t / "bad.json"), ConfigError);
  write_file(t / "bad2.json", R"({"dsp": {"hop_ms": "ten"}})");
  CHECK_THROWS_AS(cli::load_config_file(t / "bad2.json"), ConfigError);

  synth_small(t / "s");
  const std::vector<std::string> base = {"train", "--config", t / "c.json", "--features", t / "s",
                                         "--manifest", t / "s/manifest.tsv", "--variant", "flat"};
  auto args = base;
  args.insert(args.end(), {"--out", t / "m1"});
  REQUIRE(run_cli(args).code == 0);
  const auto from_file = igs::deserialize_classifier(slurp(t / "m1/classifier_flat_k3_A.json"));
  CHECK(from_file.config.em.seed == 9);

  args = base;
  args.insert(args.end(), {"--mixtures", "2", "--seed", "4", "--out", t / "m2"});
  REQUIRE(run_cli(args).code == 0);
  const auto overridden = igs::deserialize_classifier(slurp(t / "m2/classifier_flat_k2_A.json"));
  CHECK(overridden.config.em.seed == 4);
  CHECK(overridden.provenance.at("pipeline").at("model").at("iterations") == 2);

  args = base;
  args[2] = t / "bad.json";
  args.insert(args.end(), {"--out", t / "m3"});
  CHECK(run_cli(args).code == 1);
}

TEST_CASE("installed tool maps exit codes") {
  TempDir t("tool");
  CHECK(run_tool("") == 1);
  CHECK(run_tool("--help") == 0);
  CHECK(run_tool("synth --out " + (t / "s") + " --genres 2 --clips 2 --seconds 1") == 0);
  CHECK(run_tool("train --features " + (t / "s") + " --manifest " + (t / "s/manifest.tsv") +
                 " --variant iigs --iterations 0 --out " + (t / "m")) == 1);
  CHECK(run_tool("report --in " + (t / "none.json")) == 2);
}
