// Serial references against the OpenMP kernels.
//   igsgenre_bench --benchmark_filter=Score

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cmath>

#include "igsgenre/dsp.hpp"
#include "igsgenre/gmm.hpp"
#include "igsgenre/rng.hpp"

using namespace igsgenre;

namespace {

audio_io::AudioClip noise_clip(double seconds) {
  Rng rng(1);
  audio_io::AudioClip c;
  c.sample_rate = 16000;
  c.samples.resize(static_cast<std::size_t>(seconds * c.sample_rate));
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    c.samples[i] = 0.3 * std::sin(0.02 * static_cast<double>(i)) + rng.normal(0.0, 0.1);
  return c;
}

Matrix random_frames(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, dim);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

struct Models {
  std::vector<gmm::Gmm> owned;
  std::vector<const gmm::Gmm*> ptrs;
  Matrix frames;
};

const Models& models() {
  static const Models m = [] {
    Models out;
    gmm::EmConfig cfg;
    cfg.n_components = 16;
    cfg.max_iters = 5;
    for (std::uint64_t g = 0; g < 6; ++g) {
      cfg.seed = g;
      out.owned.push_back(gmm::fit_gmm(random_frames(2000, dsp::kFeatureDim, g), cfg));
    }
    for (const auto& g : out.owned) out.ptrs.push_back(&g);
    out.frames = random_frames(30000, dsp::kFeatureDim, 99);
    return out;
  }();
  return m;
}

void threads_arg(benchmark::State& state) { omp_set_num_threads(static_cast<int>(state.range(0))); }

void BM_ExtractSerial(benchmark::State& state) {
  const auto clip = noise_clip(10.0);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::extract_timbral_features_serial(clip));
}
BENCHMARK(BM_ExtractSerial)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_ExtractParallel(benchmark::State& state) {
  threads_arg(state);
  const auto clip = noise_clip(10.0);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::extract_timbral_features(clip));
}
BENCHMARK(BM_ExtractParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_ScoreSerial(benchmark::State& state) {
  const auto& m = models();
  for (auto _ : state) benchmark::DoNotOptimize(gmm::score_frames_serial(m.ptrs, m.frames));
}
BENCHMARK(BM_ScoreSerial)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_ScoreParallel(benchmark::State& state) {
  threads_arg(state);
  const auto& m = models();
  for (auto _ : state) benchmark::DoNotOptimize(gmm::score_frames(m.ptrs, m.frames));
}
BENCHMARK(BM_ScoreParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_EstepSerial(benchmark::State& state) {
  const auto& m = models();
  Matrix resp;
  std::vector<double> ll;
  for (auto _ : state) benchmark::DoNotOptimize(gmm::estep_serial(m.owned[0], m.frames, resp, ll));
}
BENCHMARK(BM_EstepSerial)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_EstepParallel(benchmark::State& state) {
  threads_arg(state);
  const auto& m = models();
  Matrix resp;
  std::vector<double> ll;
  for (auto _ : state) benchmark::DoNotOptimize(gmm::estep(m.owned[0], m.frames, resp, ll));
}
BENCHMARK(BM_EstepParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
