#include <benchmark/benchmark.h>

#include <map>
#include <vector>

#include "psop/affinity_engine.h"
#include "psop/piap.h"
#include "psop/pipeline.h"
#include "psop/stream_model.h"
#include "psop/synth_stream.h"

namespace psop {
namespace {

// Synthetic stream with every identity present throughout, so the node count
// grows linearly with the frame count (two faces per frame).
const SynthOutput& Stream(int frames) {
  static std::map<int, SynthOutput> cache;
  auto it = cache.find(frames);
  if (it == cache.end()) {
    SynthConfig c;
    c.seed = 3;
    c.frames = frames;
    c.lifespan_min = frames;
    c.lifespan_max = frames;
    it = cache.emplace(frames, Generate(c)).first;
  }
  return it->second;
}

SimilarityMatrix Positioned(int frames) {
  return PositionedSimilarity(Stream(frames).records, PapParams{});
}

void BM_ResponsibilitySweep(benchmark::State& state) {
  const auto sim = Positioned(static_cast<int>(state.range(0)));
  MessageState msg = MessageState::Zeros(sim.size());
  for (auto _ : state) {
    UpdateResponsibilitiesInPlace(sim, msg, 0.5, 1);
    benchmark::DoNotOptimize(msg.r.data());
  }
  state.counters["nodes"] = static_cast<double>(sim.size());
}
BENCHMARK(BM_ResponsibilitySweep)->Arg(75)->Arg(150)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_AvailabilityPositioned(benchmark::State& state) {
  const auto sim = Positioned(static_cast<int>(state.range(0)));
  MessageState msg = MessageState::Zeros(sim.size());
  UpdateResponsibilitiesInPlace(sim, msg, 0.5, 1);
  for (auto _ : state) {
    UpdateAvailabilitiesPositionedInPlace(sim.frame_of, msg, 0.5, 1);
    benchmark::DoNotOptimize(msg.a.data());
  }
  state.counters["nodes"] = static_cast<double>(sim.size());
}
BENCHMARK(BM_AvailabilityPositioned)->Arg(75)->Arg(150)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_AvailabilityClassic(benchmark::State& state) {
  const auto sim = Positioned(static_cast<int>(state.range(0)));
  MessageState msg = MessageState::Zeros(sim.size());
  UpdateResponsibilitiesInPlace(sim, msg, 0.5, 1);
  for (auto _ : state) {
    UpdateAvailabilitiesClassicInPlace(msg, 0.5, 1);
    benchmark::DoNotOptimize(msg.a.data());
  }
  state.counters["nodes"] = static_cast<double>(sim.size());
}
BENCHMARK(BM_AvailabilityClassic)->Arg(75)->Arg(150)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_BatchPap(benchmark::State& state) {
  const auto sim = Positioned(static_cast<int>(state.range(0)));
  int sweeps = 0;
  for (auto _ : state) {
    const auto run = RunPap(sim, PapParams{});
    sweeps = run.result.iterations;
    benchmark::DoNotOptimize(run.result.exemplar_of.data());
  }
  state.counters["nodes"] = static_cast<double>(sim.size());
  state.counters["sweeps"] = sweeps;
}
BENCHMARK(BM_BatchPap)->Arg(150)->Arg(300)->Arg(600)->Arg(1200)->Unit(benchmark::kMillisecond);

// One PIAP segment arriving after `range(0) - 1` earlier ones. The batch
// solve over the same stream prefix is BM_BatchPap/(150 * range(0)).
void BM_PiapSegment(benchmark::State& state) {
  const int segments = static_cast<int>(state.range(0));
  const auto all = SegmentStream(Stream(150 * segments).records, 150);
  PiapParams params;
  PiapState before;
  for (int q = 0; q + 1 < segments; ++q) before = PiapStep(std::move(before), all[q], params);
  std::size_t nodes = 0;
  int sweeps = 0;
  for (auto _ : state) {
    state.PauseTiming();
    PiapState s = before;
    state.ResumeTiming();
    s = PiapStep(std::move(s), all.back(), params);
    nodes = s.last_propagation_nodes;
    sweeps = s.last_iterations;
    benchmark::DoNotOptimize(s.labels.data());
  }
  state.counters["nodes"] = static_cast<double>(nodes);
  state.counters["sweeps"] = sweeps;
}
BENCHMARK(BM_PiapSegment)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_RefineFromSingletons(benchmark::State& state) {
  const auto sim = Positioned(static_cast<int>(state.range(0)));
  ClusterResult start;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    start.exemplar_of.push_back(i);
    start.clusters[i] = {i};
  }
  for (auto _ : state) {
    ClusterResult r = start;
    RefineExemplars(sim, r);
    benchmark::DoNotOptimize(r.exemplar_of.data());
  }
  state.counters["nodes"] = static_cast<double>(sim.size());
}
BENCHMARK(BM_RefineFromSingletons)->Arg(75)->Arg(150)->Unit(benchmark::kMillisecond);

void BM_Pipeline(benchmark::State& state) {
  const auto& synth = Stream(static_cast<int>(state.range(0)));
  PipelineConfig config;
  config.Sync();
  for (auto _ : state) {
    const auto result = RunPipeline(synth.header, synth.records, config, {});
    benchmark::DoNotOptimize(result.masks.data());
  }
  state.counters["detections"] = static_cast<double>(synth.records.size());
}
BENCHMARK(BM_Pipeline)->Arg(300)->Arg(600)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace psop

BENCHMARK_MAIN();
