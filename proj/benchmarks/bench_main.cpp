#include <benchmark/benchmark.h>

#include <random>

#include "dymen/harness.hpp"
#include "dymen/trainer.hpp"

using namespace dymen;

namespace {

Tensor random_param(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(r * c);
  for (double& x : v) x = g(rng);
  return Tensor::parameter({r, c}, std::move(v));
}

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_param(n, n, 1), b = random_param(n, n, 2);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    backward(sum(matmul(a, b)));
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(16)->Arg(64);

void BM_SoftmaxBackward(benchmark::State& state) {
  Tensor a = random_param(1, static_cast<std::size_t>(state.range(0)), 3);
  const Tensor w = random_param(1, static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) {
    a.zero_grad();
    backward(sum(mul(softmax(a), w)));
  }
}
BENCHMARK(BM_SoftmaxBackward)->Arg(8)->Arg(256);

struct Fixture {
  SyntheticCorpus data;
  TrainConfig cfg;
  Model model;

  explicit Fixture(LocalModelKind kind) {
    SyntheticSpec spec;
    spec.num_docs = 4;
    data = generate_synthetic(spec);
    cfg.local_model = kind;
    model = Model::make(cfg, data.corpus.store.dim());
  }
};

void BM_EvalRollout(benchmark::State& state) {
  Fixture f(state.range(0) ? LocalModelKind::transformer : LocalModelKind::attn);
  for (auto _ : state) {
    auto ep = rollout(f.data.corpus.documents[0], f.data.corpus.store, f.model, f.cfg, {});
    benchmark::DoNotOptimize(ep.predicted.data());
  }
}
BENCHMARK(BM_EvalRollout)->Arg(0)->Arg(1);

// One document's forward and backward pass as in a training epoch.
void BM_TrainStep(benchmark::State& state) {
  Fixture f(state.range(0) ? LocalModelKind::transformer : LocalModelKind::attn);
  std::mt19937_64 rng(1);
  const Document& doc = f.data.corpus.documents[0];
  for (auto _ : state) {
    const Episode ep = rollout(doc, f.data.corpus.store, f.model, f.cfg,
                               {Mode::train, SelectMode::sample, &rng});
    f.model.params.zero_grad();
    backward(sub(margin_loss(doc, ep, f.cfg.beta),
                 scale(reinforce_objective(std::span<const Episode>(&ep, 1)), f.cfg.gamma1)));
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1);

void BM_ExhaustiveBest(benchmark::State& state) {
  Fixture f(LocalModelKind::attn);
  Document doc = f.data.corpus.documents[0];
  doc.mentions.resize(6);
  for (auto _ : state)
    benchmark::DoNotOptimize(exhaustive_best_order(doc, f.data.corpus.store, f.model, 3));
}
BENCHMARK(BM_ExhaustiveBest);

}  // namespace
BENCHMARK_MAIN();
