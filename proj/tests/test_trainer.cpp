#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gbw/rng.hpp"
#include "gbw/trainer.hpp"

using namespace gbw;

namespace {

struct Fixture {
  SceneSpec spec;
  Dataset source;
  Dataset target;

  explicit Fixture(std::uint64_t seed, std::size_t n_images = 16) {
    spec = default_scene_spec(seed);
    spec.width = 32;
    spec.height = 32;
    source = generate(spec, n_images, Domain::Source);
    target = generate(spec, n_images, Domain::Target);
  }
};

TrainPlan quick_plan(std::uint64_t seed) {
  TrainPlan plan;
  plan.seed = seed;
  plan.sgd.steps = 150;
  plan.sgd.batch_size = 128;
  return plan;
}

}  // namespace

TEST_CASE("identical plans and seeds give identical experiment records") {
  const Fixture fx(11);
  TrainPlan plan = quick_plan(5);
  plan.regime = Regime::SelfTraining;

  const auto a = train(plan, fx.source, fx.target, fx.spec.n_classes);
  const auto b = train(plan, fx.source, fx.target, fx.spec.n_classes);

  CHECK(a.model == b.model);
  REQUIRE(a.record.steps.size() == b.record.steps.size());
  for (std::size_t s = 0; s < a.record.steps.size(); ++s) {
    CHECK(a.record.steps[s].weights == b.record.steps[s].weights);
    CHECK(a.record.steps[s].total_loss == b.record.steps[s].total_loss);
  }
  CHECK(a.record.eval_confusion.counts == b.record.eval_confusion.counts);
}

TEST_CASE("logged GBW weights satisfy the feasibility invariants at every step") {
  const Fixture fx(21);
  TrainPlan plan = quick_plan(9);
  plan.regime = Regime::SelfTraining;

  const auto result = train(plan, fx.source, fx.target, fx.spec.n_classes);
  for (const StepRecord& s : result.record.steps) {
    double active_sum = 0.0;
    std::size_t n_active = 0;
    for (std::size_t c = 0; c < s.weights.size(); ++c) {
      CHECK(s.weights[c] >= -1e-12);
      if (s.counts[c] > 0) {
        active_sum += s.weights[c];
        ++n_active;
      }
    }
    // grad_norms active exactly where counts are, so the active sum is the
    // QP target
    CHECK(std::abs(active_sum - static_cast<double>(n_active)) <=
          1e-9 * static_cast<double>(n_active));
  }
}

TEST_CASE("uniform strategy logs all-ones weights every step") {
  const Fixture fx(31);
  TrainPlan plan = quick_plan(2);
  plan.strategy = WeightStrategy::Uniform;
  const auto result = train(plan, fx.source, fx.target, fx.spec.n_classes);
  for (const StepRecord& s : result.record.steps)
    for (double w : s.weights) CHECK(w == 1.0);
}

TEST_CASE("source-only training never touches target labels") {
  const Fixture fx(41);
  TrainPlan plan = quick_plan(3);
  plan.regime = Regime::SourceOnly;

  Dataset scrambled = fx.target;
  Rng rng(99);
  // only the held-out eval tail keeps real labels; training images get junk
  const std::size_t n_eval = static_cast<std::size_t>(
      std::ceil(plan.eval_fraction * static_cast<double>(scrambled.size())));
  for (std::size_t k = 0; k + n_eval < scrambled.size(); ++k) {
    for (int& y : scrambled[k].labels.labels)
      y = static_cast<int>(rng.uniform_index(fx.spec.n_classes));
  }

  const auto a = train(plan, fx.source, fx.target, fx.spec.n_classes);
  const auto b = train(plan, fx.source, scrambled, fx.spec.n_classes);
  CHECK(a.model == b.model);
  CHECK(a.record.eval_confusion.counts == b.record.eval_confusion.counts);
}

TEST_CASE("self-training likewise leaves target labels unread") {
  const Fixture fx(43);
  TrainPlan plan = quick_plan(3);
  plan.regime = Regime::SelfTraining;

  Dataset scrambled = fx.target;
  Rng rng(7);
  const std::size_t n_eval = static_cast<std::size_t>(
      std::ceil(plan.eval_fraction * static_cast<double>(scrambled.size())));
  for (std::size_t k = 0; k + n_eval < scrambled.size(); ++k) {
    for (int& y : scrambled[k].labels.labels)
      y = static_cast<int>(rng.uniform_index(fx.spec.n_classes));
  }
  const auto a = train(plan, fx.source, fx.target, fx.spec.n_classes);
  const auto b = train(plan, fx.source, scrambled, fx.spec.n_classes);
  CHECK(a.model == b.model);
}

TEST_CASE("entropy regime runs and records finite losses") {
  const Fixture fx(51);
  TrainPlan plan = quick_plan(4);
  plan.regime = Regime::EntropyMin;
  plan.target_coeff = 0.5;
  const auto result = train(plan, fx.source, fx.target, fx.spec.n_classes);
  for (const StepRecord& s : result.record.steps) CHECK(std::isfinite(s.total_loss));
}

TEST_CASE("every static strategy trains to completion") {
  const Fixture fx(61);
  for (auto strategy : {WeightStrategy::Uniform, WeightStrategy::InversePixelFrequency,
                        WeightStrategy::InverseImageFrequency, WeightStrategy::LossBased}) {
    TrainPlan plan = quick_plan(6);
    plan.strategy = strategy;
    const auto result = train(plan, fx.source, fx.target, fx.spec.n_classes);
    CHECK(result.record.steps.size() == plan.sgd.steps);
  }
}

TEST_CASE("empty datasets are rejected") {
  const Fixture fx(71, 8);
  const TrainPlan plan = quick_plan(1);
  CHECK_THROWS_AS(train(plan, {}, fx.target, fx.spec.n_classes), InvalidInput);
  CHECK_THROWS_AS(train(plan, fx.source, {}, fx.spec.n_classes), InvalidInput);
}

TEST_CASE("ablation cells are deterministic and carry a uniform baseline") {
  const Fixture fx(81, 10);
  TrainPlan plan = quick_plan(1);
  plan.sgd.steps = 60;

  const auto table = run_ablation(plan, {1.0, 1e6}, {3, 4}, fx.source, fx.target,
                                  fx.spec.n_classes);
  REQUIRE(table.cells.size() == 4);
  REQUIRE(table.uniform_miou_per_seed.size() == 2);

  const auto again = run_ablation(plan, {1.0, 1e6}, {3, 4}, fx.source, fx.target,
                                  fx.spec.n_classes);
  for (std::size_t k = 0; k < table.cells.size(); ++k)
    CHECK(table.cells[k].miou == again.cells[k].miou);
  CHECK(table.uniform_miou_per_seed == again.uniform_miou_per_seed);

  // the huge-lambda cells sit at the uniform baseline
  for (std::size_t si = 0; si < 2; ++si) {
    const AblationCell& cell = table.cells[1 * 2 + si];
    CHECK(std::abs(cell.miou - table.uniform_miou_per_seed[si]) <= 0.01);
  }

  CHECK_THROWS_AS(run_ablation(plan, {}, {1}, fx.source, fx.target, fx.spec.n_classes),
                  InvalidInput);
}
