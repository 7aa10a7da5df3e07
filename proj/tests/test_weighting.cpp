#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "gbw/rng.hpp"
#include "gbw/weighting.hpp"

using namespace gbw;

namespace {

LogitsBatch make_logits(std::size_t n_classes, std::vector<double> z) {
  LogitsBatch b;
  b.n_classes = n_classes;
  b.z = std::move(z);
  return b;
}

LabelMap make_labels(std::vector<int> y) {
  LabelMap m;
  m.labels = std::move(y);
  m.width = m.labels.size();
  m.height = 1;
  return m;
}

DatasetClassStats make_stats(std::vector<double> pixel, std::vector<double> image) {
  DatasetClassStats s;
  s.pixel_freq = std::move(pixel);
  s.image_freq = std::move(image);
  return s;
}

}  // namespace

TEST_CASE("balanced symmetric batch gives uniform weights and unweighted total") {
  const auto logits = make_logits(2, {0.0, 0.0, 0.0, 0.0});
  const auto labels = make_labels({0, 1});
  const auto result = gbw_step(logits, labels, {}, GbwConfig{});
  CHECK(result.weights.v[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(result.weights.v[1] == doctest::Approx(1.0).epsilon(1e-12));

  const auto pc = per_class_cross_entropy(logits, labels);
  CHECK(result.total_loss == doctest::Approx(pc.loss[0] + pc.loss[1]).epsilon(1e-12));
}

TEST_CASE("huge lambda reproduces the unweighted loss") {
  Rng rng(4);
  LogitsBatch logits(20, 3);
  for (double& z : logits.z) z = rng.uniform(-2.0, 2.0);
  LabelMap labels;
  labels.width = 20;
  labels.height = 1;
  labels.labels.resize(20);
  for (int& y : labels.labels) y = static_cast<int>(rng.uniform_index(3));

  GbwConfig config;
  config.lambda = 1e6;
  const auto result = gbw_step(logits, labels, {}, config);

  const auto pc = per_class_cross_entropy(logits, labels);
  double unweighted = 0.0;
  for (std::size_t c = 0; c < 3; ++c) unweighted += pc.loss[c];
  CHECK(std::abs(result.total_loss - unweighted) <= 1e-3 * unweighted);
}

TEST_CASE("a dominant gradient class is upweighted, and the pipeline is consistent") {
  // class 0: many wrong confident pixels; class 1: near-correct pixels
  LogitsBatch logits(4, 2);
  LabelMap labels;
  labels.width = 4;
  labels.height = 1;
  labels.labels = {0, 0, 1, 1};
  logits.row(0)[0] = -3.0;
  logits.row(0)[1] = 3.0;  // badly wrong for class 0
  logits.row(1)[0] = -3.0;
  logits.row(1)[1] = 3.0;
  logits.row(2)[0] = -4.0;
  logits.row(2)[1] = 4.0;  // confidently right for class 1
  logits.row(3)[0] = -4.0;
  logits.row(3)[1] = 4.0;

  const auto result = gbw_step(logits, labels, {}, GbwConfig{});
  CHECK(result.weights.v[0] > 1.0);
  CHECK(result.weights.v[1] < 1.0);

  // replaying the recorded g through the solver reproduces the weights
  const auto replay = solve_weights_for_active(result.record.grad_norms,
                                               result.weights.active_mask, 1.0);
  CHECK(replay.v == result.weights.v);
}

TEST_CASE("absent classes get neutral weight 1 and a reduced target sum") {
  const auto logits = make_logits(3, {0.0, 0.0, 0.0, 1.0, -1.0, 0.5});
  const auto labels = make_labels({0, 1});  // class 2 absent
  const auto result = gbw_step(logits, labels, {}, GbwConfig{});
  CHECK(result.weights.v[2] == 1.0);
  CHECK_FALSE(result.weights.active_mask[2]);
  CHECK(result.weights.v[0] + result.weights.v[1] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("monotone lambda: stronger regularization is closer to uniform") {
  Rng rng(17);
  LogitsBatch logits(30, 4);
  for (double& z : logits.z) z = rng.uniform(-3.0, 3.0);
  LabelMap labels;
  labels.width = 30;
  labels.height = 1;
  labels.labels.resize(30);
  for (int& y : labels.labels) y = static_cast<int>(rng.uniform_index(4));

  double prev_dev = std::numeric_limits<double>::infinity();
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 1000.0}) {
    GbwConfig config;
    config.lambda = lambda;
    const auto result = gbw_step(logits, labels, {}, config);
    double dev = 0.0;
    for (double v : result.weights.v) dev = std::max(dev, std::abs(v - 1.0));
    CHECK(dev <= prev_dev + 1e-12);
    prev_dev = dev;
  }
}

TEST_CASE("pixel-frequency weights match the hand example") {
  const auto w = static_weight_strategy(make_stats({0.9, 0.1}, {1.0, 1.0}),
                                        WeightStrategy::InversePixelFrequency);
  CHECK(w.v[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(w.v[1] == doctest::Approx(1.8).epsilon(1e-12));
}

TEST_CASE("image-frequency weights invert the image frequencies") {
  const auto w = static_weight_strategy(make_stats({0.5, 0.5}, {1.0, 0.25}),
                                        WeightStrategy::InverseImageFrequency);
  // raw (1, 4) normalized to sum 2
  CHECK(w.v[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(w.v[1] == doctest::Approx(1.6).epsilon(1e-12));
}

TEST_CASE("equal frequencies leave every strategy uniform") {
  const auto stats = make_stats({0.5, 0.5}, {1.0, 1.0});
  for (auto kind : {WeightStrategy::Uniform, WeightStrategy::InversePixelFrequency,
                    WeightStrategy::InverseImageFrequency}) {
    const auto w = static_weight_strategy(stats, kind);
    CHECK(w.v[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.v[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("loss-based weights are proportional to the current losses") {
  PerClassLoss pc;
  pc.loss = {0.3, 0.1};
  pc.count = {5, 5};
  pc.active_mask = {true, true};
  const auto w = static_weight_strategy(make_stats({0.5, 0.5}, {1.0, 1.0}),
                                        WeightStrategy::LossBased, &pc);
  CHECK(w.v[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(w.v[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("static strategy validation") {
  // class 1 present in images but with zero pixel frequency: inconsistent
  CHECK_THROWS_AS(static_weight_strategy(make_stats({1.0, 0.0}, {1.0, 0.5}),
                                         WeightStrategy::InversePixelFrequency),
                  InvalidInput);
  CHECK_THROWS_AS(static_weight_strategy(make_stats({0.5, 0.5}, {1.0, 1.0}),
                                         WeightStrategy::LossBased, nullptr),
                  InvalidInput);
  CHECK_THROWS_AS(static_weight_strategy(make_stats({0.5, 0.5}, {1.0}),
                                         WeightStrategy::Uniform),
                  InvalidInput);
}

TEST_CASE("classes absent from the dataset stay neutral under static strategies") {
  const auto w = static_weight_strategy(make_stats({0.9, 0.1, 0.0}, {1.0, 1.0, 0.0}),
                                        WeightStrategy::InversePixelFrequency);
  CHECK(w.v[2] == 1.0);
  CHECK_FALSE(w.active_mask[2]);
  CHECK(w.v[0] + w.v[1] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("step records carry consistent dimensions") {
  const auto logits = make_logits(2, {0.5, -0.5, 0.2, 0.8});
  const auto labels = make_labels({0, 1});
  const auto result = gbw_step(logits, labels, {}, GbwConfig{});
  CHECK(result.record.weights.size() == 2);
  CHECK(result.record.grad_norms.size() == 2);
  CHECK(result.record.per_class_loss.size() == 2);
  CHECK(result.record.counts.size() == 2);
  CHECK(result.record.total_loss == result.total_loss);
}
