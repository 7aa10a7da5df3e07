#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gbw/gradients.hpp"
#include "gbw/rng.hpp"

using namespace gbw;

namespace {

struct RandomBatch {
  LogitsBatch logits;
  LabelMap labels;
  ConfidenceMap conf;
};

RandomBatch random_batch(Rng& rng, std::size_t n, std::size_t n_classes) {
  RandomBatch b;
  b.logits = LogitsBatch(n, n_classes);
  for (double& z : b.logits.z) z = rng.uniform(-2.0, 2.0);
  b.labels.width = n;
  b.labels.height = 1;
  b.labels.labels.resize(n);
  for (int& y : b.labels.labels)
    y = static_cast<int>(rng.uniform_index(n_classes));
  b.conf.p.resize(n);
  for (double& p : b.conf.p) p = rng.uniform(0.1, 1.0);
  return b;
}

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / denom;
}

LabelMap one_pixel_label(int y) {
  LabelMap m;
  m.labels = {y};
  m.width = 1;
  m.height = 1;
  return m;
}

}  // namespace

TEST_CASE("uniform two-class pixel has squared norm 0.5 under cross-entropy") {
  LogitsBatch z(1, 2);
  const auto g = class_gradient_norms(z, one_pixel_label(0), LossKind::CrossEntropy);
  // gradient (0.5, -0.5): norm^2 = 0.5
  CHECK(g.g[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.g[1] == 0.0);
  CHECK(g.active_mask[0]);
  CHECK_FALSE(g.active_mask[1]);
}

TEST_CASE("confident correct predictions have near-zero gradient norms") {
  LogitsBatch z(2, 2);
  z.row(0)[0] = 50.0;
  z.row(0)[1] = -50.0;
  z.row(1)[0] = -50.0;
  z.row(1)[1] = 50.0;
  LabelMap y;
  y.labels = {0, 1};
  y.width = 2;
  y.height = 1;
  const auto g = class_gradient_norms(z, y, LossKind::CrossEntropy);
  CHECK(g.g[0] <= 1e-12);
  CHECK(g.g[1] <= 1e-12);
}

TEST_CASE("analytic norms match finite differences for every loss kind") {
  Rng rng(31);
  for (int rep = 0; rep < 8; ++rep) {
    const std::size_t n = 4 + rng.uniform_index(61);      // up to 64 pixels
    const std::size_t n_classes = 2 + rng.uniform_index(7);  // up to 8 classes
    const auto b = random_batch(rng, n, n_classes);

    struct Case {
      LossKind kind;
      double gamma;
      bool with_conf;
    };
    const Case cases[] = {
        {LossKind::CrossEntropy, 0.0, false}, {LossKind::CrossEntropy, 0.0, true},
        {LossKind::Focal, 0.0, false},        {LossKind::Focal, 1.0, false},
        {LossKind::Focal, 2.0, true},         {LossKind::Entropy, 0.0, false},
    };
    for (const Case& c : cases) {
      std::optional<ConfidenceMap> conf;
      if (c.with_conf) conf = b.conf;
      const auto analytic =
          class_gradient_norms(b.logits, b.labels, c.kind, c.gamma, conf);
      const auto fd =
          finite_difference_norms(b.logits, b.labels, c.kind, c.gamma, conf, 1e-5);
      for (std::size_t cls = 0; cls < n_classes; ++cls) {
        if (analytic.g[cls] > 1e-10 || fd.g[cls] > 1e-10)
          CHECK(rel_err(analytic.g[cls], fd.g[cls]) <= 1e-4);
      }
    }
  }
}

TEST_CASE("focal gamma 0 gradient norms equal cross-entropy bit-near") {
  Rng rng(77);
  const auto b = random_batch(rng, 32, 5);
  const auto ce = class_gradient_norms(b.logits, b.labels, LossKind::CrossEntropy, 0.0,
                                       b.conf);
  const auto fl = class_gradient_norms(b.logits, b.labels, LossKind::Focal, 0.0, b.conf);
  for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(ce.g[c] - fl.g[c]) <= 1e-12);
}

TEST_CASE("finite differences converge at second order") {
  Rng rng(55);
  const auto b = random_batch(rng, 12, 4);
  const auto exact = class_gradient_norms(b.logits, b.labels, LossKind::CrossEntropy);

  auto max_err = [&](double step) {
    const auto fd =
        finite_difference_norms(b.logits, b.labels, LossKind::CrossEntropy, 0.0, {}, step);
    double m = 0.0;
    for (std::size_t c = 0; c < 4; ++c) m = std::max(m, std::abs(fd.g[c] - exact.g[c]));
    return m;
  };

  const double coarse = max_err(1e-2);
  const double fine = max_err(5e-3);
  // halving the step should cut the error by about 4
  CHECK(fine <= coarse / 3.0);
}

TEST_CASE("finite differences reproduce the 0.5 symmetric value") {
  LogitsBatch z(1, 2);
  const auto fd = finite_difference_norms(z, one_pixel_label(0), LossKind::CrossEntropy,
                                          0.0, {}, 1e-5);
  CHECK(std::abs(fd.g[0] - 0.5) <= 1e-6);
}

TEST_CASE("finite differences reject a non-positive step") {
  LogitsBatch z(1, 2);
  CHECK_THROWS_AS(
      finite_difference_norms(z, one_pixel_label(0), LossKind::CrossEntropy, 0.0, {}, 0.0),
      InvalidInput);
}

TEST_CASE("cross-entropy norms are invariant to pixels of other classes") {
  Rng rng(41);
  auto b = random_batch(rng, 24, 4);
  const auto base = class_gradient_norms(b.logits, b.labels, LossKind::CrossEntropy);
  for (std::size_t i = 0; i < b.logits.n_pixels(); ++i) {
    if (b.labels.labels[i] != 1) {
      for (std::size_t c = 0; c < 4; ++c) b.logits.row(i)[c] = rng.uniform(-5.0, 5.0);
    }
  }
  const auto after = class_gradient_norms(b.logits, b.labels, LossKind::CrossEntropy);
  CHECK(after.g[1] == doctest::Approx(base.g[1]).epsilon(1e-14));
}

TEST_CASE("uniform logits with balanced labels give equal norms") {
  const std::size_t n_classes = 4;
  LogitsBatch z(8, n_classes);
  LabelMap y;
  y.labels = {0, 1, 2, 3, 0, 1, 2, 3};
  y.width = 8;
  y.height = 1;
  const auto g = class_gradient_norms(z, y, LossKind::CrossEntropy);
  for (std::size_t c = 1; c < n_classes; ++c)
    CHECK(g.g[c] == doctest::Approx(g.g[0]).epsilon(1e-12));
}

TEST_CASE("scaling the confidence map scales cross-entropy norms quadratically") {
  Rng rng(61);
  const auto b = random_batch(rng, 20, 3);
  ConfidenceMap scaled = b.conf;
  const double k = 0.5;
  for (double& p : scaled.p) p *= k;
  const auto base =
      class_gradient_norms(b.logits, b.labels, LossKind::CrossEntropy, 0.0, b.conf);
  const auto after =
      class_gradient_norms(b.logits, b.labels, LossKind::CrossEntropy, 0.0, scaled);
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(after.g[c] == doctest::Approx(k * k * base.g[c]).epsilon(1e-12));
}

TEST_CASE("weighted logit gradient with all-ones weights sums the class rows") {
  Rng rng(83);
  const auto b = random_batch(rng, 16, 3);
  ClassWeights ones;
  ones.v.assign(3, 1.0);
  ones.active_mask.assign(3, true);
  const auto up = weighted_loss_logit_gradient(b.logits, b.labels, LossKind::CrossEntropy,
                                               0.0, {}, ones);

  // finite differences on the unweighted aggregate loss
  LogitsBatch work = b.logits;
  const double step = 1e-6;
  for (std::size_t k = 0; k < work.z.size(); ++k) {
    const double saved = work.z[k];
    auto total = [&](double v) {
      work.z[k] = v;
      const auto pc = per_class_cross_entropy(work, b.labels);
      double sum = 0.0;
      for (std::size_t c = 0; c < 3; ++c) sum += pc.loss[c];
      return sum;
    };
    const double d = (total(saved + step) - total(saved - step)) / (2.0 * step);
    work.z[k] = saved;
    CHECK(std::abs(up.z[k] - d) <= 1e-6);
  }
}
