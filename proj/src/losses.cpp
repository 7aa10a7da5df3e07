#include "gbw/losses.hpp"

#include <cmath>

namespace gbw {

namespace {

constexpr double kLogFloor = 1e-12;

void check_batch(const LogitsBatch& logits, const LabelMap& labels,
                 const std::optional<ConfidenceMap>& confidence) {
  if (logits.n_classes == 0) throw InvalidInput("batch: zero classes");
  if (logits.n_pixels() != labels.size())
    throw InvalidInput("batch: logits/labels pixel count mismatch");
  if (confidence && confidence->p.size() != labels.size())
    throw InvalidInput("batch: confidence map size mismatch");
  const int n_classes = static_cast<int>(logits.n_classes);
  bool any = false;
  for (int y : labels.labels) {
    if (y == kIgnoreLabel) continue;
    if (y < 0 || y >= n_classes) throw InvalidInput("batch: label out of range");
    any = true;
  }
  if (!any) throw EmptyBatch("batch: every pixel ignored");
  for (double zi : logits.z) {
    if (!std::isfinite(zi)) throw InvalidInput("batch: non-finite logit");
  }
}

void finalize_mask(PerClassLoss& out) {
  out.active_mask.resize(out.count.size());
  for (std::size_t c = 0; c < out.count.size(); ++c)
    out.active_mask[c] = out.count[c] > 0;
}

}  // namespace

void softmax_row(const double* z, std::size_t n, double* out) {
  double zmax = z[0];
  for (std::size_t j = 1; j < n; ++j) zmax = std::max(zmax, z[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(z[j] - zmax);
    sum += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
}

PerClassLoss per_class_cross_entropy(const LogitsBatch& logits, const LabelMap& labels,
                                     const std::optional<ConfidenceMap>& confidence) {
  check_batch(logits, labels, confidence);

  const std::size_t n_classes = logits.n_classes;
  PerClassLoss out;
  out.loss.assign(n_classes, 0.0);
  out.count.assign(n_classes, 0);

  std::vector<double> p(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels.labels[i];
    if (y == kIgnoreLabel) continue;
    softmax_row(logits.row(i), n_classes, p.data());
    const double w = confidence ? confidence->p[i] : 1.0;
    const auto c = static_cast<std::size_t>(y);
    out.loss[c] += w * -std::log(std::max(p[c], kLogFloor));
    out.count[c] += 1;
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (out.count[c] > 0) out.loss[c] /= static_cast<double>(out.count[c]);
  }
  finalize_mask(out);
  return out;
}

PerClassLoss per_class_focal(const LogitsBatch& logits, const LabelMap& labels,
                             double gamma,
                             const std::optional<ConfidenceMap>& confidence) {
  if (!(gamma >= 0.0)) throw InvalidInput("focal: gamma must be >= 0");
  check_batch(logits, labels, confidence);

  const std::size_t n_classes = logits.n_classes;
  PerClassLoss out;
  out.loss.assign(n_classes, 0.0);
  out.count.assign(n_classes, 0);

  std::vector<double> p(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels.labels[i];
    if (y == kIgnoreLabel) continue;
    softmax_row(logits.row(i), n_classes, p.data());
    const double py = p[static_cast<std::size_t>(y)];
    const double w = confidence ? confidence->p[i] : 1.0;
    double term = -std::log(std::max(py, kLogFloor));
    if (gamma != 0.0) term *= std::pow(1.0 - py, gamma);
    out.loss[static_cast<std::size_t>(y)] += w * term;
    out.count[static_cast<std::size_t>(y)] += 1;
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (out.count[c] > 0) out.loss[c] /= static_cast<double>(out.count[c]);
  }
  finalize_mask(out);
  return out;
}

PerClassLoss per_class_entropy(const LogitsBatch& logits, const LabelMap& labels) {
  check_batch(logits, labels, {});

  const std::size_t n_classes = logits.n_classes;
  PerClassLoss out;
  out.loss.assign(n_classes, 0.0);
  out.count.assign(n_classes, 0);

  std::size_t n = 0;
  std::vector<double> p(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.labels[i] == kIgnoreLabel) continue;
    softmax_row(logits.row(i), n_classes, p.data());
    for (std::size_t c = 0; c < n_classes; ++c)
      out.loss[c] += -p[c] * std::log(std::max(p[c], kLogFloor));
    ++n;
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    out.loss[c] /= static_cast<double>(n);
    out.count[c] = n;  // the entropy term touches every pixel's channel c
  }
  finalize_mask(out);
  return out;
}

PerClassLoss per_class_loss(const LogitsBatch& logits, const LabelMap& labels,
                            LossKind kind, double gamma,
                            const std::optional<ConfidenceMap>& confidence) {
  switch (kind) {
    case LossKind::CrossEntropy:
      return per_class_cross_entropy(logits, labels, confidence);
    case LossKind::Focal:
      return per_class_focal(logits, labels, gamma, confidence);
    case LossKind::Entropy:
      return per_class_entropy(logits, labels);
  }
  throw InvalidInput("per_class_loss: unknown loss kind");
}

double weighted_total_loss(const PerClassLoss& per_class, const ClassWeights& weights) {
  if (per_class.n_classes() != weights.n_classes())
    throw InvalidInput("weighted_total_loss: class dimension mismatch");
  double total = 0.0;
  for (std::size_t c = 0; c < per_class.n_classes(); ++c) {
    if (per_class.active_mask[c]) total += weights.v[c] * per_class.loss[c];
  }
  return total;
}

}  // namespace gbw
