#include "gbw/metrics.hpp"

#include <numeric>

namespace gbw {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_classes != n_classes)
    throw InvalidInput("ConfusionMatrix: merge dimension mismatch");
  for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += other.counts[k];
  return *this;
}

void accumulate(ConfusionMatrix& cm, const LabelMap& predictions, const LabelMap& truth) {
  if (predictions.size() != truth.size())
    throw InvalidInput("accumulate: prediction/truth size mismatch");
  const int n = static_cast<int>(cm.n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth.labels[i];
    if (t == kIgnoreLabel) continue;
    const int p = predictions.labels[i];
    if (t < 0 || t >= n || p < 0 || p >= n)
      throw InvalidInput("accumulate: label out of range");
    ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
}

IouResult iou(const ConfusionMatrix& cm) {
  const std::size_t n = cm.n_classes;
  IouResult out;
  out.per_class.resize(n);

  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t denom = row + col - tp;  // TP + FP + FN
    if (denom > 0) {
      out.per_class[c] = {static_cast<double>(tp) / static_cast<double>(denom), true};
      sum += out.per_class[c].value;
      ++defined;
    }
  }
  out.mean = defined > 0 ? sum / static_cast<double>(defined) : 0.0;
  return out;
}

RecallPrecision recall_precision(const ConfusionMatrix& cm) {
  const std::size_t n = cm.n_classes;
  RecallPrecision out;
  out.recall.resize(n);
  out.precision.resize(n);

  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const auto tp = static_cast<double>(cm.at(c, c));
    if (row > 0) out.recall[c] = {tp / static_cast<double>(row), true};
    if (col > 0) out.precision[c] = {tp / static_cast<double>(col), true};
  }
  return out;
}

}  // namespace gbw
