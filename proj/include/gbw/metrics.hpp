#pragma once

#include <cstdint>
#include <vector>

#include "gbw/types.hpp"

namespace gbw {

// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::uint64_t> counts;  // row-major C x C

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t n_classes)
      : n_classes(n_classes), counts(n_classes * n_classes, 0) {}

  std::uint64_t& at(std::size_t truth, std::size_t pred) {
    return counts[truth * n_classes + pred];
  }
  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * n_classes + pred];
  }
  std::uint64_t total() const;

  // elementwise addition for merging disjoint shards
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

// Increment counts[truth][pred] per pixel; truth IGNORE pixels skipped.
void accumulate(ConfusionMatrix& cm, const LabelMap& predictions, const LabelMap& truth);

// Per-class result; classes absent from both truth and prediction have an
// undefined (0/0) ratio and are excluded from means.
struct ClassRatio {
  double value = 0.0;
  bool defined = false;
};

struct IouResult {
  std::vector<ClassRatio> per_class;
  double mean = 0.0;  // over defined classes
};

// IoU_c = TP / (TP + FP + FN)
IouResult iou(const ConfusionMatrix& cm);

struct RecallPrecision {
  std::vector<ClassRatio> recall;
  std::vector<ClassRatio> precision;
};

RecallPrecision recall_precision(const ConfusionMatrix& cm);

}  // namespace gbw
