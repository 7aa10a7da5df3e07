#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbw {

// Sentinel for pixels excluded from loss, counts and metrics.
inline constexpr int kIgnoreLabel = -1;

struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyBatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedSize : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergedRun : std::runtime_error {
  DivergedRun(const std::string& what, std::size_t step)
      : std::runtime_error(what), step(step) {}
  std::size_t step;
};

// Pre-activation class scores for a batch of pixels, row-major n x C.
struct LogitsBatch {
  std::size_t n_classes = 0;
  std::vector<double> z;

  LogitsBatch() = default;
  LogitsBatch(std::size_t n_pixels, std::size_t n_classes)
      : n_classes(n_classes), z(n_pixels * n_classes, 0.0) {}

  std::size_t n_pixels() const { return n_classes == 0 ? 0 : z.size() / n_classes; }
  double* row(std::size_t i) { return z.data() + i * n_classes; }
  const double* row(std::size_t i) const { return z.data() + i * n_classes; }
};

// Per-pixel class indices in [0, C) or kIgnoreLabel.
struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Per-pixel confidence in [0, 1].
struct ConfidenceMap {
  std::vector<double> p;
};

// Output of the QP solve. Inactive classes carry the neutral weight 1.
struct ClassWeights {
  std::vector<double> v;
  std::vector<bool> active_mask;

  std::size_t n_classes() const { return v.size(); }
};

// Per-class average losses and pixel counts for one batch.
struct PerClassLoss {
  std::vector<double> loss;
  std::vector<std::size_t> count;
  std::vector<bool> active_mask;

  std::size_t n_classes() const { return loss.size(); }
};

// Squared gradient norms of the average per-class losses w.r.t. logits.
struct GradientNorms {
  std::vector<double> g;
  std::vector<bool> active_mask;
};

}  // namespace gbw
