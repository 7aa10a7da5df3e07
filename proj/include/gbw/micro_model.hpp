#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gbw/rng.hpp"
#include "gbw/types.hpp"

namespace gbw {

// Per-pixel feature batch, row-major n x F.
struct FeatureBatch {
  std::size_t n_features = 0;
  std::vector<double> x;

  FeatureBatch() = default;
  FeatureBatch(std::size_t n_pixels, std::size_t n_features)
      : n_features(n_features), x(n_pixels * n_features, 0.0) {}

  std::size_t n_pixels() const { return n_features == 0 ? 0 : x.size() / n_features; }
  double* row(std::size_t i) { return x.data() + i * n_features; }
  const double* row(std::size_t i) const { return x.data() + i * n_features; }
};

struct SgdConfig {
  double learning_rate = 0.1;
  std::size_t steps = 2000;
  std::size_t batch_size = 128;  // pixels sampled per step

  void validate() const {
    if (!(learning_rate > 0.0)) throw InvalidInput("SgdConfig: learning_rate must be > 0");
    if (batch_size < 1) throw InvalidInput("SgdConfig: batch_size must be >= 1");
  }
};

// Per-pixel classifier F -> C (linear) or F -> H -> C with a rectifier,
// trained by plain SGD. hidden = 0 selects the linear architecture.
class MicroModel {
 public:
  MicroModel() = default;
  MicroModel(std::size_t n_features, std::size_t hidden, std::size_t n_classes,
             std::uint64_t seed);

  std::size_t n_features() const { return n_features_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t n_classes() const { return n_classes_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t parameter_count() const;

  // Pre-activation logits; no softmax.
  LogitsBatch forward(const FeatureBatch& features) const;

  // Full backpropagation from d(total loss)/d(logits), then one SGD update
  // with the configured learning rate.
  void backward_and_step(const FeatureBatch& features, const LogitsBatch& upstream,
                         const SgdConfig& config);

  // argmax labels plus max-softmax confidence; pixels below the threshold
  // are marked IGNORE.
  std::pair<LabelMap, ConfidenceMap> pseudo_label(const FeatureBatch& features,
                                                  double threshold) const;

  void save(const std::filesystem::path& path) const;
  static MicroModel load(const std::filesystem::path& path);

  bool operator==(const MicroModel& other) const = default;

  // Parameter access for gradient checks.
  std::vector<double>& w1() { return w1_; }
  std::vector<double>& b1() { return b1_; }
  std::vector<double>& w2() { return w2_; }
  std::vector<double>& b2() { return b2_; }
  const std::vector<double>& w1() const { return w1_; }
  const std::vector<double>& b1() const { return b1_; }
  const std::vector<double>& w2() const { return w2_; }
  const std::vector<double>& b2() const { return b2_; }

 private:
  bool linear() const { return hidden_ == 0; }

  std::size_t n_features_ = 0;
  std::size_t hidden_ = 0;
  std::size_t n_classes_ = 0;
  std::uint64_t seed_ = 0;

  // Linear:  w2_ is C x F, b2_ is C; w1_/b1_ empty.
  // Hidden:  w1_ is H x F, b1_ is H, w2_ is C x H, b2_ is C.
  std::vector<double> w1_, b1_, w2_, b2_;
};

// argmax label and max-softmax confidence per pixel; below-threshold
// pixels are marked IGNORE.
std::pair<LabelMap, ConfidenceMap> pseudo_label_from_logits(const LogitsBatch& logits,
                                                            double threshold);

}  // namespace gbw
