#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gbw/micro_model.hpp"
#include "gbw/types.hpp"
#include "gbw/weighting.hpp"

namespace gbw {

enum class Domain { Source, Target };

struct TargetShift {
  std::vector<double> mean_shift;  // length F; empty means zero shift
  double cov_scale = 1.0;
};

struct SceneSpec {
  std::size_t n_classes = 6;
  std::vector<double> class_pixel_proportions = {0.40, 0.25, 0.15, 0.10, 0.07, 0.03};
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t n_features = 8;
  std::vector<std::vector<double>> class_means;  // C vectors of length F
  std::vector<double> class_cov_scales;          // length C, > 0
  TargetShift target_shift;
  std::uint64_t seed = 1;

  void validate() const;
};

// The default desk-scale spec: 6 classes spanning a decade of prevalence,
// separable Gaussian features, a moderate source->target shift.
SceneSpec default_scene_spec(std::uint64_t seed);

struct DenseSample {
  FeatureBatch features;  // width*height rows
  LabelMap labels;
  Domain domain = Domain::Source;
};

using Dataset = std::vector<DenseSample>;

// Seeded scene generation: rectangular class patches with areas targeting
// the spec proportions, per-pixel Gaussian features. Target-domain samples
// get the mean shift and covariance scaling applied.
Dataset generate(const SceneSpec& spec, std::size_t n_images, Domain domain);

DatasetClassStats dataset_class_statistics(const Dataset& samples, std::size_t n_classes);

// Flat binary container + JSON sidecar with the spec echo.
void save_dataset(const Dataset& data, const SceneSpec& spec,
                  const std::filesystem::path& path);
std::pair<Dataset, SceneSpec> load_dataset(const std::filesystem::path& path);

}  // namespace gbw
