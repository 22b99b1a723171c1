#pragma once

#include <string>
#include <vector>

#include "ocnopt/network.hpp"

namespace ocnopt {

/// Column-per-sample dataset with deterministic splits. Classification sets
/// carry integer labels; regression sets carry real-valued targets instead.
/// Feature normalization statistics come from the train split only and are
/// applied to every split.
struct Dataset {
  Mat features;  // dim x n, already normalized
  std::vector<int> labels;
  Vec values;  // regression targets; size 0 for classification
  std::vector<Index> train_idx, val_idx, test_idx;
  Vec feat_mean, feat_scale;

  bool regression() const { return labels.empty(); }
  Index dim() const { return features.rows(); }
  Index size() const { return features.cols(); }
  Index n_classes() const;
  Index target_dim() const { return regression() ? 1 : n_classes(); }
};

/// Seeded 70/15/15 shuffle split plus train-statistic normalization.
/// Exposed separately so loaders and generators share the exact procedure.
void split_and_normalize(Dataset& ds, std::uint64_t seed,
                         double train_frac = 0.70, double val_frac = 0.15);

/// Rectangular numeric CSV with a header row. The label column (by name)
/// becomes integer labels when every entry is integral and at least two
/// distinct values exist with small range, regression targets otherwise.
/// Ragged rows, non-numeric or non-finite cells and a missing label column
/// raise parse_error naming the offending line and column.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 std::uint64_t seed);

/// Deterministic generators: two-moons, circles, spirals (two classes each,
/// two features), linear-regression (three features, scalar target) and
/// digits (8x8 glyphs, ten classes). noise scales the additive Gaussian
/// perturbation of each generator.
Dataset make_synthetic(const std::string& kind, Index n, double noise,
                       std::uint64_t seed);

/// 8x8 pixel-font digit images, `per_class` samples per class, perturbed by
/// one-pixel shifts, intensity jitter, pixel dropout and additive noise.
Dataset make_digits(Index per_class, double noise, std::uint64_t seed);

/// Features/labels of a contiguous index-list window, as net inputs/targets.
Mat gather_features(const Dataset& ds, const std::vector<Index>& idx,
                    size_t begin, size_t count);
Targets gather_targets(const Dataset& ds, const std::vector<Index>& idx,
                       size_t begin, size_t count);

/// Writes features plus a trailing label/target column with a header row.
/// Denormalization is not attempted; the file reloads to the same dataset.
void write_csv(const Dataset& ds, const std::string& path);

}  // namespace ocnopt
