#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmf/loss.hpp"

namespace lmf {

// Immutable labeled feature matrix. Features are stored row-major, one row of
// feature_dim() entries per sample.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t num_classes, std::size_t feature_dim,
          std::vector<double> features, std::vector<int> labels,
          std::vector<std::string> class_names = {});

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return feature_dim_; }

  std::span<const double> features(std::size_t i) const {
    return std::span<const double>(features_).subspan(i * feature_dim_,
                                                      feature_dim_);
  }
  int label(std::size_t i) const { return labels_[i]; }

  std::span<const double> feature_matrix() const { return features_; }
  std::span<const int> labels() const { return labels_; }

  // Name of each dense class index; defaults to "0".."K-1".
  const std::vector<std::string>& class_names() const { return class_names_; }

  // Samples at the given indices, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  // Re-indexes labels onto `names` (matched by class name). Classes in
  // `names` that never occur get zero count. Unknown names throw.
  Dataset remap_to(const std::vector<std::string>& names) const;

 private:
  std::size_t num_classes_ = 0;
  std::size_t feature_dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
};

ClassDistribution class_counts(const Dataset& ds);

// CSV with a `label` column and numeric feature columns (in header order).
// Labels are remapped to dense indices in first-appearance order.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(std::string_view text);
void save_csv(const Dataset& ds, const std::filesystem::path& path);
std::string to_csv(const Dataset& ds);

struct LongTailSpec {
  std::size_t num_classes = 8;
  long long max_count = 2000;
  double imbalance_ratio = 20.0;
  std::size_t feature_dim = 10;
  double class_separation = 3.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
};

/// round(n_max * rho^(-j/(K-1))) for j = 0..K-1.
std::vector<long long> longtail_counts(const LongTailSpec& spec);

// Center of class j's Gaussian; centers are pairwise >= separation apart.
std::vector<double> class_mean(std::size_t j, std::size_t feature_dim,
                               double separation);

Dataset synth_longtail(const LongTailSpec& spec);

// Gaussian classes with explicit counts; `spec` supplies geometry and seed
// (its count fields are ignored).
Dataset synth_from_counts(const ClassDistribution& counts,
                          const LongTailSpec& spec,
                          std::vector<std::string> class_names = {});

enum class PaperProfile { ODIR, HAM, ISIC };

PaperProfile parse_profile(std::string_view name);
std::string_view to_string(PaperProfile p);

// Training-sample counts per class of the three benchmark datasets.
ClassDistribution paper_profile(PaperProfile p);
std::vector<std::string> paper_profile_class_names(PaperProfile p);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

void validate(const SplitRatios& r);

struct Split {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<int> empty_classes;  // classes with no samples; reported only
};

// Per-class [train, val, test] counts by largest remainder, ties to the
// earlier partition.
std::array<long long, 3> apportion(long long n, const SplitRatios& ratios);

Split stratified_split(const Dataset& ds, const SplitRatios& ratios,
                       std::uint64_t seed);

}  // namespace lmf
