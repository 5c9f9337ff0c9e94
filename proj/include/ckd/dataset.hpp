#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ckd {

enum class Split : std::uint8_t { train, val, test };

std::string to_string(Split split);

/// Feature-vector classification data. Sample i is column i of `features`.
struct Dataset {
  Eigen::MatrixXd features;  // D x N
  std::vector<int> labels;
  std::vector<Split> splits;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(features.rows()); }
  std::vector<std::size_t> indices(Split split) const;
  Eigen::MatrixXd gather(std::span<const std::size_t> ids) const;
  std::vector<int> gather_labels(std::span<const std::size_t> ids) const;
};

/// Isotropic Gaussian mixture. Class means sit on a seeded, scaled simplex
/// (orthonormal directions times `separation`) when dim >= classes, and on
/// a seeded circle otherwise. Each class gets `per_class` samples split
/// 80/20 into train/val plus `test_per_class` held-out test samples.
struct MixtureParams {
  int classes = 20;
  int dim = 32;
  int per_class = 1250;
  int test_per_class = 100;
  double noise = 1.0;
  double separation = 3.0;
  std::uint64_t seed = 1;
};

Dataset generate_gaussian_mixture(const MixtureParams& params);

/// CSV with header `label,split,f0,...`. Values are written with 17
/// significant digits so a round trip is exact.
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// Reads the format written by write_csv. A file whose header lacks the
/// `split` column (`label,f0,...`) gets a seeded 64/16/20 train/val/test split.
Dataset read_csv(const std::filesystem::path& path, std::uint64_t split_seed = 1);

}  // namespace ckd
