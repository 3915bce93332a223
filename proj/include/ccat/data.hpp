#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccat/netcore.hpp"
#include "ccat/rng.hpp"

namespace ccat {

/// Labelled inputs in [0,1]^d, one example per row.
struct Dataset {
  Matrix inputs;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }
  Vector example(std::size_t i) const { return inputs.row(static_cast<Eigen::Index>(i)).transpose(); }

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset slice(std::size_t begin, std::size_t count) const;

  /// Throws unless shapes agree, labels are < num_classes and every input lies in the box.
  void validate() const;
};

/// Disjoint evaluation splits drawn from a test set in order:
/// [eval_rte | eval_te | ... | holdout], the holdout taken from the end.
struct EvalSplits {
  Dataset eval_rte;  // attacked examples
  Dataset eval_te;   // clean-only examples for TE
  Dataset holdout;   // threshold selection
};

EvalSplits split_test_set(const Dataset& test, std::size_t n_rte, std::size_t n_holdout);

/// Reads big-endian IDX image (0x00000803) and label (0x00000801) files,
/// gzip-compressed or raw. Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t num_classes = 10);

/// Writes raw (uncompressed) IDX files; pixel values must be multiples of 1/255.
void write_idx(const Dataset& data, std::size_t rows, std::size_t cols, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

/// Two isotropic Gaussians in [0,1]^dim with standard deviation `sigma`, means
/// at 0.5 -+ separation*sigma/2 along the diagonal, clipped to the box.
/// Example i belongs to class i % 2.
Dataset make_two_gaussians(std::size_t n, double separation, Rng& rng, std::size_t dim = 2, double sigma = 0.05);

/// The two-atom problem: round(p0 n) copies of (x=0, class index 1) followed
/// by the rest as (x=epsilon, class index 0).
Dataset make_two_point(double p0, double epsilon, std::size_t n);

}  // namespace ccat
