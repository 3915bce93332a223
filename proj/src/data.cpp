#include "ccat/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>

namespace ccat {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.inputs.resize(static_cast<Eigen::Index>(indices.size()), inputs.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("Dataset::subset index out of range");
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(indices[i]));
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw std::out_of_range("Dataset::slice out of range");
  Dataset out;
  out.num_classes = num_classes;
  out.inputs = inputs.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return out;
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) throw ShapeError("dataset rows != labels");
  if (num_classes < 2) throw std::invalid_argument("dataset needs at least two classes");
  for (auto y : labels) {
    if (y >= num_classes) throw std::out_of_range("dataset label out of range");
  }
  if (inputs.size() > 0 && (inputs.minCoeff() < 0.0 || inputs.maxCoeff() > 1.0)) {
    throw std::invalid_argument("dataset inputs must lie in [0,1]");
  }
}

EvalSplits split_test_set(const Dataset& test, std::size_t n_rte, std::size_t n_holdout) {
  if (n_rte + n_holdout > test.size()) throw std::invalid_argument("test set too small for the requested splits");
  EvalSplits s;
  s.eval_rte = test.slice(0, n_rte);
  s.eval_te = test.slice(n_rte, test.size() - n_rte - n_holdout);
  s.holdout = test.slice(test.size() - n_holdout, n_holdout);
  return s;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

// gzread passes uncompressed files through unchanged.
std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  GzHandle f(gzopen(path.string().c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> data;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f.get(), buf, sizeof(buf));
    if (n < 0) throw std::runtime_error("read error in " + path.string());
    if (n == 0) break;
    data.insert(data.end(), buf, buf + n);
  }
  return data;
}

std::uint32_t be32(const std::vector<std::uint8_t>& d, std::size_t off) {
  return (std::uint32_t{d[off]} << 24) | (std::uint32_t{d[off + 1]} << 16) | (std::uint32_t{d[off + 2]} << 8) |
         std::uint32_t{d[off + 3]};
}

void put_be32(std::ofstream& f, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  f.write(b, 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t num_classes) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);
  if (img.size() < 16) throw std::runtime_error(images_path.string() + ": truncated IDX header");
  if (lab.size() < 8) throw std::runtime_error(labels_path.string() + ": truncated IDX header");
  if (be32(img, 0) != 0x00000803) throw std::runtime_error(images_path.string() + ": bad image magic");
  if (be32(lab, 0) != 0x00000801) throw std::runtime_error(labels_path.string() + ": bad label magic");
  const std::size_t n = be32(img, 4);
  const std::size_t rows = be32(img, 8);
  const std::size_t cols = be32(img, 12);
  const std::size_t n_labels = be32(lab, 4);
  if (n != n_labels) {
    throw std::runtime_error("IDX count mismatch: " + std::to_string(n) + " images, " + std::to_string(n_labels) +
                             " labels");
  }
  const std::size_t d = rows * cols;
  if (img.size() != 16 + n * d) throw std::runtime_error(images_path.string() + ": truncated or oversized image data");
  if (lab.size() != 8 + n) throw std::runtime_error(labels_path.string() + ": truncated or oversized label data");

  Dataset out;
  out.num_classes = num_classes;
  out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img[16 + i * d + j] / 255.0;
    }
    out.labels[i] = lab[8 + i];
    if (out.labels[i] >= num_classes) {
      throw std::runtime_error(labels_path.string() + ": label " + std::to_string(out.labels[i]) + " out of range");
    }
  }
  return out;
}

void write_idx(const Dataset& data, std::size_t rows, std::size_t cols, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (rows * cols != data.dim()) throw ShapeError("write_idx: rows*cols must equal the input dimension");
  std::ofstream fi(images_path, std::ios::binary);
  std::ofstream fl(labels_path, std::ios::binary);
  if (!fi || !fl) throw std::runtime_error("write_idx: cannot open output files");
  put_be32(fi, 0x00000803);
  put_be32(fi, static_cast<std::uint32_t>(data.size()));
  put_be32(fi, static_cast<std::uint32_t>(rows));
  put_be32(fi, static_cast<std::uint32_t>(cols));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
      const double v = data.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * 255.0;
      const double r = std::round(v);
      if (std::abs(v - r) > 1e-9 || r < 0 || r > 255) throw std::invalid_argument("write_idx: value not on the 1/255 grid");
      fi.put(static_cast<char>(static_cast<std::uint8_t>(r)));
    }
  }
  put_be32(fl, 0x00000801);
  put_be32(fl, static_cast<std::uint32_t>(data.size()));
  for (auto y : data.labels) {
    if (y > 255) throw std::invalid_argument("write_idx: label does not fit in a byte");
    fl.put(static_cast<char>(static_cast<std::uint8_t>(y)));
  }
  if (!fi || !fl) throw std::runtime_error("write_idx: write failed");
}

Dataset make_two_gaussians(std::size_t n, double separation, Rng& rng, std::size_t dim, double sigma) {
  if (n < 2) throw std::invalid_argument("make_two_gaussians: n must be >= 2");
  if (dim < 1 || !(sigma > 0.0)) throw std::invalid_argument("make_two_gaussians: bad dim or sigma");
  Dataset out;
  out.num_classes = 2;
  out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  out.labels.resize(n);
  const double offset = separation * sigma / 2.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % 2;
    const double mean = y == 0 ? 0.5 - offset : 0.5 + offset;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = mean + sigma * rng.normal();
      out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::clamp(v, 0.0, 1.0);
    }
    out.labels[i] = y;
  }
  return out;
}

Dataset make_two_point(double p0, double epsilon, std::size_t n) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw std::invalid_argument("make_two_point: p0 must be in (0,1)");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("make_two_point: epsilon must be in (0,1]");
  if (n < 2) throw std::invalid_argument("make_two_point: n must be >= 2");
  const auto n0 = static_cast<std::size_t>(std::llround(p0 * static_cast<double>(n)));
  Dataset out;
  out.num_classes = 2;
  out.inputs.resize(static_cast<Eigen::Index>(n), 1);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool at_zero = i < n0;
    out.inputs(static_cast<Eigen::Index>(i), 0) = at_zero ? 0.0 : epsilon;
    out.labels[i] = at_zero ? 1 : 0;
  }
  return out;
}

}  // namespace ccat
