#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "astraea/dataset.hpp"
#include "astraea/model.hpp"

namespace testing {

inline astraea::Matrix random_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  astraea::Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, static_cast<int>(num_classes) - 1);
  std::vector<int> y(n);
  for (auto& v : y) v = u(rng);
  return y;
}

inline astraea::ParameterVector random_params(const astraea::ModelArch& arch, std::uint64_t seed, double half = 0.5) {
  return astraea::ParameterVector::random_uniform(arch, seed, half);
}

// Dataset where sample i has label labels[i] and id i.
inline astraea::LabeledDataset dataset_from(const astraea::Matrix& x, const std::vector<int>& y, std::size_t num_classes) {
  astraea::LabeledDataset d(num_classes, static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    d.add(static_cast<std::uint64_t>(i), std::span<const double>(x.row(i).data(), static_cast<std::size_t>(x.cols())),
          y[static_cast<std::size_t>(i)]);
  }
  return d;
}

// One-hot style data: every sample of class c is e_c scaled, so histograms are easy to build by hand.
inline astraea::LabeledDataset counts_dataset(const std::vector<std::int64_t>& counts, std::size_t feature_dim,
                                              std::uint64_t first_id = 0) {
  astraea::LabeledDataset d(counts.size(), feature_dim);
  std::uint64_t id = first_id;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::vector<double> f(feature_dim, 0.0);
    f[c % feature_dim] = 1.0;
    for (std::int64_t i = 0; i < counts[c]; ++i) d.add(id++, f, static_cast<int>(c));
  }
  return d;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("astraea_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

// IDX pair with `count` images of rows x cols; pixel (i, r, c) = (i * 7 + r * cols + c) % 256.
inline void write_idx_fixture(const std::filesystem::path& images, const std::filesystem::path& labels, std::uint32_t count,
                              std::uint32_t rows, std::uint32_t cols, const std::vector<std::uint8_t>& label_values) {
  std::ofstream img(images, std::ios::binary);
  put_be32(img, 0x00000803);
  put_be32(img, count);
  put_be32(img, rows);
  put_be32(img, cols);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t p = 0; p < rows * cols; ++p) img.put(static_cast<char>((i * 7 + p) % 256));
  }
  std::ofstream lab(labels, std::ios::binary);
  put_be32(lab, 0x00000801);
  put_be32(lab, static_cast<std::uint32_t>(label_values.size()));
  for (auto v : label_values) lab.put(static_cast<char>(v));
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
