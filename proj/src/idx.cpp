#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <vector>

#include "astraea/dataset.hpp"
#include "astraea/error.hpp"

namespace astraea {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& file) {
  if (offset + 4 > buf.size()) throw FormatError(file + ": truncated header", buf.size());
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t num_classes) {
  const std::string img_name = images_path.filename().string();
  const std::string lbl_name = labels_path.filename().string();
  const auto images = read_all(images_path);
  const auto labels = read_all(labels_path);

  if (read_be32(images, 0, img_name) != kImageMagic) throw FormatError(img_name + ": bad image magic", 0);
  if (read_be32(labels, 0, lbl_name) != kLabelMagic) throw FormatError(lbl_name + ": bad label magic", 0);

  const std::size_t count = read_be32(images, 4, img_name);
  const std::size_t rows = read_be32(images, 8, img_name);
  const std::size_t cols = read_be32(images, 12, img_name);
  const std::size_t label_count = read_be32(labels, 4, lbl_name);
  if (label_count != count) {
    throw FormatError(lbl_name + ": " + std::to_string(label_count) + " labels for " + std::to_string(count) +
                          " images",
                      4);
  }
  if (rows == 0 || cols == 0) throw FormatError(img_name + ": zero image dimension", 8);

  const std::size_t pixels = rows * cols;
  const std::size_t image_end = 16 + count * pixels;
  if (images.size() < image_end) throw FormatError(img_name + ": truncated pixel data", images.size());
  if (labels.size() < 8 + count) throw FormatError(lbl_name + ": truncated label data", labels.size());

  std::size_t classes = num_classes;
  if (classes == 0) {
    unsigned char max_label = 0;
    for (std::size_t i = 0; i < count; ++i) max_label = std::max(max_label, labels[8 + i]);
    classes = std::max<std::size_t>(2, std::size_t{max_label} + 1);
  }

  LabeledDataset ds(classes, pixels);
  ds.reserve(count);
  std::vector<double> x(pixels);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t base = 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) x[p] = static_cast<double>(images[base + p]) / 255.0;
    const int label = labels[8 + i];
    if (static_cast<std::size_t>(label) >= classes) {
      throw FormatError(lbl_name + ": label " + std::to_string(label) + " exceeds num_classes", 8 + i);
    }
    ds.add(i, x, label);
  }
  return ds;
}

}  // namespace astraea
