#include "stepscale/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include "stepscale/errors.hpp"

namespace stepscale {

Shape Dataset::feature_shape() const {
  const Shape& s = inputs.shape();
  return s.empty() ? Shape{} : Shape(s.begin() + 1, s.end());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.inputs = inputs.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(labels.at(i));
  out.num_classes = num_classes;
  return out;
}

void Dataset::validate() const {
  if (inputs.rows() != labels.size()) {
    throw ConfigError("dataset has " + std::to_string(inputs.rows()) + " inputs but " +
                      std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

SplitDataset split_validation(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must be in (0, 1)");
  const std::size_t n = data.size();
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val == n) throw ConfigError("dataset too small for a validation split");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(val)};
}

namespace {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32_be(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::uint64_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return out;
  }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated IDX file: expected ") + std::to_string(n) + " bytes of " +
                            what + ", found " + std::to_string(bytes_.size() - pos_),
                        bytes_.size());
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void check_magic(std::uint32_t got, std::uint32_t want) {
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08x (expected 0x%08x)", got, want);
    throw FormatError(buf, 0);
  }
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  check_magic(r.u32_be("magic"), kIdxLabelsMagic);
  const std::uint32_t count = r.u32_be("label count");
  auto payload = r.take(count, "labels");
  if (r.remaining() != 0) throw FormatError("trailing bytes after IDX labels", r.pos());
  return {payload.begin(), payload.end()};
}

Tensor parse_idx_images(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::uint32_t magic = r.u32_be("magic");
  if (magic != kIdxColourImagesMagic) check_magic(magic, kIdxImagesMagic);
  const std::uint32_t count = r.u32_be("image count");
  const std::uint32_t channels = magic == kIdxColourImagesMagic ? r.u32_be("channel count") : 1;
  const std::uint32_t rows = r.u32_be("row count");
  const std::uint32_t cols = r.u32_be("column count");
  const std::uint64_t total = std::uint64_t{count} * channels * rows * cols;
  auto payload = r.take(total, "pixels");
  if (r.remaining() != 0) throw FormatError("trailing bytes after IDX images", r.pos());

  std::vector<double> data(payload.size());
  std::transform(payload.begin(), payload.end(), data.begin(), [](std::uint8_t p) { return p / 255.0; });
  return Tensor({count, channels, rows, cols}, std::move(data));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  Dataset ds;
  ds.inputs = parse_idx_images(read_file(images));
  ds.labels = parse_idx_labels(read_file(labels));
  if (ds.inputs.rows() != ds.labels.size()) {
    throw FormatError("IDX image count " + std::to_string(ds.inputs.rows()) + " != label count " +
                          std::to_string(ds.labels.size()),
                      4);
  }
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  return ds;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_u32_be(out, kIdxLabelsMagic);
  put_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_images(std::span<const std::uint8_t> pixels, std::uint32_t count,
                                            std::uint32_t rows, std::uint32_t cols) {
  if (pixels.size() != std::size_t{count} * rows * cols) {
    throw ConfigError("encode_idx_images: pixel count does not match header");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + pixels.size());
  put_u32_be(out, kIdxImagesMagic);
  put_u32_be(out, count);
  put_u32_be(out, rows);
  put_u32_be(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2 || spec.dims == 0 || spec.per_class == 0 || spec.clusters_per_class == 0) {
    throw ConfigError("synth dataset: classes >= 2, dims/per_class/clusters >= 1 required");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n_centres = spec.classes * spec.clusters_per_class;
  const double centre_scale = spec.separation / std::sqrt(static_cast<double>(spec.dims));
  std::vector<double> centres(n_centres * spec.dims);
  for (auto& c : centres) c = centre_scale * normal(rng);

  if (!(spec.scale_ratio >= 1.0)) throw ConfigError("synth dataset: scale_ratio must be >= 1");
  std::vector<double> coord_scale(spec.dims, 1.0);
  for (std::size_t d = 0; spec.dims > 1 && d < spec.dims; ++d) {
    const double t = static_cast<double>(d) / static_cast<double>(spec.dims - 1) - 0.5;
    coord_scale[d] = std::pow(spec.scale_ratio, t);
  }

  // Rows of a random orthogonal matrix by Gram-Schmidt on Gaussian rows.
  const std::size_t dims = spec.dims;
  std::vector<double> rotation;
  if (spec.rotate) {
    rotation.resize(dims * dims);
    for (std::size_t r = 0; r < dims; ++r) {
      double* row = &rotation[r * dims];
      for (std::size_t c = 0; c < dims; ++c) row[c] = normal(rng);
      for (std::size_t p = 0; p < r; ++p) {
        const double* prev = &rotation[p * dims];
        const double dot = std::inner_product(row, row + dims, prev, 0.0);
        for (std::size_t c = 0; c < dims; ++c) row[c] -= dot * prev[c];
      }
      const double norm = std::sqrt(std::inner_product(row, row + dims, row, 0.0));
      for (std::size_t c = 0; c < dims; ++c) row[c] /= norm;
    }
  }

  const std::size_t n = spec.classes * spec.per_class;
  std::vector<double> x(n * spec.dims);
  std::vector<double> sample(dims);
  std::vector<int> y(n);
  // Interleave classes so any prefix is close to balanced.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % spec.classes;
    const std::size_t cluster = (i / spec.classes) % spec.clusters_per_class;
    const double* centre = &centres[(cls * spec.clusters_per_class + cluster) * spec.dims];
    for (std::size_t d = 0; d < dims; ++d) {
      sample[d] = coord_scale[d] * (spec.offset + centre[d] + spec.noise * normal(rng));
    }
    double* out = &x[i * dims];
    if (spec.rotate) {
      for (std::size_t r = 0; r < dims; ++r) {
        out[r] = std::inner_product(sample.begin(), sample.end(), &rotation[r * dims], 0.0);
      }
    } else {
      std::copy(sample.begin(), sample.end(), out);
    }
    y[i] = static_cast<int>(cls);
  }
  return Dataset{Tensor({n, spec.dims}, std::move(x)), std::move(y), spec.classes};
}

}  // namespace stepscale
