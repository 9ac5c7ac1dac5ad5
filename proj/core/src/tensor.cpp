#include "stepscale/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "stepscale/errors.hpp"

namespace stepscale {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ConfigError("tensor shape " + shape_to_string(shape_) + " does not match " +
                      std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  Shape out_shape = shape_;
  out_shape.at(0) = indices.size();
  const std::size_t width = row_size();
  std::vector<double> out(indices.size() * width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows()) throw UsageError("gather_rows: row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw UsageError("slice_rows: bad range");
  Shape out_shape = shape_;
  out_shape[0] = end - begin;
  const std::size_t width = row_size();
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * width),
                          data_.begin() + static_cast<std::ptrdiff_t>(end * width));
  return Tensor(std::move(out_shape), std::move(out));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace stepscale
