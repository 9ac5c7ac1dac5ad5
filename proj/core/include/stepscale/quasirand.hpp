#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stepscale {

/// Gray-code Sobol sequence with 32-bit resolution.
///
/// Direction numbers come from the Joe & Kuo primitive-polynomial table
/// (new-joe-kuo-6.21201) for the first eight dimensions; dimension 1 is the
/// van der Corput sequence. The all-zero point at index 0 is never emitted:
/// the first call to next() returns the point at index 1.
class SobolSequence {
 public:
  static constexpr std::size_t kMaxDimension = 8;
  static constexpr std::size_t kBits = 32;
  static constexpr std::uint32_t kTableVersion = 1;

  explicit SobolSequence(std::size_t dimension);

  std::size_t dimension() const noexcept { return dim_; }
  /// Index of the next point to be emitted.
  std::uint64_t next_index() const noexcept { return index_ + 1; }

  std::vector<double> next();
  /// Integer coordinates of the next point (value = x / 2^32).
  std::vector<std::uint32_t> next_integers();

 private:
  std::size_t dim_;
  std::uint64_t index_ = 0;
  std::vector<std::array<std::uint32_t, kBits>> directions_;
  std::vector<std::uint32_t> state_;
};

enum class Scale { linear, log10, one_minus_log10 };

std::string to_string(Scale s);
Scale parse_scale(const std::string& s);

/// One searched metaparameter.
struct SearchDimension {
  std::string name;
  Scale scale = Scale::log10;
  double lower = 0.0;
  double upper = 1.0;

  void validate() const;
  /// Maps u in [0, 1] into [lower, upper] along the dimension's scale.
  double map(double u) const;
};

void to_json(nlohmann::json& j, const SearchDimension& d);
void from_json(const nlohmann::json& j, SearchDimension& d);

using Metaparams = std::map<std::string, double>;

Metaparams map_to_space(std::span<const double> point, std::span<const SearchDimension> space);

/// The first `budget` Sobol points mapped into the space, in trial order.
std::vector<Metaparams> draw_metaparams(std::span<const SearchDimension> space, std::size_t budget);

}  // namespace stepscale
