#include "stepscale/quasirand.hpp"

#include <bit>
#include <cmath>

#include <nlohmann/json.hpp>

#include "stepscale/errors.hpp"

namespace stepscale {

namespace {

struct PrimitivePolynomial {
  unsigned degree;
  unsigned coefficients;  // interior coefficients a_1..a_{s-1}, a_1 most significant
  std::array<std::uint32_t, 5> initial;
};

// new-joe-kuo-6.21201, dimensions 2..8.
constexpr std::array<PrimitivePolynomial, SobolSequence::kMaxDimension - 1> kPolynomials{{
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
}};

}  // namespace

SobolSequence::SobolSequence(std::size_t dimension) : dim_(dimension), directions_(dimension), state_(dimension, 0) {
  if (dimension == 0 || dimension > kMaxDimension) {
    throw ConfigError("Sobol dimension " + std::to_string(dimension) + " outside the provisioned range [1, " +
                      std::to_string(kMaxDimension) + "]");
  }
  for (std::size_t i = 0; i < kBits; ++i) directions_[0][i] = std::uint32_t{1} << (kBits - 1 - i);
  for (std::size_t d = 1; d < dimension; ++d) {
    const auto& poly = kPolynomials[d - 1];
    const std::size_t s = poly.degree;
    auto& v = directions_[d];
    for (std::size_t i = 0; i < s; ++i) v[i] = poly.initial[i] << (kBits - 1 - i);
    for (std::size_t i = s; i < kBits; ++i) {
      v[i] = v[i - s] ^ (v[i - s] >> s);
      for (std::size_t k = 1; k < s; ++k) {
        if ((poly.coefficients >> (s - 1 - k)) & 1u) v[i] ^= v[i - k];
      }
    }
  }
}

std::vector<std::uint32_t> SobolSequence::next_integers() {
  ++index_;
  if (index_ >> kBits) throw ConfigError("Sobol sequence exhausted (2^32 points)");
  const auto c = static_cast<std::size_t>(std::countr_zero(index_));
  for (std::size_t d = 0; d < dim_; ++d) state_[d] ^= directions_[d][c];
  return state_;
}

std::vector<double> SobolSequence::next() {
  const auto ints = next_integers();
  std::vector<double> out(ints.size());
  for (std::size_t d = 0; d < ints.size(); ++d) out[d] = std::ldexp(static_cast<double>(ints[d]), -32);
  return out;
}

std::string to_string(Scale s) {
  switch (s) {
    case Scale::linear: return "linear";
    case Scale::log10: return "log10";
    case Scale::one_minus_log10: return "one-minus-log10";
  }
  return "?";
}

Scale parse_scale(const std::string& s) {
  if (s == "linear") return Scale::linear;
  if (s == "log10") return Scale::log10;
  if (s == "one-minus-log10") return Scale::one_minus_log10;
  throw ConfigError("unknown search scale '" + s + "'");
}

void SearchDimension::validate() const {
  if (name.empty()) throw ConfigError("search dimension needs a name");
  if (!(lower < upper)) throw ConfigError("search dimension '" + name + "': lower must be < upper");
  if (scale == Scale::log10 && !(lower > 0.0)) {
    throw ConfigError("search dimension '" + name + "': log10 scale needs positive bounds");
  }
  if (scale == Scale::one_minus_log10 && !(upper < 1.0)) {
    throw ConfigError("search dimension '" + name + "': one-minus-log10 scale needs bounds below 1");
  }
}

double SearchDimension::map(double u) const {
  switch (scale) {
    case Scale::linear: return lower + u * (upper - lower);
    case Scale::log10: {
      const double a = std::log10(lower), b = std::log10(upper);
      return u == 0.0 ? lower : std::pow(10.0, a + u * (b - a));
    }
    case Scale::one_minus_log10: {
      const double a = std::log10(1.0 - lower), b = std::log10(1.0 - upper);
      return u == 0.0 ? lower : 1.0 - std::pow(10.0, a + u * (b - a));
    }
  }
  return lower;
}

void to_json(nlohmann::json& j, const SearchDimension& d) {
  j = nlohmann::json{{"name", d.name}, {"scale", to_string(d.scale)}, {"lower", d.lower}, {"upper", d.upper}};
}

void from_json(const nlohmann::json& j, SearchDimension& d) {
  d.name = j.at("name").get<std::string>();
  d.scale = parse_scale(j.value("scale", std::string("log10")));
  d.lower = j.at("lower").get<double>();
  d.upper = j.at("upper").get<double>();
}

Metaparams map_to_space(std::span<const double> point, std::span<const SearchDimension> space) {
  if (point.size() != space.size()) {
    throw ConfigError("point dimension " + std::to_string(point.size()) + " != search space dimension " +
                      std::to_string(space.size()));
  }
  Metaparams out;
  for (std::size_t i = 0; i < space.size(); ++i) {
    space[i].validate();
    out[space[i].name] = space[i].map(point[i]);
  }
  return out;
}

std::vector<Metaparams> draw_metaparams(std::span<const SearchDimension> space, std::size_t budget) {
  SobolSequence seq(space.size());
  std::vector<Metaparams> out;
  out.reserve(budget);
  for (std::size_t t = 0; t < budget; ++t) out.push_back(map_to_space(seq.next(), space));
  return out;
}

}  // namespace stepscale
