#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace stepscale {

/// Binary keep/prune vector over the flat parameter view. bits[i] == 1 keeps
/// parameter i; `sparsity` is the requested pruned fraction.
struct Mask {
  std::vector<std::uint8_t> bits;
  double sparsity = 0.0;

  static Mask all_ones(std::size_t m) { return Mask{std::vector<std::uint8_t>(m, 1), 0.0}; }

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t kept() const noexcept {
    std::size_t n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
  }
  std::size_t pruned() const noexcept { return bits.size() - kept(); }

  friend bool operator==(const Mask&, const Mask&) = default;
};

}  // namespace stepscale
