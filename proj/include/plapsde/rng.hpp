#pragma once

#include <array>
#include <cstdint>

namespace plapsde {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The output
/// is a pure function of (key, counter), so streams can be addressed
/// directly without any shared state.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key);
};

/// Standard normal variate addressed by (seed, path, step, mode).
double keyed_normal(std::uint64_t seed, std::uint64_t path_index,
                    std::uint32_t step, std::uint32_t mode);

/// Uniform on (0, 1) addressed by the same key tuple and a lane selector.
double keyed_uniform(std::uint64_t seed, std::uint64_t path_index,
                     std::uint32_t step, std::uint32_t mode);

}  // namespace plapsde
