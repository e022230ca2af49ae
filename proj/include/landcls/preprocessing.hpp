#pragma once

#include <array>

namespace landcls {

// value * scale + offset[c] per channel.
struct Preprocessing {
  float scale = 1.0f / 255.0f;
  std::array<float, 3> offsets{0.0f, 0.0f, 0.0f};
  bool operator==(const Preprocessing&) const = default;
};

}  // namespace landcls
