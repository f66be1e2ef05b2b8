#pragma once

#include <cstddef>

namespace fcl {

/// Channel-last grid geometry of one sample. Flat vectors use height = width = 1.
struct SampleShape {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;

  [[nodiscard]] std::size_t size() const noexcept { return height * width * channels; }
  friend bool operator==(const SampleShape&, const SampleShape&) = default;
};

}  // namespace fcl
