#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace saml {

/// Row-major 2-D grid, 0-indexed. Pixel (r, c) with r = row from top.
/// The one coordinate convention shared by every module.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width), cells_(size_t(height) * size_t(width), fill) {
    if (height < 0 || width < 0) throw std::invalid_argument("Grid: negative dimension");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  T& at(int r, int c) { return cells_[size_t(r) * width_ + c]; }
  const T& at(int r, int c) const { return cells_[size_t(r) * width_ + c]; }

  T& operator[](size_t i) { return cells_[i]; }
  const T& operator[](size_t i) const { return cells_[i]; }

  T* row(int r) { return cells_.data() + size_t(r) * width_; }
  const T* row(int r) const { return cells_.data() + size_t(r) * width_; }

  std::vector<T>& data() { return cells_; }
  const std::vector<T>& data() const { return cells_; }

  template <typename U>
  bool same_shape(const Grid<U>& o) const {
    return height_ == o.height() && width_ == o.width();
  }

  bool operator==(const Grid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> cells_;
};

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

using RgbImage = Grid<Rgb>;
using Mask = Grid<uint8_t>;       // 0 = false, 1 = true
using ClassGrid = Grid<uint8_t>;  // 0 = background, 1 = podocyte, 2 = mesangial

inline size_t count_true(const Mask& m) {
  size_t n = 0;
  for (uint8_t v : m.data()) n += (v != 0);
  return n;
}

}  // namespace saml
