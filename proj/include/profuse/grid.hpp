#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace profuse {

/// Dense row-major 2D array indexed as (x, y) with x along the width.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw std::invalid_argument("Grid2D: negative extent");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::size_t offset(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  T& operator()(int x, int y) { return data_[offset(x, y)]; }
  const T& operator()(int x, int y) const { return data_[offset(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  template <typename U>
  bool same_shape(const Grid2D<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// 0/1 per pixel.
using BinaryMask = Grid2D<std::uint8_t>;
using LabelMap = Grid2D<std::uint16_t>;

inline std::size_t count_on(const BinaryMask& mask) {
  std::size_t n = 0;
  for (auto v : mask.data()) n += v != 0;
  return n;
}

}  // namespace profuse
