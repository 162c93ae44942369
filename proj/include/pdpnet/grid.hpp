#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pdpnet/errors.hpp"

namespace pdpnet {

/// Dense row-major 2D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw ShapeMismatch("negative grid extent");
    data_.assign(static_cast<std::size_t>(rows) * cols, fill);
  }
  Grid(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * cols)
      throw ShapeMismatch("grid data size does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<T> values() & { return data_; }
  std::span<const T> values() const& { return data_; }
  /// Temporaries hand over their storage so range-for stays valid.
  std::vector<T> values() && { return std::move(data_); }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  template <typename U>
  bool same_shape(const Grid<U>& o) const { return rows_ == o.rows() && cols_ == o.cols(); }

  bool operator==(const Grid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

/// Physical pixel size in millimetres, (row axis, column axis).
struct Spacing {
  double row_mm = 1.0;
  double col_mm = 1.0;
  bool operator==(const Spacing&) const = default;
};

struct ImageSlice {
  Grid<float> pixels;
  Spacing spacing;
  std::string patient_id;
  int cohort_id = 1;
};

/// Binary mask, every value is 0 or 1.
struct LabelMask {
  Grid<std::uint8_t> values;
  Spacing spacing;

  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto v : values.values()) n += v;
    return n;
  }
};

}  // namespace pdpnet
