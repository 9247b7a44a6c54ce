#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cfcontra {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient slot.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;
  bool requires_grad = false;

  Tensor() = default;
  /// Throws DimensionError if the extents do not multiply to values.size().
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  /// 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return values.size() == 1; }
  double item() const;

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }

  void zero_grad();
  bool all_finite() const;

  /// Shape and values only; gradients are ignored.
  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape == b.shape && a.values == b.values; }
};

/// Writes u32 rank, u32 extents, then f64 values, all little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in);

}  // namespace cfcontra
