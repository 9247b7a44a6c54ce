#include "cfcontra/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "cfcontra/errors.hpp"

namespace cfcontra {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> v, bool rg)
    : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extent must be positive, got " + shape_string(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                         " values");
  }
}

Tensor Tensor::zeros(Shape s) { return filled(std::move(s), 0.0); }

Tensor Tensor::filled(Shape s, double value) {
  const auto n = shape_size(s);
  return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("matrix needs at least one element");
  const auto c = rows.front().size();
  std::vector<double> v;
  v.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) throw DimensionError("ragged matrix rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), c}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape));
  return shape[1];
}

double Tensor::item() const {
  if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_string(shape));
  return values.front();
}

void Tensor::zero_grad() { grad.emplace(values.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw FormatError("unexpected end of tensor stream");
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }

void write_tensor(std::ostream& out, const Tensor& t) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  for (double v : t.values) write_le(out, v);
}

Tensor read_tensor(std::istream& in) {
  const auto rank = read_le<std::uint32_t>(in);
  if (rank == 0 || rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = read_le<std::uint32_t>(in);
  const auto n = shape_size(shape);
  if (n == 0 || n > (std::size_t{1} << 32)) throw FormatError("implausible tensor size " + shape_string(shape));
  std::vector<double> values(n);
  for (auto& v : values) v = read_le<double>(in);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace cfcontra
