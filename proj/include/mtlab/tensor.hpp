#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtlab {

namespace detail {

// Allocator that default-initializes on resize. Tensor buffers are fully
// overwritten by the producing op, so value-initialization would be a wasted
// memset on every node.
template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) == 0)
      ::new (static_cast<void*>(p)) U;
    else
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

}  // namespace detail

using DoubleVec = std::vector<double, detail::DefaultInitAllocator<double>>;
using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor of 64-bit floats.
struct Tensor {
  Shape shape;
  DoubleVec data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, DoubleVec d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                  std::to_string(data.size()) + " values");
    for (std::size_t d : shape)
      if (d == 0) throw std::invalid_argument("Tensor: zero extent in shape");
  }
  Tensor(Shape s, std::initializer_list<double> d, bool rg = false)
      : Tensor(std::move(s), DoubleVec(d.begin(), d.end()), rg) {}

  static Tensor zeros(Shape s) {
    Tensor t = uninit(std::move(s));
    std::fill(t.data.begin(), t.data.end(), 0.0);
    return t;
  }
  static Tensor full(Shape s, double v) {
    Tensor t = uninit(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  // Contents unspecified; caller must write every element.
  static Tensor uninit(Shape s) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), DoubleVec(n));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool all_finite() const {
    constexpr std::uint64_t exp_mask = 0x7ff0000000000000ULL;
    std::uint64_t bad = 0;
    for (const double& v : data) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      bad |= static_cast<std::uint64_t>((bits & exp_mask) == exp_mask);
    }
    return bad == 0;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

// Integer token matrix (batch of id sequences). Not part of the autodiff graph.
struct TokenMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> ids;

  TokenMatrix() = default;
  TokenMatrix(std::size_t r, std::size_t c, std::int32_t fill = 0)
      : rows(r), cols(c), ids(r * c, fill) {}

  std::int32_t& at(std::size_t r, std::size_t c) { return ids[r * cols + c]; }
  std::int32_t at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }

  friend bool operator==(const TokenMatrix&, const TokenMatrix&) = default;
};

}  // namespace mtlab
