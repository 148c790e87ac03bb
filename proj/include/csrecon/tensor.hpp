#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "csrecon/common.hpp"

namespace csrecon {

using cplx = std::complex<double>;

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major complex array.
struct ComplexTensor {
  std::vector<std::size_t> shape;
  std::vector<cplx> values;

  ComplexTensor() = default;
  explicit ComplexTensor(std::vector<std::size_t> s)
      : shape(std::move(s)), values(shape_numel(shape)) {}

  std::size_t numel() const { return values.size(); }

  cplx& operator[](std::size_t i) { return values[i]; }
  const cplx& operator[](std::size_t i) const { return values[i]; }

  bool operator==(const ComplexTensor& o) const {
    return shape == o.shape && values == o.values;
  }

  void check_finite(const char* where) const {
    for (const cplx& v : values) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw ShapeError(std::string(where) + ": non-finite value in tensor");
    }
  }
};

// Round every component to float32 precision; the on-disk container stores
// float32, and synthesized data is quantized once so save/load round trips
// bit-exactly.
inline void quantize_to_float32(ComplexTensor& t) {
  for (cplx& v : t.values)
    v = cplx(static_cast<float>(v.real()), static_cast<float>(v.imag()));
}

}  // namespace csrecon
