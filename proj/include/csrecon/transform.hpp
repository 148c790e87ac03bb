#pragma once

#include <cmath>
#include <vector>

#include "csrecon/tensor.hpp"
#include "csrecon/volume.hpp"

namespace csrecon {

// Real view of a complex tensor [..., C, ny, nz] -> [..., 2C, ny, nz]:
// channel 2k holds Re of complex channel k, channel 2k+1 holds Im.
struct RealChannels {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

inline RealChannels complex_to_channels(const ComplexTensor& t) {
  if (t.shape.size() < 3) throw ShapeError("complex_to_channels: need [..., C, ny, nz]");
  const std::size_t nz = t.shape.back();
  const std::size_t ny = t.shape[t.shape.size() - 2];
  const std::size_t c = t.shape[t.shape.size() - 3];
  RealChannels out;
  out.shape = t.shape;
  out.shape[t.shape.size() - 3] = 2 * c;
  out.values.resize(2 * t.numel());
  const std::size_t plane = ny * nz;
  const std::size_t groups = t.numel() / (c * plane);
  for (std::size_t g = 0; g < groups; ++g) {
    const cplx* in = t.values.data() + g * c * plane;
    double* re = out.values.data() + g * 2 * c * plane;
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < plane; ++i) {
        re[(2 * k) * plane + i] = in[k * plane + i].real();
        re[(2 * k + 1) * plane + i] = in[k * plane + i].imag();
      }
  }
  return out;
}

inline ComplexTensor channels_to_complex(const RealChannels& r) {
  if (r.shape.size() < 3) throw ShapeError("channels_to_complex: need [..., 2C, ny, nz]");
  const std::size_t nz = r.shape.back();
  const std::size_t ny = r.shape[r.shape.size() - 2];
  const std::size_t c2 = r.shape[r.shape.size() - 3];
  if (c2 % 2 != 0) throw ShapeError("channels_to_complex: odd channel count");
  ComplexTensor out;
  out.shape = r.shape;
  out.shape[r.shape.size() - 3] = c2 / 2;
  out.values.resize(r.values.size() / 2);
  const std::size_t plane = ny * nz;
  const std::size_t groups = out.numel() / ((c2 / 2) * plane);
  for (std::size_t g = 0; g < groups; ++g) {
    const double* re = r.values.data() + g * c2 * plane;
    cplx* co = out.values.data() + g * (c2 / 2) * plane;
    for (std::size_t k = 0; k < c2 / 2; ++k)
      for (std::size_t i = 0; i < plane; ++i)
        co[k * plane + i] = cplx(re[(2 * k) * plane + i], re[(2 * k + 1) * plane + i]);
  }
  return out;
}

// Square-root sum-of-squares coil combination, PerCoil -> Combined.
inline ImageVolume sum_of_squares(const ImageVolume& x) {
  if (x.kind != ImageKind::PerCoil) throw ShapeError("sum_of_squares: input must be PerCoil");
  const std::size_t ns = x.ns(), nc = x.nc(), ny = x.ny(), nz = x.nz();
  ImageVolume out;
  out.kind = ImageKind::Combined;
  out.meta = x.meta;
  out.data = ComplexTensor({ns, ny, nz});
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < ny * nz; ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        const cplx& v = x.data[(s * nc + c) * ny * nz + i];
        acc += v.real() * v.real() + v.imag() * v.imag();
      }
      out.data[s * ny * nz + i] = cplx(std::sqrt(acc), 0.0);
    }
  return out;
}

}  // namespace csrecon
