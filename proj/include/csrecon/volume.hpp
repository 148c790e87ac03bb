#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csrecon/tensor.hpp"

namespace csrecon {

enum class Provenance { Synthetic, ExternalFile };

struct DatasetMeta {
  std::size_t ns = 0, nc = 0, ny = 0, nz = 0;
  std::uint64_t seed = 0;
  Provenance provenance = Provenance::Synthetic;
  double scale = 1.0;  // normalization divisor applied to k-space, > 0

  bool operator==(const DatasetMeta&) const = default;
};

inline const char* provenance_name(Provenance p) {
  return p == Provenance::Synthetic ? "synthetic" : "external";
}

// Multi-coil k-space, extents [Ns, Nc, Ny, Nz].
struct KSpaceVolume {
  ComplexTensor data;
  DatasetMeta meta;

  KSpaceVolume() = default;
  KSpaceVolume(ComplexTensor d, DatasetMeta m) : data(std::move(d)), meta(m) {
    validate();
  }

  void validate() const {
    if (data.shape.size() != 4)
      throw ShapeError("KSpaceVolume: expected 4 extents, got " + shape_str(data.shape));
    if (data.shape[1] < 1 || data.shape[2] < 16 || data.shape[3] < 16 || data.shape[0] < 1)
      throw ShapeError("KSpaceVolume: extents out of range " + shape_str(data.shape));
  }

  std::size_t ns() const { return data.shape[0]; }
  std::size_t nc() const { return data.shape[1]; }
  std::size_t ny() const { return data.shape[2]; }
  std::size_t nz() const { return data.shape[3]; }

  cplx& at(std::size_t s, std::size_t c, std::size_t y, std::size_t z) {
    return data[((s * nc() + c) * ny() + y) * nz() + z];
  }
  const cplx& at(std::size_t s, std::size_t c, std::size_t y, std::size_t z) const {
    return data[((s * nc() + c) * ny() + y) * nz() + z];
  }
};

enum class ImageKind { PerCoil, Combined };

// PerCoil: complex [Ns, Nc, Ny, Nz]. Combined: real magnitudes [Ns, Ny, Nz]
// kept in the real component of `data` with zero imaginary parts.
struct ImageVolume {
  ComplexTensor data;
  ImageKind kind = ImageKind::PerCoil;
  DatasetMeta meta;

  std::size_t ns() const { return data.shape[0]; }
  std::size_t nc() const { return kind == ImageKind::PerCoil ? data.shape[1] : 1; }
  std::size_t ny() const { return data.shape[kind == ImageKind::PerCoil ? 2 : 1]; }
  std::size_t nz() const { return data.shape[kind == ImageKind::PerCoil ? 3 : 2]; }

  double magnitude(std::size_t s, std::size_t y, std::size_t z) const {
    if (kind != ImageKind::Combined)
      throw ShapeError("magnitude(): volume is not Combined");
    return data[(s * ny() + y) * nz() + z].real();
  }
};

// Synthetic receive-coil sensitivity maps, [Nc, Ny, Nz].
struct CoilSensitivities {
  ComplexTensor maps;
  double smoothness_scale = 0.25;  // spatial bandwidth of the generated maps
  double gradient_bound = 0.15;    // max allowed per-pixel |map| gradient

  std::size_t nc() const { return maps.shape[0]; }
  std::size_t ny() const { return maps.shape[1]; }
  std::size_t nz() const { return maps.shape[2]; }

  const cplx& at(std::size_t c, std::size_t y, std::size_t z) const {
    return maps[(c * ny() + y) * nz() + z];
  }
};

}  // namespace csrecon
