#pragma once

// Centered, orthonormal 2D Fourier operators applied channel-wise.
// Radix-2 for power-of-two extents, Bluestein's chirp-z otherwise, so any
// extent works with double accuracy. Zero frequency sits at the
// floor-center pixel ((n-1)/2), matching the mask module's grid center.

#include <complex>
#include <cstddef>
#include <memory>
#include <unordered_map>
#include <vector>

#include "csrecon/tensor.hpp"
#include "csrecon/volume.hpp"

namespace csrecon {
namespace detail {

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2, unnormalized. inverse toggles twiddle sign.
inline void fft_pow2(cplx* a, std::size_t n, bool inverse) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = kTwoPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Per-length state for Bluestein's algorithm.
struct BluesteinPlan {
  std::size_t n = 0, m = 0;
  std::vector<cplx> chirp;       // w^{k^2/2}, length n
  std::vector<cplx> filter_fft;  // FFT of the chirp filter, length m
};

inline const BluesteinPlan& bluestein_plan(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::unique_ptr<BluesteinPlan>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return *it->second;
  auto plan = std::make_unique<BluesteinPlan>();
  plan->n = n;
  plan->m = next_pow2(2 * n - 1);
  plan->chirp.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // angle = pi * k^2 / n, computed mod 2n to stay accurate for large k
    std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
    double ang = kTwoPi / 2.0 * static_cast<double>(k2) / static_cast<double>(n);
    plan->chirp[k] = cplx(std::cos(ang), -std::sin(ang));
  }
  plan->filter_fft.assign(plan->m, cplx(0.0, 0.0));
  plan->filter_fft[0] = std::conj(plan->chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    plan->filter_fft[k] = std::conj(plan->chirp[k]);
    plan->filter_fft[plan->m - k] = std::conj(plan->chirp[k]);
  }
  fft_pow2(plan->filter_fft.data(), plan->m, false);
  const BluesteinPlan& ref = *plan;
  cache.emplace(n, std::move(plan));
  return ref;
}

// Arbitrary-length unnormalized DFT (forward) / unnormalized inverse DFT.
inline void fft_any(cplx* a, std::size_t n, bool inverse) {
  if (n == 1) return;
  if (is_pow2(n)) {
    fft_pow2(a, n, inverse);
    return;
  }
  const BluesteinPlan& plan = bluestein_plan(n);
  thread_local std::vector<cplx> buf;
  buf.assign(plan.m, cplx(0.0, 0.0));
  if (inverse) {
    for (std::size_t k = 0; k < n; ++k) buf[k] = std::conj(a[k]) * plan.chirp[k];
  } else {
    for (std::size_t k = 0; k < n; ++k) buf[k] = a[k] * plan.chirp[k];
  }
  fft_pow2(buf.data(), plan.m, false);
  for (std::size_t k = 0; k < plan.m; ++k) buf[k] *= plan.filter_fft[k];
  fft_pow2(buf.data(), plan.m, true);
  double inv_m = 1.0 / static_cast<double>(plan.m);
  if (inverse) {
    for (std::size_t k = 0; k < n; ++k) a[k] = std::conj(buf[k] * plan.chirp[k] * inv_m);
  } else {
    for (std::size_t k = 0; k < n; ++k) a[k] = buf[k] * plan.chirp[k] * inv_m;
  }
}

}  // namespace detail

enum class FtDirection { Forward, Inverse };

// Centered orthonormal 2D transform plan for one [ny, nz] plane.
struct FourierPlan {
  std::size_t ny = 0, nz = 0;

  FourierPlan(std::size_t ny_, std::size_t nz_) : ny(ny_), nz(nz_) {
    if (ny < 2 || nz < 2)
      throw ShapeError("FourierPlan: extents must be >= 2, got " +
                       std::to_string(ny) + "x" + std::to_string(nz));
  }

  // Transforms one contiguous row-major plane in place.
  void execute(cplx* plane, FtDirection dir) const {
    const bool inv = dir == FtDirection::Inverse;
    const std::size_t cy = center_index(ny), cz = center_index(nz);
    thread_local std::vector<cplx> line;
    // rows: unroll so the center column lands at index 0, transform, reroll
    line.resize(nz);
    for (std::size_t y = 0; y < ny; ++y) {
      cplx* row = plane + y * nz;
      for (std::size_t z = 0; z < nz; ++z) line[z] = row[(z + cz) % nz];
      detail::fft_any(line.data(), nz, inv);
      for (std::size_t z = 0; z < nz; ++z) row[(z + cz) % nz] = line[z];
    }
    line.resize(ny);
    for (std::size_t z = 0; z < nz; ++z) {
      for (std::size_t y = 0; y < ny; ++y) line[y] = plane[((y + cy) % ny) * nz + z];
      detail::fft_any(line.data(), ny, inv);
      for (std::size_t y = 0; y < ny; ++y) plane[((y + cy) % ny) * nz + z] = line[y];
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(ny) * static_cast<double>(nz));
    for (std::size_t i = 0; i < ny * nz; ++i) plane[i] *= scale;
  }
};

// Channel-wise centered transforms over [..., ny, nz] complex tensors.
inline void fft2c_planes(ComplexTensor& t, FtDirection dir) {
  if (t.shape.size() < 2) throw ShapeError("fft2c: need at least 2 extents");
  const std::size_t nz = t.shape.back();
  const std::size_t ny = t.shape[t.shape.size() - 2];
  FourierPlan plan(ny, nz);
  const std::size_t planes = t.numel() / (ny * nz);
  for (std::size_t p = 0; p < planes; ++p) plan.execute(t.values.data() + p * ny * nz, dir);
}

inline KSpaceVolume fft2c(const ImageVolume& img) {
  if (img.kind != ImageKind::PerCoil) throw ShapeError("fft2c: input must be PerCoil");
  ComplexTensor t = img.data;
  fft2c_planes(t, FtDirection::Forward);
  return KSpaceVolume(std::move(t), img.meta);
}

inline ImageVolume ifft2c(const KSpaceVolume& ksp) {
  ImageVolume img;
  img.data = ksp.data;
  img.kind = ImageKind::PerCoil;
  img.meta = ksp.meta;
  fft2c_planes(img.data, FtDirection::Inverse);
  return img;
}

}  // namespace csrecon
