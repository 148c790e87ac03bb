#pragma once

// Synthetic multi-coil data: randomized ellipse phantoms multiplied by
// smooth complex coil maps, transformed to k-space. Stands in for clinical
// acquisitions so the whole pipeline runs self-contained.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "csrecon/common.hpp"
#include "csrecon/fft.hpp"
#include "csrecon/transform.hpp"
#include "csrecon/volume.hpp"

namespace csrecon {

// Smooth complex sensitivity maps: Gaussian-lobe magnitudes anchored around
// the image border plus a small floor, with low-order polynomial phase.
// A trivial_coil request with Nc=1 returns the constant map 1+0i.
inline CoilSensitivities generate_coil_maps(std::uint64_t seed, std::size_t nc, std::size_t ny,
                                            std::size_t nz, bool trivial_coil = false) {
  if (nc < 1 || nc > 64) throw ParamError("generate_coil_maps: Nc must be in [1, 64]");
  CoilSensitivities coils;
  coils.maps = ComplexTensor({nc, ny, nz});
  if (trivial_coil) {
    if (nc != 1) throw ParamError("generate_coil_maps: trivial coil requires Nc = 1");
    for (cplx& v : coils.maps.values) v = cplx(1.0, 0.0);
    return coils;
  }
  Rng rng(derive_seed(seed, 0x636f696c));
  const double diag = std::sqrt(static_cast<double>(ny * ny + nz * nz));
  for (std::size_t c = 0; c < nc; ++c) {
    // anchor each lobe on a ring outside the image center
    const double ang = 6.283185307179586 * (static_cast<double>(c) + rng.uniform(0.0, 0.5)) /
                       static_cast<double>(nc);
    const double cy = 0.5 * static_cast<double>(ny) * (1.0 + 0.85 * std::sin(ang));
    const double cz = 0.5 * static_cast<double>(nz) * (1.0 + 0.85 * std::cos(ang));
    const double sigma = diag * (0.35 + 0.15 * rng.uniform());
    const double py = rng.uniform(-1.0, 1.0) / static_cast<double>(ny);
    const double pz = rng.uniform(-1.0, 1.0) / static_cast<double>(nz);
    const double p0 = rng.uniform(0.0, 6.283185307179586);
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = 0; z < nz; ++z) {
        const double dy = static_cast<double>(y) - cy, dz = static_cast<double>(z) - cz;
        const double mag = 0.1 + std::exp(-(dy * dy + dz * dz) / (2.0 * sigma * sigma));
        const double phase = p0 + py * static_cast<double>(y) * static_cast<double>(y) * 0.05 +
                             pz * static_cast<double>(z) * static_cast<double>(z) * 0.05;
        coils.maps[(c * ny + y) * nz + z] = cplx(mag * std::cos(phase), mag * std::sin(phase));
      }
  }
  return coils;
}

namespace detail {

struct Ellipse {
  double cy, cz, ay, az, theta, intensity;
};

// Shepp-Logan-style slice: skull ring, interior, and a handful of random
// internal ellipses, in normalized [-1, 1]^2 coordinates.
inline std::vector<Ellipse> random_ellipses(Rng& rng) {
  std::vector<Ellipse> es;
  es.push_back({0.0, 0.0, 0.92, 0.78, 0.0, 1.0});
  es.push_back({0.0, 0.0, 0.87, 0.73, 0.0, -0.35});
  const int n = 4 + static_cast<int>(rng.uniform_int(5));
  for (int i = 0; i < n; ++i) {
    Ellipse e;
    e.cy = rng.uniform(-0.5, 0.5);
    e.cz = rng.uniform(-0.45, 0.45);
    e.ay = rng.uniform(0.06, 0.35);
    e.az = rng.uniform(0.06, 0.35);
    e.theta = rng.uniform(0.0, 3.141592653589793);
    e.intensity = rng.uniform(-0.3, 0.45);
    es.push_back(e);
  }
  return es;
}

inline void render_slice(const std::vector<Ellipse>& es, std::size_t ny, std::size_t nz,
                         double* out) {
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t z = 0; z < nz; ++z) {
      const double u = 2.0 * static_cast<double>(y) / static_cast<double>(ny - 1) - 1.0;
      const double v = 2.0 * static_cast<double>(z) / static_cast<double>(nz - 1) - 1.0;
      double val = 0.0;
      for (const Ellipse& e : es) {
        const double ct = std::cos(e.theta), st = std::sin(e.theta);
        const double du = (u - e.cy) * ct + (v - e.cz) * st;
        const double dv = -(u - e.cy) * st + (v - e.cz) * ct;
        if ((du * du) / (e.ay * e.ay) + (dv * dv) / (e.az * e.az) <= 1.0) val += e.intensity;
      }
      out[y * nz + z] = std::max(0.0, val);
    }
}

}  // namespace detail

struct SynthesisResult {
  KSpaceVolume kspace;    // fully sampled, SOS-max normalized
  ImageVolume reference;  // Combined magnitude of the normalized data
};

// Deterministic per seed. The returned k-space is divided by the maximum of
// its SOS reconstruction and quantized to float32 precision so that
// save/load round trips bit-exactly; meta.scale records the divisor.
inline SynthesisResult synthesize_phantom(std::uint64_t seed, std::size_t ns, std::size_t nc,
                                          std::size_t ny, std::size_t nz,
                                          bool trivial_coil = false) {
  if (ny < 32 || ny > 512 || nz < 32 || nz > 512)
    throw ParamError("synthesize_phantom: Ny, Nz must be in [32, 512]");
  if (nc < 1 || nc > 64) throw ParamError("synthesize_phantom: Nc must be in [1, 64]");
  if (ns < 1) throw ParamError("synthesize_phantom: Ns must be >= 1");

  CoilSensitivities coils = generate_coil_maps(seed, nc, ny, nz, trivial_coil);

  ImageVolume percoil;
  percoil.kind = ImageKind::PerCoil;
  percoil.data = ComplexTensor({ns, nc, ny, nz});
  std::vector<double> slice(ny * nz);
  for (std::size_t s = 0; s < ns; ++s) {
    Rng rng(derive_seed(seed, 0x70686e74, s));
    detail::render_slice(detail::random_ellipses(rng), ny, nz, slice.data());
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t i = 0; i < ny * nz; ++i)
        percoil.data[(s * nc + c) * ny * nz + i] = slice[i] * coils.maps[c * ny * nz + i];
  }

  DatasetMeta meta;
  meta.ns = ns;
  meta.nc = nc;
  meta.ny = ny;
  meta.nz = nz;
  meta.seed = seed;
  meta.provenance = Provenance::Synthetic;
  percoil.meta = meta;

  KSpaceVolume ksp = fft2c(percoil);

  // SOS-max normalization of the fully sampled reconstruction
  ImageVolume sos = sum_of_squares(ifft2c(ksp));
  double peak = 0.0;
  for (const cplx& v : sos.data.values) peak = std::max(peak, v.real());
  if (peak <= 0.0) throw ParamError("synthesize_phantom: degenerate all-zero phantom");
  for (cplx& v : ksp.data.values) v /= peak;
  ksp.meta.scale = peak;
  quantize_to_float32(ksp.data);
  ksp.data.check_finite("synthesize_phantom");

  ImageVolume reference = sum_of_squares(ifft2c(ksp));
  return {std::move(ksp), std::move(reference)};
}

}  // namespace csrecon
