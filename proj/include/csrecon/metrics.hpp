#pragma once

// Image quality metrics on combined magnitude slices: NRMSE (normalized by
// the reference dynamic range), pSNR (peak = max of the reference), and a
// pixel-domain multi-scale VIF with Gaussian windows.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "csrecon/common.hpp"

namespace csrecon {

// Plain real image plane.
struct Plane {
  std::size_t ny = 0, nz = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(std::size_t ny_, std::size_t nz_) : ny(ny_), nz(nz_), v(ny_ * nz_, 0.0) {}
  double& at(std::size_t y, std::size_t z) { return v[y * nz + z]; }
  double at(std::size_t y, std::size_t z) const { return v[y * nz + z]; }
};

inline double rmse(const Plane& a, const Plane& b) {
  if (a.ny != b.ny || a.nz != b.nz) throw ShapeError("rmse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.v.size()));
}

inline double nrmse(const Plane& recon, const Plane& ref) {
  if (recon.ny != ref.ny || recon.nz != ref.nz) throw ShapeError("nrmse: shape mismatch");
  const auto [mn, mx] = std::minmax_element(ref.v.begin(), ref.v.end());
  if (*mx == *mn) throw ParamError("nrmse: constant reference has no dynamic range");
  return rmse(recon, ref) / (*mx - *mn);
}

// Returns +inf for identical inputs; callers exclude the sentinel from
// aggregates.
inline double psnr(const Plane& recon, const Plane& ref) {
  if (recon.ny != ref.ny || recon.nz != ref.nz) throw ShapeError("psnr: shape mismatch");
  const double peak = *std::max_element(ref.v.begin(), ref.v.end());
  const double e = rmse(recon, ref);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak / e);
}

namespace detail {

inline std::vector<double> gaussian_kernel(std::size_t n, double sigma) {
  std::vector<double> k(n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& x : k) x /= sum;
  return k;
}

// Separable filtering, "valid" region only.
inline Plane filter_valid(const Plane& img, const std::vector<double>& k) {
  const std::size_t n = k.size();
  if (img.ny < n || img.nz < n) return Plane(0, 0);
  Plane tmp(img.ny, img.nz - n + 1);
  for (std::size_t y = 0; y < img.ny; ++y)
    for (std::size_t z = 0; z + n <= img.nz; ++z) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * img.at(y, z + i);
      tmp.at(y, z) = acc;
    }
  Plane out(img.ny - n + 1, tmp.nz);
  for (std::size_t y = 0; y + n <= img.ny; ++y)
    for (std::size_t z = 0; z < tmp.nz; ++z) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp.at(y + i, z);
      out.at(y, z) = acc;
    }
  return out;
}

inline Plane downsample2(const Plane& img) {
  Plane out(img.ny / 2, img.nz / 2);
  for (std::size_t y = 0; y < out.ny; ++y)
    for (std::size_t z = 0; z < out.nz; ++z) out.at(y, z) = img.at(2 * y, 2 * z);
  return out;
}

}  // namespace detail

// Pixel-domain multi-scale VIF, 4 scales, sigma_n^2 = 2 on images scaled to
// [0, 255] by the reference peak.
inline double vif(const Plane& recon, const Plane& ref, double sigma_n2 = 2.0) {
  if (recon.ny != ref.ny || recon.nz != ref.nz) throw ShapeError("vif: shape mismatch");
  if (recon.ny < 32 || recon.nz < 32) throw ParamError("vif: extents must be >= 32");
  const double peak = *std::max_element(ref.v.begin(), ref.v.end());
  if (peak <= 0.0) throw ParamError("vif: degenerate reference");
  const double scale255 = 255.0 / peak;

  Plane r = ref, d = recon;
  for (double& x : r.v) x *= scale255;
  for (double& x : d.v) x *= scale255;

  double num = 0.0, den = 0.0;
  for (int scale = 1; scale <= 4; ++scale) {
    const std::size_t n = (std::size_t(1) << (4 - scale + 1)) + 1;
    const auto kern = detail::gaussian_kernel(n, static_cast<double>(n) / 5.0);
    if (scale > 1) {
      r = detail::downsample2(detail::filter_valid(r, kern));
      d = detail::downsample2(detail::filter_valid(d, kern));
      if (r.ny < n || r.nz < n) break;
    }
    const Plane mu1 = detail::filter_valid(r, kern);
    const Plane mu2 = detail::filter_valid(d, kern);
    Plane r2 = r, d2 = d, rd = r;
    for (std::size_t i = 0; i < r.v.size(); ++i) {
      r2.v[i] = r.v[i] * r.v[i];
      d2.v[i] = d.v[i] * d.v[i];
      rd.v[i] = r.v[i] * d.v[i];
    }
    const Plane m11 = detail::filter_valid(r2, kern);
    const Plane m22 = detail::filter_valid(d2, kern);
    const Plane m12 = detail::filter_valid(rd, kern);
    for (std::size_t i = 0; i < mu1.v.size(); ++i) {
      double s1 = m11.v[i] - mu1.v[i] * mu1.v[i];
      double s2 = m22.v[i] - mu2.v[i] * mu2.v[i];
      double s12 = m12.v[i] - mu1.v[i] * mu2.v[i];
      s1 = std::max(s1, 0.0);
      s2 = std::max(s2, 0.0);
      double g = s1 < 1e-10 ? 0.0 : s12 / (s1 + 1e-10);
      double sv = s2 - g * s12;
      if (s1 < 1e-10) {  // no reference signal in this window
        g = 0.0;
        sv = s2;
      }
      if (s2 < 1e-10) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = s2;
        g = 0.0;
      }
      sv = std::max(sv, 1e-10);
      num += std::log10(1.0 + g * g * s1 / (sv + sigma_n2));
      den += std::log10(1.0 + s1 / sigma_n2);
    }
  }
  if (den == 0.0) throw ParamError("vif: zero-variance reference");
  return num / den;
}

}  // namespace csrecon
