#pragma once

// Poisson-disc undersampling masks in the ky-kz plane with a fully sampled
// central disc, plus mask application and the achieved-acceleration readout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "csrecon/common.hpp"
#include "csrecon/volume.hpp"

namespace csrecon {

struct SamplingMask {
  std::size_t ny = 0, nz = 0;
  std::vector<std::uint8_t> grid;  // 1 = sampled, row-major [ny][nz]
  double target_r = 1.0;
  double achieved_fraction = 1.0;
  std::size_t center_radius = 16;
  std::uint64_t seed = 0;
  double d_min = 0.0;  // solved Bridson minimum distance (0 for R = 1)

  std::uint8_t at(std::size_t y, std::size_t z) const { return grid[y * nz + z]; }

  std::size_t ones() const {
    std::size_t n = 0;
    for (std::uint8_t v : grid) n += v;
    return n;
  }
};

inline double achieved_acceleration(const SamplingMask& mask) {
  if (mask.grid.empty()) throw ParamError("achieved_acceleration: empty mask");
  const std::size_t n = mask.ones();
  if (n == 0) throw ParamError("achieved_acceleration: degenerate all-zero mask");
  return static_cast<double>(mask.ny * mask.nz) / static_cast<double>(n);
}

namespace detail {

// Grid points within euclidean distance `radius` of the floor-center.
inline std::size_t center_disc_count(std::size_t ny, std::size_t nz, std::size_t radius) {
  const double cy = static_cast<double>(center_index(ny));
  const double cz = static_cast<double>(center_index(nz));
  std::size_t count = 0;
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t z = 0; z < nz; ++z) {
      double dy = static_cast<double>(y) - cy, dz = static_cast<double>(z) - cz;
      if (dy * dy + dz * dz <= static_cast<double>(radius * radius)) ++count;
    }
  return count;
}

// Bridson dart throwing on the continuous [0,ny)x[0,nz) plane, snapped to
// the integer grid with duplicate rejection. Returns the sampled grid.
inline std::vector<std::uint8_t> bridson_grid(std::size_t ny, std::size_t nz, double d,
                                              Rng& rng) {
  struct Pt {
    double y, z;
  };
  const double cell = d / std::sqrt(2.0);
  const std::size_t gy = static_cast<std::size_t>(std::ceil(ny / cell)) + 1;
  const std::size_t gz = static_cast<std::size_t>(std::ceil(nz / cell)) + 1;
  std::vector<int> accel(gy * gz, -1);
  std::vector<Pt> points;
  std::vector<std::size_t> active;

  auto cell_of = [&](const Pt& p) {
    return static_cast<std::size_t>(p.y / cell) * gz + static_cast<std::size_t>(p.z / cell);
  };
  auto fits = [&](const Pt& p) {
    const long py = static_cast<long>(p.y / cell), pz = static_cast<long>(p.z / cell);
    for (long iy = py - 2; iy <= py + 2; ++iy) {
      if (iy < 0 || iy >= static_cast<long>(gy)) continue;
      for (long iz = pz - 2; iz <= pz + 2; ++iz) {
        if (iz < 0 || iz >= static_cast<long>(gz)) continue;
        int idx = accel[static_cast<std::size_t>(iy) * gz + static_cast<std::size_t>(iz)];
        if (idx < 0) continue;
        double dy = points[static_cast<std::size_t>(idx)].y - p.y;
        double dz = points[static_cast<std::size_t>(idx)].z - p.z;
        if (dy * dy + dz * dz < d * d) return false;
      }
    }
    return true;
  };
  auto push = [&](const Pt& p) {
    accel[cell_of(p)] = static_cast<int>(points.size());
    active.push_back(points.size());
    points.push_back(p);
  };

  push({rng.uniform(0.0, static_cast<double>(ny)), rng.uniform(0.0, static_cast<double>(nz))});
  constexpr int kAttempts = 30;
  while (!active.empty()) {
    const std::size_t pick = rng.uniform_int(active.size());
    const Pt base = points[active[pick]];
    bool found = false;
    for (int a = 0; a < kAttempts; ++a) {
      const double r = d * (1.0 + rng.uniform());
      const double ang = 6.283185307179586 * rng.uniform();
      Pt cand{base.y + r * std::cos(ang), base.z + r * std::sin(ang)};
      if (cand.y < 0.0 || cand.y >= static_cast<double>(ny) || cand.z < 0.0 ||
          cand.z >= static_cast<double>(nz))
        continue;
      if (fits(cand)) {
        push(cand);
        found = true;
      }
    }
    if (!found) {
      active[pick] = active.back();
      active.pop_back();
    }
  }

  std::vector<std::uint8_t> grid(ny * nz, 0);
  for (const Pt& p : points) {
    const std::size_t y = static_cast<std::size_t>(p.y);
    const std::size_t z = static_cast<std::size_t>(p.z);
    grid[y * nz + z] = 1;  // duplicate snaps collapse
  }
  return grid;
}

inline void fill_center_disc(std::vector<std::uint8_t>& grid, std::size_t ny, std::size_t nz,
                             std::size_t radius) {
  const double cy = static_cast<double>(center_index(ny));
  const double cz = static_cast<double>(center_index(nz));
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t z = 0; z < nz; ++z) {
      double dy = static_cast<double>(y) - cy, dz = static_cast<double>(z) - cz;
      if (dy * dy + dz * dz <= static_cast<double>(radius * radius)) grid[y * nz + z] = 1;
    }
}

}  // namespace detail

// Solves for the Poisson-disc minimum distance by bisection so the achieved
// sampling fraction lands within +/-2% relative of 1/R. Deterministic per
// seed: iteration i regenerates with a derived sub-seed.
inline SamplingMask poisson_disc_mask(std::size_t ny, std::size_t nz, double r,
                                      std::size_t center_radius, std::uint64_t seed) {
  if (ny == 0 || nz == 0) throw ParamError("poisson_disc_mask: empty grid");
  if (r < 1.0) throw ParamError("poisson_disc_mask: R must be >= 1");

  SamplingMask mask;
  mask.ny = ny;
  mask.nz = nz;
  mask.target_r = r;
  mask.center_radius = center_radius;
  mask.seed = seed;

  if (r == 1.0) {
    mask.grid.assign(ny * nz, 1);
    mask.achieved_fraction = 1.0;
    return mask;
  }

  const double total = static_cast<double>(ny * nz);
  const double budget = total / r;
  const std::size_t disc = detail::center_disc_count(ny, nz, center_radius);
  if (static_cast<double>(disc) >= budget) {
    const double r_min = total / static_cast<double>(disc);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "poisson_disc_mask: center disc (%zu points) exceeds the sample budget for "
                  "R=%.3f; minimum feasible R is below %.3f",
                  disc, r, r_min);
    throw ParamError(buf);
  }

  const double want = 1.0 / r;
  const double tol = 0.02 * want;
  double lo = 0.2, hi = 2.0 * std::sqrt(total * r / total);  // ~sqrt(R) scale upper guess
  hi = std::max(hi, 2.0 * std::sqrt(r));
  constexpr int kMaxIter = 50;
  for (int it = 0; it < kMaxIter; ++it) {
    const double d = 0.5 * (lo + hi);
    Rng rng(derive_seed(seed, 0x706f6973, static_cast<std::uint64_t>(it)));
    std::vector<std::uint8_t> grid = detail::bridson_grid(ny, nz, d, rng);
    detail::fill_center_disc(grid, ny, nz, center_radius);
    std::size_t ones = 0;
    for (std::uint8_t v : grid) ones += v;
    const double frac = static_cast<double>(ones) / total;
    if (std::abs(frac - want) <= tol) {
      mask.grid = std::move(grid);
      mask.achieved_fraction = frac;
      mask.d_min = d;
      return mask;
    }
    if (frac > want)
      lo = d;  // too dense, enlarge spacing
    else
      hi = d;
  }
  throw ParamError("poisson_disc_mask: bisection failed to reach the target fraction within 50 iterations");
}

// x_u = F_u (element-wise) x, broadcasting the mask over slices and channels.
inline KSpaceVolume apply_mask(const KSpaceVolume& ksp, const SamplingMask& mask) {
  if (mask.ny != ksp.ny() || mask.nz != ksp.nz())
    throw ShapeError("apply_mask: mask " + std::to_string(mask.ny) + "x" +
                     std::to_string(mask.nz) + " does not match k-space " + shape_str(ksp.data.shape));
  KSpaceVolume out = ksp;
  const std::size_t plane = mask.ny * mask.nz;
  const std::size_t planes = ksp.data.numel() / plane;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < plane; ++i)
      if (!mask.grid[i]) out.data[p * plane + i] = cplx(0.0, 0.0);
  return out;
}

// Mask container: "CSMASK1\n", one ASCII header line, then ny*nz raw 0/1 bytes.
inline void save_mask(const std::string& path, const SamplingMask& mask) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("save_mask: cannot open " + path);
  f << "CSMASK1\n";
  f << mask.ny << " " << mask.nz << " " << mask.target_r << " " << mask.center_radius << " "
    << mask.seed << "\n";
  f.write(reinterpret_cast<const char*>(mask.grid.data()),
          static_cast<std::streamsize>(mask.grid.size()));
  if (!f) throw FormatError("save_mask: write failed for " + path);
}

inline SamplingMask load_mask(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_mask: cannot open " + path);
  std::string magic;
  std::getline(f, magic);
  if (magic != "CSMASK1") throw FormatError("load_mask: bad magic in " + path);
  SamplingMask mask;
  if (!(f >> mask.ny >> mask.nz >> mask.target_r >> mask.center_radius >> mask.seed))
    throw FormatError("load_mask: bad header line in " + path);
  f.get();  // newline
  mask.grid.resize(mask.ny * mask.nz);
  f.read(reinterpret_cast<char*>(mask.grid.data()),
         static_cast<std::streamsize>(mask.grid.size()));
  if (f.gcount() != static_cast<std::streamsize>(mask.grid.size()))
    throw FormatError("load_mask: truncated payload in " + path);
  std::size_t ones = mask.ones();
  mask.achieved_fraction = static_cast<double>(ones) / static_cast<double>(mask.ny * mask.nz);
  return mask;
}

}  // namespace csrecon
