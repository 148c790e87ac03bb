#pragma once

// Dual-domain cascades: DC-wrapped k-space blocks, DC-wrapped image blocks,
// and their left-to-right composition for W-net {II, KK, IK, KI}, WW-net
// {IIII, IKIK} and the Deep Cascade baseline, plus the SC/MC reconstruction
// drivers. Every block ends in hard DC, so sampled k-space positions of
// every intermediate equal the measurement.

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "csrecon/fft.hpp"
#include "csrecon/mask.hpp"
#include "csrecon/transform.hpp"
#include "csrecon/unet.hpp"
#include "csrecon/volume.hpp"

namespace csrecon {

enum class BlockKind { UNet, DeepCascadeBlock };
enum class CoilConfig { SC, MC };

struct CascadeSpec {
  std::string domains;  // string over {I, K}, one letter per block
  BlockKind kind = BlockKind::UNet;
  CoilConfig config = CoilConfig::MC;
  std::size_t nc = 1;
  std::size_t base_width = 32;
  std::uint64_t seed = 0;

  std::size_t c_in() const { return config == CoilConfig::SC ? 2 : 2 * nc; }

  void validate() const {
    if (domains.empty()) throw ParamError("CascadeSpec: empty domain sequence");
    for (char ch : domains)
      if (ch != 'I' && ch != 'K')
        throw ParamError(std::string("CascadeSpec: bad domain letter '") + ch + "'");
    if (nc < 1) throw ParamError("CascadeSpec: Nc must be >= 1");
  }
};

// Volume-level hard DC: out = pred * (1 - F_u) + x_u.
inline KSpaceVolume dc_replace(const KSpaceVolume& pred, const KSpaceVolume& xu,
                               const SamplingMask& mask) {
  if (pred.data.shape != xu.data.shape)
    throw ShapeError("dc_replace: pred/x_u shapes differ");
  if (mask.ny != pred.ny() || mask.nz != pred.nz())
    throw ShapeError("dc_replace: mask extent mismatch");
  KSpaceVolume out = pred;
  const std::size_t plane = mask.ny * mask.nz;
  const std::size_t planes = pred.data.numel() / plane;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < plane; ++i)
      if (mask.grid[i]) out.data[p * plane + i] = xu.data[p * plane + i];
  return out;
}

namespace detail {

// [Ns, Nc, Ny, Nz] complex -> packed real batch. SC treats every (slice,
// channel) pair as an independent batch item with 2 channels; MC keeps one
// batch item per slice with 2*Nc channels.
template <typename T>
Array4<T> pack_kspace(const KSpaceVolume& v, CoilConfig config) {
  const std::size_t ns = v.ns(), nc = v.nc(), ny = v.ny(), nz = v.nz();
  const std::size_t batch = config == CoilConfig::SC ? ns * nc : ns;
  const std::size_t chans = config == CoilConfig::SC ? 2 : 2 * nc;
  Array4<T> out(batch, chans, ny, nz);
  const std::size_t plane = ny * nz;
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t c = 0; c < nc; ++c) {
      const cplx* src = v.data.values.data() + (s * nc + c) * plane;
      T* re;
      T* im;
      if (config == CoilConfig::SC) {
        re = out.v.data() + ((s * nc + c) * 2) * plane;
        im = re + plane;
      } else {
        re = out.v.data() + (s * 2 * nc + 2 * c) * plane;
        im = re + plane;
      }
      for (std::size_t i = 0; i < plane; ++i) {
        re[i] = static_cast<T>(src[i].real());
        im[i] = static_cast<T>(src[i].imag());
      }
    }
  return out;
}

template <typename T>
KSpaceVolume unpack_kspace(const Array4<T>& a, const DatasetMeta& meta, CoilConfig config,
                           std::size_t ns, std::size_t nc) {
  const std::size_t ny = a.h, nz = a.w, plane = ny * nz;
  ComplexTensor t({ns, nc, ny, nz});
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t c = 0; c < nc; ++c) {
      const T* re;
      if (config == CoilConfig::SC)
        re = a.v.data() + ((s * nc + c) * 2) * plane;
      else
        re = a.v.data() + (s * 2 * nc + 2 * c) * plane;
      const T* im = re + plane;
      cplx* dst = t.values.data() + (s * nc + c) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        dst[i] = cplx(static_cast<double>(re[i]), static_cast<double>(im[i]));
    }
  DatasetMeta m = meta;
  m.ns = ns;
  m.nc = nc;
  m.ny = ny;
  m.nz = nz;
  return KSpaceVolume(std::move(t), m);
}

}  // namespace detail

template <typename T>
class CascadeModel {
 public:
  using Block = std::variant<UNet<T>, DeepCascadeBlock<T>>;

  explicit CascadeModel(CascadeSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    for (std::size_t i = 0; i < spec_.domains.size(); ++i) {
      const std::uint64_t bseed = derive_seed(spec_.seed, 0x626c6f63, i);
      if (spec_.kind == BlockKind::UNet)
        blocks_.emplace_back(std::in_place_type<UNet<T>>, spec_.c_in(), spec_.base_width, bseed);
      else
        blocks_.emplace_back(std::in_place_type<DeepCascadeBlock<T>>, spec_.c_in(), bseed);
    }
  }

  const CascadeSpec& spec() const { return spec_; }
  std::size_t block_count() const { return blocks_.size(); }
  Block& block(std::size_t i) { return blocks_[i]; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_)
      n += std::visit([](const auto& blk) { return blk.param_count(); }, b);
    return n;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& b : blocks_) {
      auto p = std::visit([](auto& blk) { return blk.params(); }, b);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  std::vector<std::pair<std::string, Param<T>*>> named_params() {
    std::vector<std::pair<std::string, Param<T>*>> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string prefix = "block" + std::to_string(i) + ".";
      auto p = std::visit([&](auto& blk) { return blk.named_params(prefix); }, blocks_[i]);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  void zero_weights() {
    for (auto& b : blocks_) std::visit([](auto& blk) { blk.zero_weights(); }, b);
  }

  // Graph-level composition. x, xu are packed k-space; mask is row-major
  // [ny * nz] over the packed spatial extents.
  NodeRef<T> forward(Tape<T>& tape, const NodeRef<T>& x,
                     const std::shared_ptr<Array4<T>>& xu,
                     const std::shared_ptr<std::vector<std::uint8_t>>& mask) {
    NodeRef<T> cur = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (spec_.domains[i] == 'K') {
        NodeRef<T> h = std::visit([&](auto& blk) { return blk.forward(tape, cur); }, blocks_[i]);
        cur = ops::data_consistency(tape, h, xu, mask);
      } else {
        NodeRef<T> img = ops::fft_packed(tape, cur, FtDirection::Inverse);
        NodeRef<T> h = std::visit([&](auto& blk) { return blk.forward(tape, img); }, blocks_[i]);
        NodeRef<T> k = ops::fft_packed(tape, h, FtDirection::Forward);
        cur = ops::data_consistency(tape, k, xu, mask);
      }
    }
    return cur;
  }

 private:
  CascadeSpec spec_;
  std::vector<Block> blocks_;
};

template <typename T>
CascadeModel<T> build_cascade(const CascadeSpec& spec) {
  return CascadeModel<T>(spec);
}

// Deep Cascade baseline: n image-domain sub-networks with DC between.
template <typename T>
CascadeModel<T> build_deep_cascade(CoilConfig config, std::size_t nc, std::uint64_t seed,
                                   std::size_t n_subnets = 6) {
  CascadeSpec spec;
  spec.domains = std::string(n_subnets, 'I');
  spec.kind = BlockKind::DeepCascadeBlock;
  spec.config = config;
  spec.nc = nc;
  spec.seed = seed;
  return CascadeModel<T>(spec);
}

namespace detail {

// Symmetric zero-padding of k-space (and mask) to multiples of 8 so the
// pooling depth works out; padded positions are unsampled, so DC is
// untouched and the crop inverts exactly.
struct PadInfo {
  std::size_t ny0 = 0, nz0 = 0;  // original extents
  std::size_t oy = 0, oz = 0;    // top-left offset inside the padded grid
  bool padded = false;
};

inline std::size_t round_up8(std::size_t n) { return (n + 7) / 8 * 8; }

inline PadInfo pad_plan(std::size_t ny, std::size_t nz) {
  PadInfo p;
  p.ny0 = ny;
  p.nz0 = nz;
  const std::size_t py = round_up8(ny), pz = round_up8(nz);
  p.oy = (py - ny) / 2;
  p.oz = (pz - nz) / 2;
  p.padded = py != ny || pz != nz;
  return p;
}

inline KSpaceVolume pad_kspace(const KSpaceVolume& v, const PadInfo& p) {
  const std::size_t py = round_up8(p.ny0), pz = round_up8(p.nz0);
  ComplexTensor t({v.ns(), v.nc(), py, pz});
  for (std::size_t s = 0; s < v.ns(); ++s)
    for (std::size_t c = 0; c < v.nc(); ++c)
      for (std::size_t y = 0; y < p.ny0; ++y)
        for (std::size_t z = 0; z < p.nz0; ++z)
          t[((s * v.nc() + c) * py + y + p.oy) * pz + z + p.oz] = v.at(s, c, y, z);
  DatasetMeta m = v.meta;
  m.ny = py;
  m.nz = pz;
  return KSpaceVolume(std::move(t), m);
}

inline KSpaceVolume crop_kspace(const KSpaceVolume& v, const PadInfo& p) {
  ComplexTensor t({v.ns(), v.nc(), p.ny0, p.nz0});
  for (std::size_t s = 0; s < v.ns(); ++s)
    for (std::size_t c = 0; c < v.nc(); ++c)
      for (std::size_t y = 0; y < p.ny0; ++y)
        for (std::size_t z = 0; z < p.nz0; ++z)
          t[((s * v.nc() + c) * p.ny0 + y) * p.nz0 + z] = v.at(s, c, y + p.oy, z + p.oz);
  DatasetMeta m = v.meta;
  m.ny = p.ny0;
  m.nz = p.nz0;
  return KSpaceVolume(std::move(t), m);
}

inline std::shared_ptr<std::vector<std::uint8_t>> pad_mask_grid(const SamplingMask& mask,
                                                                const PadInfo& p) {
  const std::size_t py = round_up8(p.ny0), pz = round_up8(p.nz0);
  auto grid = std::make_shared<std::vector<std::uint8_t>>(py * pz, 0);
  for (std::size_t y = 0; y < p.ny0; ++y)
    for (std::size_t z = 0; z < p.nz0; ++z)
      (*grid)[(y + p.oy) * pz + z + p.oz] = mask.at(y, z);
  return grid;
}

}  // namespace detail

// Volume-level cascade pass (inference path). Pads to pooling granularity
// when needed, runs the graph, crops back.
template <typename T>
KSpaceVolume cascade_forward(CascadeModel<T>& model, const KSpaceVolume& xu,
                             const SamplingMask& mask) {
  if (mask.ny != xu.ny() || mask.nz != xu.nz())
    throw ShapeError("cascade_forward: mask extent mismatch");
  if (model.spec().config == CoilConfig::MC && xu.nc() != model.spec().nc)
    throw ShapeError("cascade_forward: volume has " + std::to_string(xu.nc()) +
                     " channels, model expects " + std::to_string(model.spec().nc));
  const detail::PadInfo pad = detail::pad_plan(xu.ny(), xu.nz());
  const KSpaceVolume& in = xu;
  KSpaceVolume padded = pad.padded ? detail::pad_kspace(in, pad) : in;
  auto grid = detail::pad_mask_grid(mask, pad);

  Tape<T> tape;
  auto xu_arr = std::make_shared<Array4<T>>(
      detail::pack_kspace<T>(padded, model.spec().config));
  NodeRef<T> x = tape.input(*xu_arr);
  NodeRef<T> out = model.forward(tape, x, xu_arr, grid);
  KSpaceVolume result =
      detail::unpack_kspace(out->val, padded.meta, model.spec().config, padded.ns(), padded.nc());
  tape.clear();
  return pad.padded ? detail::crop_kspace(result, pad) : result;
}

// Single-block drivers (also the compositional oracles' reference path).
template <typename T, typename Block>
KSpaceVolume k_block(Block& block, const KSpaceVolume& x_in, const KSpaceVolume& xu,
                     const SamplingMask& mask, CoilConfig config) {
  Tape<T> tape;
  auto xu_arr = std::make_shared<Array4<T>>(detail::pack_kspace<T>(xu, config));
  auto grid = std::make_shared<std::vector<std::uint8_t>>(mask.grid);
  NodeRef<T> x = tape.input(detail::pack_kspace<T>(x_in, config));
  NodeRef<T> h = block.forward(tape, x);
  NodeRef<T> out = ops::data_consistency(tape, h, xu_arr, grid);
  KSpaceVolume result = detail::unpack_kspace(out->val, x_in.meta, config, x_in.ns(), x_in.nc());
  tape.clear();
  return result;
}

template <typename T, typename Block>
KSpaceVolume i_block(Block& block, const KSpaceVolume& x_in, const KSpaceVolume& xu,
                     const SamplingMask& mask, CoilConfig config) {
  Tape<T> tape;
  auto xu_arr = std::make_shared<Array4<T>>(detail::pack_kspace<T>(xu, config));
  auto grid = std::make_shared<std::vector<std::uint8_t>>(mask.grid);
  NodeRef<T> x = tape.input(detail::pack_kspace<T>(x_in, config));
  NodeRef<T> img = ops::fft_packed(tape, x, FtDirection::Inverse);
  NodeRef<T> h = block.forward(tape, img);
  NodeRef<T> k = ops::fft_packed(tape, h, FtDirection::Forward);
  NodeRef<T> out = ops::data_consistency(tape, k, xu_arr, grid);
  KSpaceVolume result = detail::unpack_kspace(out->val, x_in.meta, config, x_in.ns(), x_in.nc());
  tape.clear();
  return result;
}

// Full reconstruction driver: cascade, channel-wise inverse FT, SOS combine.
template <typename T>
ImageVolume reconstruct(CascadeModel<T>& model, const KSpaceVolume& xu,
                        const SamplingMask& mask) {
  KSpaceVolume k = cascade_forward(model, xu, mask);
  return sum_of_squares(ifft2c(k));
}

// Classical baseline: inverse FT of the zero-filled measurements, SOS.
inline ImageVolume zero_filled_sos(const KSpaceVolume& xu) { return sum_of_squares(ifft2c(xu)); }

}  // namespace csrecon
