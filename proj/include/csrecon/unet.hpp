#pragma once

// The cascade building blocks: a 22-convolution U-net (three max-pooling
// levels, three nearest-neighbor upsampling levels, skip concatenations, a
// residual input-to-output addition, final 1x1 projection) and the flat
// Deep Cascade sub-network (five 64-filter 3x3 convolutions plus a 1x1
// projection back to the input channel count, with a residual connection).

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csrecon/autodiff.hpp"
#include "csrecon/common.hpp"

namespace csrecon {

template <typename T>
struct ConvParam {
  Param<T> w, b;
  std::size_t cout, cin, kh, kw;

  ConvParam(std::size_t cout_, std::size_t cin_, std::size_t kh_, std::size_t kw_, Rng& rng)
      : w(Array4<T>(cout_, cin_, kh_, kw_)),
        b(Array4<T>(1, cout_, 1, 1)),
        cout(cout_),
        cin(cin_),
        kh(kh_),
        kw(kw_) {
    // uniform fan-in scaled init for weights and biases; zero biases would
    // pin every dead receptive field exactly onto the relu boundary
    const double s = 1.0 / std::sqrt(static_cast<double>(cin_ * kh_ * kw_));
    for (T& v : w.w.v) v = static_cast<T>(rng.uniform(-s, s));
    for (T& v : b.w.v) v = static_cast<T>(rng.uniform(-s, s));
  }

  std::size_t param_count() const { return cout * cin * kh * kw + cout; }

  NodeRef<T> apply(Tape<T>& tape, const NodeRef<T>& x) {
    return ops::conv2d(tape, x, tape.leaf(w), tape.leaf(b));
  }
};

template <typename T>
class UNet {
 public:
  UNet(std::size_t c_in, std::size_t base_width, std::uint64_t seed)
      : c_in_(c_in), base_width_(base_width), seed_(seed) {
    if (c_in < 2 || c_in % 2 != 0) throw ParamError("UNet: C_in must be even and >= 2");
    if (base_width < 4) throw ParamError("UNet: base_width must be >= 4");
    const std::size_t w = base_width;
    const std::size_t widths[3] = {w, 2 * w, 4 * w};
    Rng rng(derive_seed(seed, 0x756e6574));
    std::size_t c = c_in;
    for (std::size_t lvl = 0; lvl < 3; ++lvl) {  // encoder, 3 convs per level
      add(widths[lvl], c, 3, rng);
      add(widths[lvl], widths[lvl], 3, rng);
      add(widths[lvl], widths[lvl], 3, rng);
      c = widths[lvl];
    }
    const std::size_t bott = 8 * w;  // bottleneck
    add(bott, c, 3, rng);
    add(bott, bott, 3, rng);
    add(bott, bott, 3, rng);
    c = bott;
    for (std::size_t lvl = 3; lvl-- > 0;) {  // decoder
      add(widths[lvl], c, 3, rng);               // after upsample
      add(widths[lvl], 2 * widths[lvl], 3, rng);  // after skip concat
      add(widths[lvl], widths[lvl], 3, rng);
      c = widths[lvl];
    }
    add(c_in, c, 1, rng);  // final 1x1, linear
  }

  std::size_t conv_layer_count() const { return convs_.size(); }
  std::size_t c_in() const { return c_in_; }
  std::size_t base_width() const { return base_width_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& cp : convs_) n += cp.param_count();
    return n;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& cp : convs_) {
      out.push_back(&cp.w);
      out.push_back(&cp.b);
    }
    return out;
  }

  std::vector<std::pair<std::string, Param<T>*>> named_params(const std::string& prefix) {
    std::vector<std::pair<std::string, Param<T>*>> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      out.emplace_back(prefix + "conv" + std::to_string(i) + ".w", &convs_[i].w);
      out.emplace_back(prefix + "conv" + std::to_string(i) + ".b", &convs_[i].b);
    }
    return out;
  }

  void zero_weights() {
    for (auto& cp : convs_) {
      std::fill(cp.w.w.v.begin(), cp.w.w.v.end(), T(0));
      std::fill(cp.b.w.v.begin(), cp.b.w.v.end(), T(0));
    }
  }

  NodeRef<T> forward(Tape<T>& tape, const NodeRef<T>& x) {
    if (x->val.c != c_in_) throw ShapeError("UNet: input has " + std::to_string(x->val.c) +
                                            " channels, expected " + std::to_string(c_in_));
    if (x->val.h % 8 != 0 || x->val.w % 8 != 0)
      throw ShapeError("UNet: spatial extents must be divisible by 8 (pad the input): got " +
                       std::to_string(x->val.h) + "x" + std::to_string(x->val.w));
    std::size_t li = 0;
    NodeRef<T> cur = x;
    NodeRef<T> skips[3];
    for (std::size_t lvl = 0; lvl < 3; ++lvl) {
      cur = ops::relu(tape, convs_[li++].apply(tape, cur));
      cur = ops::relu(tape, convs_[li++].apply(tape, cur));
      cur = ops::relu(tape, convs_[li++].apply(tape, cur));
      skips[lvl] = cur;
      cur = ops::maxpool2(tape, cur);
    }
    cur = ops::relu(tape, convs_[li++].apply(tape, cur));
    cur = ops::relu(tape, convs_[li++].apply(tape, cur));
    cur = ops::relu(tape, convs_[li++].apply(tape, cur));
    for (std::size_t lvl = 3; lvl-- > 0;) {
      cur = ops::upsample2(tape, cur);
      cur = ops::relu(tape, convs_[li++].apply(tape, cur));
      cur = ops::concat(tape, cur, skips[lvl]);
      cur = ops::relu(tape, convs_[li++].apply(tape, cur));
      cur = ops::relu(tape, convs_[li++].apply(tape, cur));
    }
    NodeRef<T> proj = convs_[li++].apply(tape, cur);  // linear 1x1
    return ops::add(tape, proj, x);                   // residual
  }

 private:
  void add(std::size_t cout, std::size_t cin, std::size_t k, Rng& rng) {
    convs_.emplace_back(cout, cin, k, k, rng);
  }

  std::size_t c_in_, base_width_;
  std::uint64_t seed_;
  std::vector<ConvParam<T>> convs_;
};

template <typename T>
class DeepCascadeBlock {
 public:
  DeepCascadeBlock(std::size_t c_in, std::uint64_t seed) : c_in_(c_in) {
    if (c_in < 2 || c_in % 2 != 0)
      throw ParamError("DeepCascadeBlock: C_in must be even and >= 2");
    Rng rng(derive_seed(seed, 0x64636173));
    convs_.emplace_back(64, c_in, 3, 3, rng);
    for (int i = 0; i < 4; ++i) convs_.emplace_back(64, 64, 3, 3, rng);
    convs_.emplace_back(c_in, 64, 1, 1, rng);  // projection back to input channels
  }

  std::size_t conv_layer_count() const { return convs_.size(); }
  std::size_t c_in() const { return c_in_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& cp : convs_) n += cp.param_count();
    return n;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& cp : convs_) {
      out.push_back(&cp.w);
      out.push_back(&cp.b);
    }
    return out;
  }

  std::vector<std::pair<std::string, Param<T>*>> named_params(const std::string& prefix) {
    std::vector<std::pair<std::string, Param<T>*>> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      out.emplace_back(prefix + "conv" + std::to_string(i) + ".w", &convs_[i].w);
      out.emplace_back(prefix + "conv" + std::to_string(i) + ".b", &convs_[i].b);
    }
    return out;
  }

  void zero_weights() {
    for (auto& cp : convs_) {
      std::fill(cp.w.w.v.begin(), cp.w.w.v.end(), T(0));
      std::fill(cp.b.w.v.begin(), cp.b.w.v.end(), T(0));
    }
  }

  NodeRef<T> forward(Tape<T>& tape, const NodeRef<T>& x) {
    if (x->val.c != c_in_) throw ShapeError("DeepCascadeBlock: channel mismatch");
    NodeRef<T> cur = x;
    for (std::size_t i = 0; i + 1 < convs_.size(); ++i)
      cur = ops::relu(tape, convs_[i].apply(tape, cur));
    NodeRef<T> proj = convs_.back().apply(tape, cur);
    return ops::add(tape, proj, x);
  }

 private:
  std::size_t c_in_;
  std::vector<ConvParam<T>> convs_;
};

}  // namespace csrecon
