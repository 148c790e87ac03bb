#pragma once

// Minimal reverse-mode engine over the fixed op set the cascades need:
// conv2d, maxpool2d, nearest upsample, channel concat, add, ReLU, the
// centered FFT pair on (re, im)-packed channels, hard data consistency,
// and MSE reduction. Templated on the scalar type: float for training,
// double for finite-difference gradient checks.
//
// Convolutions run as im2col + GEMM (OpenBLAS).

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "csrecon/common.hpp"
#include "csrecon/fft.hpp"
#include "csrecon/tensor.hpp"

namespace csrecon {

// Dense [batch, channel, h, w] array.
template <typename T>
struct Array4 {
  std::size_t b = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Array4() = default;
  Array4(std::size_t b_, std::size_t c_, std::size_t h_, std::size_t w_)
      : b(b_), c(c_), h(h_), w(w_), v(b_ * c_ * h_ * w_, T(0)) {}

  std::size_t numel() const { return v.size(); }
  T& at(std::size_t bi, std::size_t ci, std::size_t y, std::size_t x) {
    return v[((bi * c + ci) * h + y) * w + x];
  }
  const T& at(std::size_t bi, std::size_t ci, std::size_t y, std::size_t x) const {
    return v[((bi * c + ci) * h + y) * w + x];
  }
  bool same_shape(const Array4& o) const { return b == o.b && c == o.c && h == o.h && w == o.w; }
};

namespace blas {
// C[m x n] += A[m x k] * B[k x n], row-major; beta selects accumulate/overwrite.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
}  // namespace blas

template <typename T>
struct Node {
  Array4<T> val;
  Array4<T> grad;
  bool needs_grad = false;
  std::function<void()> backward;  // empty for leaves without parameter sinks
};

template <typename T>
using NodeRef = std::shared_ptr<Node<T>>;

// Trainable parameter: value plus gradient accumulator and Adam moments.
template <typename T>
struct Param {
  Array4<T> w, g, m, v;

  explicit Param(Array4<T> init) : w(std::move(init)) {
    g = Array4<T>(w.b, w.c, w.h, w.w);
    m = Array4<T>(w.b, w.c, w.h, w.w);
    v = Array4<T>(w.b, w.c, w.h, w.w);
  }
  void zero_grad() { std::fill(g.v.begin(), g.v.end(), T(0)); }
};

// Op tape; construction order is a valid topological order.
template <typename T>
class Tape {
 public:
  NodeRef<T> alloc(std::size_t b, std::size_t c, std::size_t h, std::size_t w, bool needs_grad) {
    auto n = std::make_shared<Node<T>>();
    n->val = Array4<T>(b, c, h, w);
    if (needs_grad) n->grad = Array4<T>(b, c, h, w);
    n->needs_grad = needs_grad;
    nodes_.push_back(n);
    return n;
  }

  NodeRef<T> constant(Array4<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(value);
    n->needs_grad = false;
    nodes_.push_back(n);
    return n;
  }

  // Leaf view of a parameter; backward adds the node gradient into param.g.
  NodeRef<T> leaf(Param<T>& p) {
    auto n = alloc(p.w.b, p.w.c, p.w.h, p.w.w, true);
    n->val = p.w;
    Node<T>* raw = n.get();
    Param<T>* pp = &p;
    n->backward = [raw, pp]() {
      for (std::size_t i = 0; i < raw->grad.numel(); ++i) pp->g.v[i] += raw->grad.v[i];
    };
    return n;
  }

  NodeRef<T> input(Array4<T> value, bool needs_grad = false) {
    auto n = alloc(value.b, value.c, value.h, value.w, needs_grad);
    n->val = std::move(value);
    return n;
  }

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse.
  void backward(const NodeRef<T>& loss) {
    if (loss->val.numel() != 1) throw ShapeError("backward: loss must be scalar");
    if (!loss->needs_grad) throw ShapeError("backward: loss does not require grad");
    loss->grad.v[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if ((*it)->backward) (*it)->backward();
    nodes_.clear();
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<NodeRef<T>> nodes_;
};

namespace ops {

template <typename T>
NodeRef<T> add(Tape<T>& tape, const NodeRef<T>& a, const NodeRef<T>& b) {
  if (!a->val.same_shape(b->val)) throw ShapeError("add: shape mismatch");
  auto out = tape.alloc(a->val.b, a->val.c, a->val.h, a->val.w, a->needs_grad || b->needs_grad);
  for (std::size_t i = 0; i < out->val.numel(); ++i) out->val.v[i] = a->val.v[i] + b->val.v[i];
  if (out->needs_grad) {
    Node<T>*ra = a.get(), *rb = b.get(), *ro = out.get();
    out->backward = [ra, rb, ro]() {
      if (ra->needs_grad)
        for (std::size_t i = 0; i < ro->grad.numel(); ++i) ra->grad.v[i] += ro->grad.v[i];
      if (rb->needs_grad)
        for (std::size_t i = 0; i < ro->grad.numel(); ++i) rb->grad.v[i] += ro->grad.v[i];
    };
  }
  return out;
}

template <typename T>
NodeRef<T> relu(Tape<T>& tape, const NodeRef<T>& x) {
  auto out = tape.alloc(x->val.b, x->val.c, x->val.h, x->val.w, x->needs_grad);
  for (std::size_t i = 0; i < out->val.numel(); ++i)
    out->val.v[i] = x->val.v[i] > T(0) ? x->val.v[i] : T(0);
  if (out->needs_grad) {
    Node<T>*rx = x.get(), *ro = out.get();
    out->backward = [rx, ro]() {
      for (std::size_t i = 0; i < ro->grad.numel(); ++i)
        if (rx->val.v[i] > T(0)) rx->grad.v[i] += ro->grad.v[i];
    };
  }
  return out;
}

namespace detail {

// im2col for "same" zero padding, stride 1, odd kernels.
template <typename T>
void im2col(const T* img, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, T* col) {
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx, ++row) {
        T* dst = col + row * h * w;
        const long oy = static_cast<long>(ky) - ph, ox = static_cast<long>(kx) - pw;
        for (long y = 0; y < static_cast<long>(h); ++y) {
          const long sy = y + oy;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst + y * w, dst + (y + 1) * w, T(0));
            continue;
          }
          const T* src = img + (ci * h + static_cast<std::size_t>(sy)) * w;
          for (long x = 0; x < static_cast<long>(w); ++x) {
            const long sx = x + ox;
            dst[y * static_cast<long>(w) + x] =
                (sx < 0 || sx >= static_cast<long>(w)) ? T(0) : src[sx];
          }
        }
      }
}

template <typename T>
void col2im_acc(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, T* img) {
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx, ++row) {
        const T* src = col + row * h * w;
        const long oy = static_cast<long>(ky) - ph, ox = static_cast<long>(kx) - pw;
        for (long y = 0; y < static_cast<long>(h); ++y) {
          const long sy = y + oy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          T* dst = img + (ci * h + static_cast<std::size_t>(sy)) * w;
          for (long x = 0; x < static_cast<long>(w); ++x) {
            const long sx = x + ox;
            if (sx >= 0 && sx < static_cast<long>(w))
              dst[sx] += src[y * static_cast<long>(w) + x];
          }
        }
      }
}

}  // namespace detail

// 2D convolution, stride 1, "same" zero padding. weight [cout, cin, kh, kw],
// bias [1, cout, 1, 1].
template <typename T>
NodeRef<T> conv2d(Tape<T>& tape, const NodeRef<T>& x, const NodeRef<T>& weight,
                  const NodeRef<T>& bias) {
  const std::size_t cin = x->val.c, h = x->val.h, w = x->val.w, batch = x->val.b;
  const std::size_t cout = weight->val.b, kh = weight->val.h, kw = weight->val.w;
  if (weight->val.c != cin) throw ShapeError("conv2d: weight cin mismatch");
  if (bias->val.c != cout) throw ShapeError("conv2d: bias mismatch");
  const bool ng = x->needs_grad || weight->needs_grad || bias->needs_grad;
  auto out = tape.alloc(batch, cout, h, w, ng);

  const std::size_t k = cin * kh * kw, hw = h * w;
  auto col = std::make_shared<std::vector<T>>(batch * k * hw);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    detail::im2col(x->val.v.data() + bi * cin * hw, cin, h, w, kh, kw, col->data() + bi * k * hw);
    blas::gemm(false, false, static_cast<int>(cout), static_cast<int>(hw), static_cast<int>(k),
               T(1), weight->val.v.data(), static_cast<int>(k), col->data() + bi * k * hw,
               static_cast<int>(hw), T(0), out->val.v.data() + bi * cout * hw,
               static_cast<int>(hw));
    for (std::size_t co = 0; co < cout; ++co) {
      T b = bias->val.v[co];
      T* dst = out->val.v.data() + (bi * cout + co) * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] += b;
    }
  }

  if (ng) {
    Node<T>*rx = x.get(), *rw = weight.get(), *rb = bias.get(), *ro = out.get();
    out->backward = [rx, rw, rb, ro, col, batch, cin, cout, h, w, kh, kw]() {
      const std::size_t k = cin * kh * kw, hw = h * w;
      std::vector<T> dcol(k * hw);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const T* dout = ro->grad.v.data() + bi * cout * hw;
        if (rw->needs_grad)
          blas::gemm(false, true, static_cast<int>(cout), static_cast<int>(k),
                     static_cast<int>(hw), T(1), dout, static_cast<int>(hw),
                     col->data() + bi * k * hw, static_cast<int>(hw), T(1), rw->grad.v.data(),
                     static_cast<int>(k));
        if (rb->needs_grad)
          for (std::size_t co = 0; co < cout; ++co) {
            T acc = T(0);
            const T* src = dout + co * hw;
            for (std::size_t i = 0; i < hw; ++i) acc += src[i];
            rb->grad.v[co] += acc;
          }
        if (rx->needs_grad) {
          blas::gemm(true, false, static_cast<int>(k), static_cast<int>(hw),
                     static_cast<int>(cout), T(1), rw->val.v.data(), static_cast<int>(k), dout,
                     static_cast<int>(hw), T(0), dcol.data(), static_cast<int>(hw));
          detail::col2im_acc(dcol.data(), cin, h, w, kh, kw, rx->grad.v.data() + bi * cin * hw);
        }
      }
    };
  }
  return out;
}

// 2x2 max pooling, stride 2. Requires even spatial extents.
template <typename T>
NodeRef<T> maxpool2(Tape<T>& tape, const NodeRef<T>& x) {
  const std::size_t h = x->val.h, w = x->val.w;
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2: spatial extents must be even");
  auto out = tape.alloc(x->val.b, x->val.c, h / 2, w / 2, x->needs_grad);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out->val.numel());
  const std::size_t planes = x->val.b * x->val.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x->val.v.data() + p * h * w;
    T* dst = out->val.v.data() + p * (h / 2) * (w / 2);
    std::uint32_t* am = argmax->data() + p * (h / 2) * (w / 2);
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx) {
        std::size_t best = (2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            std::size_t idx = (2 * y + dy) * w + (2 * xx + dx);
            if (src[idx] > src[best]) best = idx;
          }
        dst[y * (w / 2) + xx] = src[best];
        am[y * (w / 2) + xx] = static_cast<std::uint32_t>(best);
      }
  }
  if (out->needs_grad) {
    Node<T>*rx = x.get(), *ro = out.get();
    out->backward = [rx, ro, argmax, planes, h, w]() {
      const std::size_t ohw = (h / 2) * (w / 2);
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < ohw; ++i)
          rx->grad.v[p * h * w + (*argmax)[p * ohw + i]] += ro->grad.v[p * ohw + i];
    };
  }
  return out;
}

// Nearest-neighbor 2x upsampling.
template <typename T>
NodeRef<T> upsample2(Tape<T>& tape, const NodeRef<T>& x) {
  const std::size_t h = x->val.h, w = x->val.w;
  auto out = tape.alloc(x->val.b, x->val.c, 2 * h, 2 * w, x->needs_grad);
  const std::size_t planes = x->val.b * x->val.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x->val.v.data() + p * h * w;
    T* dst = out->val.v.data() + p * 4 * h * w;
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  if (out->needs_grad) {
    Node<T>*rx = x.get(), *ro = out.get();
    out->backward = [rx, ro, planes, h, w]() {
      for (std::size_t p = 0; p < planes; ++p) {
        T* gsrc = rx->grad.v.data() + p * h * w;
        const T* gdst = ro->grad.v.data() + p * 4 * h * w;
        for (std::size_t y = 0; y < 2 * h; ++y)
          for (std::size_t xx = 0; xx < 2 * w; ++xx)
            gsrc[(y / 2) * w + xx / 2] += gdst[y * 2 * w + xx];
      }
    };
  }
  return out;
}

// Concatenate along the channel axis.
template <typename T>
NodeRef<T> concat(Tape<T>& tape, const NodeRef<T>& a, const NodeRef<T>& b) {
  if (a->val.b != b->val.b || a->val.h != b->val.h || a->val.w != b->val.w)
    throw ShapeError("concat: non-channel extents differ");
  auto out = tape.alloc(a->val.b, a->val.c + b->val.c, a->val.h, a->val.w,
                        a->needs_grad || b->needs_grad);
  const std::size_t hw = a->val.h * a->val.w;
  for (std::size_t bi = 0; bi < a->val.b; ++bi) {
    std::copy_n(a->val.v.data() + bi * a->val.c * hw, a->val.c * hw,
                out->val.v.data() + bi * out->val.c * hw);
    std::copy_n(b->val.v.data() + bi * b->val.c * hw, b->val.c * hw,
                out->val.v.data() + (bi * out->val.c + a->val.c) * hw);
  }
  if (out->needs_grad) {
    Node<T>*ra = a.get(), *rb = b.get(), *ro = out.get();
    out->backward = [ra, rb, ro, hw]() {
      for (std::size_t bi = 0; bi < ra->val.b; ++bi) {
        if (ra->needs_grad)
          for (std::size_t i = 0; i < ra->val.c * hw; ++i)
            ra->grad.v[bi * ra->val.c * hw + i] += ro->grad.v[bi * ro->val.c * hw + i];
        if (rb->needs_grad)
          for (std::size_t i = 0; i < rb->val.c * hw; ++i)
            rb->grad.v[bi * rb->val.c * hw + i] +=
                ro->grad.v[(bi * ro->val.c + ra->val.c) * hw + i];
      }
    };
  }
  return out;
}

namespace detail {

// Centered orthonormal 2D transform of every packed (re, im) channel pair.
// The map is orthogonal in the packed real coordinates, so the adjoint used
// in backward is simply the opposite direction.
template <typename T>
void fft_packed_apply(const Array4<T>& in, Array4<T>& out, FtDirection dir) {
  if (in.c % 2 != 0) throw ShapeError("fft_packed: odd channel count");
  FourierPlan plan(in.h, in.w);
  const std::size_t hw = in.h * in.w;
  std::vector<cplx> buf(hw);
  for (std::size_t bi = 0; bi < in.b; ++bi)
    for (std::size_t pc = 0; pc < in.c / 2; ++pc) {
      const T* re = in.v.data() + (bi * in.c + 2 * pc) * hw;
      const T* im = in.v.data() + (bi * in.c + 2 * pc + 1) * hw;
      for (std::size_t i = 0; i < hw; ++i)
        buf[i] = cplx(static_cast<double>(re[i]), static_cast<double>(im[i]));
      plan.execute(buf.data(), dir);
      T* ore = out.v.data() + (bi * in.c + 2 * pc) * hw;
      T* oim = out.v.data() + (bi * in.c + 2 * pc + 1) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        ore[i] = static_cast<T>(buf[i].real());
        oim[i] = static_cast<T>(buf[i].imag());
      }
    }
}

}  // namespace detail

template <typename T>
NodeRef<T> fft_packed(Tape<T>& tape, const NodeRef<T>& x, FtDirection dir) {
  auto out = tape.alloc(x->val.b, x->val.c, x->val.h, x->val.w, x->needs_grad);
  detail::fft_packed_apply(x->val, out->val, dir);
  if (out->needs_grad) {
    Node<T>*rx = x.get(), *ro = out.get();
    FtDirection adj = dir == FtDirection::Forward ? FtDirection::Inverse : FtDirection::Forward;
    out->backward = [rx, ro, adj]() {
      Array4<T> g(ro->grad.b, ro->grad.c, ro->grad.h, ro->grad.w);
      detail::fft_packed_apply(ro->grad, g, adj);
      for (std::size_t i = 0; i < g.numel(); ++i) rx->grad.v[i] += g.v[i];
    };
  }
  return out;
}

// Hard data consistency on packed k-space: out = pred * (1 - m) + x_u, the
// mask broadcast over batch and channel pairs. Sampled positions come out
// bit-equal to the measurement.
template <typename T>
NodeRef<T> data_consistency(Tape<T>& tape, const NodeRef<T>& pred,
                            const std::shared_ptr<Array4<T>>& xu,
                            const std::shared_ptr<std::vector<std::uint8_t>>& mask) {
  if (!pred->val.same_shape(*xu)) throw ShapeError("data_consistency: x_u shape mismatch");
  if (mask->size() != pred->val.h * pred->val.w)
    throw ShapeError("data_consistency: mask extent mismatch");
  auto out = tape.alloc(pred->val.b, pred->val.c, pred->val.h, pred->val.w, pred->needs_grad);
  const std::size_t hw = pred->val.h * pred->val.w;
  const std::size_t planes = pred->val.b * pred->val.c;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < hw; ++i)
      out->val.v[p * hw + i] =
          (*mask)[i] ? (*xu).v[p * hw + i] : pred->val.v[p * hw + i];
  if (out->needs_grad) {
    Node<T>*rp = pred.get(), *ro = out.get();
    out->backward = [rp, ro, mask, planes, hw]() {
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < hw; ++i)
          if (!(*mask)[i]) rp->grad.v[p * hw + i] += ro->grad.v[p * hw + i];
    };
  }
  return out;
}

// scale * sum over all elements of (pred - target)^2. The default scale of
// 1/B realizes the per-batch mean-squared-error convention; trainers pass
// an explicit 1/N when accumulating gradients sample by sample.
template <typename T>
NodeRef<T> mse(Tape<T>& tape, const NodeRef<T>& pred, const std::shared_ptr<Array4<T>>& target,
               T scale = T(0)) {
  if (!pred->val.same_shape(*target)) throw ShapeError("mse: shape mismatch");
  if (scale == T(0)) scale = T(1) / static_cast<T>(pred->val.b);
  auto out = tape.alloc(1, 1, 1, 1, pred->needs_grad);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred->val.numel(); ++i) {
    const double d = static_cast<double>(pred->val.v[i]) - static_cast<double>((*target).v[i]);
    acc += d * d;
  }
  out->val.v[0] = static_cast<T>(acc * static_cast<double>(scale));
  if (out->needs_grad) {
    Node<T>*rp = pred.get(), *ro = out.get();
    out->backward = [rp, ro, target, scale]() {
      const T g = ro->grad.v[0] * T(2) * scale;
      for (std::size_t i = 0; i < rp->grad.numel(); ++i)
        rp->grad.v[i] += g * (rp->val.v[i] - (*target).v[i]);
    };
  }
  return out;
}

// Sum of all elements (test utility).
template <typename T>
NodeRef<T> sum(Tape<T>& tape, const NodeRef<T>& x) {
  auto out = tape.alloc(1, 1, 1, 1, x->needs_grad);
  double acc = 0.0;
  for (const T& v : x->val.v) acc += static_cast<double>(v);
  out->val.v[0] = static_cast<T>(acc);
  if (out->needs_grad) {
    Node<T>*rx = x.get(), *ro = out.get();
    out->backward = [rx, ro]() {
      for (std::size_t i = 0; i < rx->grad.numel(); ++i) rx->grad.v[i] += ro->grad.v[0];
    };
  }
  return out;
}

}  // namespace ops
}  // namespace csrecon
