#pragma once

// Optimization of cascade models: k-space MSE objective, Adam with
// inverse-time learning-rate decay, per-epoch random training masks, fixed
// validation masks, early stopping on stalled validation loss.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "csrecon/cascade.hpp"
#include "csrecon/checkpoint.hpp"
#include "csrecon/mask.hpp"

namespace csrecon {

struct TrainConfig {
  double learning_rate = 1e-3;
  double decay = 1e-6;  // lr_t = lr / (1 + decay * t), t counted per update
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::size_t batch_size = 4;
  std::uint64_t base_seed = 0;
  double r = 4.0;
  std::size_t center_radius = 16;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void validate() const {
    if (learning_rate < 0.0 || decay < 0.0) throw ParamError("TrainConfig: negative rate/decay");
    if (max_epochs < 1 || batch_size < 1) throw ParamError("TrainConfig: counts must be positive");
    if (patience < 1 || patience > max_epochs)
      throw ParamError("TrainConfig: patience must be in [1, max_epochs]");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t stopping_epoch = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

inline void save_history_csv(const std::string& path, const TrainHistory& h) {
  std::ofstream f(path);
  if (!f) throw FormatError("save_history_csv: cannot open " + path);
  f << "epoch,train_loss,val_loss,seconds\n";
  char buf[128];
  for (const EpochRecord& e : h.epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss, e.val_loss,
                  e.seconds);
    f << buf;
  }
}

// Volume-level MSE: (1/Ns) * sum of squared complex residuals.
inline double mse_loss(const KSpaceVolume& pred, const KSpaceVolume& target) {
  if (pred.data.shape != target.data.shape) throw ShapeError("mse_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.numel(); ++i) {
    const cplx d = pred.data[i] - target.data[i];
    acc += d.real() * d.real() + d.imag() * d.imag();
  }
  return acc / static_cast<double>(pred.ns());
}

inline double mse_loss(const ImageVolume& pred, const ImageVolume& target) {
  if (pred.data.shape != target.data.shape || pred.kind != target.kind)
    throw ShapeError("mse_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.numel(); ++i) {
    const cplx d = pred.data[i] - target.data[i];
    acc += d.real() * d.real() + d.imag() * d.imag();
  }
  return acc / static_cast<double>(pred.ns());
}

// One bias-corrected Adam update; t is the 1-based step count.
template <typename T>
void adam_step(Param<T>& p, const TrainConfig& cfg, std::size_t t) {
  const double lr_t =
      cfg.learning_rate / (1.0 + cfg.decay * static_cast<double>(t - 1));
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.w.numel(); ++i) {
    const double g = static_cast<double>(p.g.v[i]);
    const double m = cfg.beta1 * static_cast<double>(p.m.v[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * static_cast<double>(p.v.v[i]) + (1.0 - cfg.beta2) * g * g;
    p.m.v[i] = static_cast<T>(m);
    p.v.v[i] = static_cast<T>(v);
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    p.w.v[i] -= static_cast<T>(lr_t * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

namespace detail {

// One slice of a volume as its own [1, nc, ny, nz] volume.
inline KSpaceVolume slice_volume(const KSpaceVolume& v, std::size_t s) {
  ComplexTensor t({1, v.nc(), v.ny(), v.nz()});
  const std::size_t n = v.nc() * v.ny() * v.nz();
  std::copy_n(v.data.values.data() + s * n, n, t.values.data());
  DatasetMeta m = v.meta;
  m.ns = 1;
  return KSpaceVolume(std::move(t), m);
}

}  // namespace detail

template <typename T>
class Trainer {
 public:
  Trainer(CascadeModel<T>& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
    cfg_.validate();
  }

  std::size_t step() const { return step_; }
  std::size_t next_epoch() const { return next_epoch_; }

  // Runs up to cfg.max_epochs (minus any epochs already done when resumed),
  // leaves the best-validation weights in the model, returns the history.
  TrainHistory train(const KSpaceVolume& train_set, const KSpaceVolume& val_set) {
    if (train_set.ns() == 0 || val_set.ns() == 0)
      throw ParamError("train: datasets must be nonempty");
    const detail::PadInfo pad = detail::pad_plan(train_set.ny(), train_set.nz());

    for (std::size_t epoch = next_epoch_; epoch < cfg_.max_epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      double train_loss = run_training_epoch(train_set, pad, epoch);
      double val_loss = compute_validation_loss(val_set, pad);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                              ", step " + std::to_string(step_));
      history_.epochs.push_back({epoch + 1, train_loss, val_loss, secs});
      next_epoch_ = epoch + 1;

      if (best_weights_.empty() || val_loss < history_.best_val_loss) {
        history_.best_val_loss = val_loss;
        history_.best_epoch = epoch + 1;
        snapshot_best();
        stall_ = 0;
      } else {
        ++stall_;
      }
      history_.stopping_epoch = epoch + 1;
      if (stall_ >= cfg_.patience) break;
    }
    restore_best();
    return history_;
  }

  // Resume state: weights + Adam moments + counters, one CSWGT1 container.
  void save_state(const std::string& path) {
    std::vector<std::pair<std::string, const Array4<T>*>> tensors;
    counters_ = Array4<T>(1, 4, 1, 1);
    counters_.v[0] = static_cast<T>(step_);
    counters_.v[1] = static_cast<T>(next_epoch_);
    counters_.v[2] = static_cast<T>(stall_);
    counters_.v[3] = static_cast<T>(history_.best_val_loss);
    tensors.emplace_back("trainer.counters", &counters_);
    for (auto& [name, p] : model_.named_params()) {
      tensors.emplace_back(name, &p->w);
      tensors.emplace_back(name + ".adam_m", &p->m);
      tensors.emplace_back(name + ".adam_v", &p->v);
    }
    save_tensors(path, tensors);
  }

  void load_state(const std::string& path) {
    std::vector<std::pair<std::string, Array4<T>*>> tensors;
    counters_ = Array4<T>(1, 4, 1, 1);
    tensors.emplace_back("trainer.counters", &counters_);
    for (auto& [name, p] : model_.named_params()) {
      tensors.emplace_back(name, &p->w);
      tensors.emplace_back(name + ".adam_m", &p->m);
      tensors.emplace_back(name + ".adam_v", &p->v);
    }
    load_tensors(path, tensors);
    step_ = static_cast<std::size_t>(counters_.v[0]);
    next_epoch_ = static_cast<std::size_t>(counters_.v[1]);
    stall_ = static_cast<std::size_t>(counters_.v[2]);
    history_.best_val_loss = static_cast<double>(counters_.v[3]);
    snapshot_best();
  }

 private:
  double run_training_epoch(const KSpaceVolume& data, const detail::PadInfo& pad,
                            std::size_t epoch) {
    const std::size_t ns = data.ns();
    double epoch_loss = 0.0;
    std::size_t batch_start = 0;
    while (batch_start < ns) {
      const std::size_t bs = std::min(cfg_.batch_size, ns - batch_start);
      for (auto* p : model_.params()) p->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < bs; ++k) {
        const std::size_t s = batch_start + k;
        const std::uint64_t mseed = derive_seed(cfg_.base_seed, epoch, s);
        const SamplingMask mask =
            poisson_disc_mask(data.ny(), data.nz(), cfg_.r, cfg_.center_radius, mseed);
        batch_loss += sample_pass(data, pad, s, mask, /*with_grad=*/true,
                                  T(1) / static_cast<T>(bs));
      }
      ++step_;
      for (auto* p : model_.params()) adam_step(*p, cfg_, step_);
      epoch_loss += batch_loss * static_cast<double>(bs);
      batch_start += bs;
    }
    return epoch_loss / static_cast<double>(ns);
  }

  double compute_validation_loss(const KSpaceVolume& data, const detail::PadInfo&) {
    const detail::PadInfo pad = detail::pad_plan(data.ny(), data.nz());
    double loss = 0.0;
    for (std::size_t s = 0; s < data.ns(); ++s) {
      const std::uint64_t mseed = derive_seed(cfg_.base_seed, 0x76616c6d, s);
      if (val_masks_.size() <= s)
        val_masks_.push_back(
            poisson_disc_mask(data.ny(), data.nz(), cfg_.r, cfg_.center_radius, mseed));
      loss += sample_pass(data, pad, s, val_masks_[s], /*with_grad=*/false, T(1));
    }
    return loss / static_cast<double>(data.ns());
  }

  // Builds the graph for one slice, returns scale * ||out - target||^2 and
  // optionally accumulates parameter gradients.
  double sample_pass(const KSpaceVolume& data, const detail::PadInfo& pad, std::size_t s,
                     const SamplingMask& mask, bool with_grad, T scale) {
    KSpaceVolume sl = detail::slice_volume(data, s);
    KSpaceVolume target = pad.padded ? detail::pad_kspace(sl, pad) : sl;
    KSpaceVolume xu = apply_mask(sl, mask);
    KSpaceVolume xu_pad = pad.padded ? detail::pad_kspace(xu, pad) : xu;
    auto grid = detail::pad_mask_grid(mask, pad);
    const CoilConfig config = model_.spec().config;

    Tape<T> tape;
    auto xu_arr = std::make_shared<Array4<T>>(detail::pack_kspace<T>(xu_pad, config));
    auto tgt = std::make_shared<Array4<T>>(detail::pack_kspace<T>(target, config));
    NodeRef<T> x = tape.input(*xu_arr);
    NodeRef<T> out = model_.forward(tape, x, xu_arr, grid);
    NodeRef<T> loss = ops::mse(tape, out, tgt, scale);
    const double value = static_cast<double>(loss->val.v[0]);
    if (with_grad)
      tape.backward(loss);
    else
      tape.clear();
    return value;
  }

  void snapshot_best() {
    best_weights_.clear();
    for (auto* p : model_.params()) best_weights_.push_back(p->w);
  }

  void restore_best() {
    if (best_weights_.empty()) return;
    auto ps = model_.params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->w = best_weights_[i];
  }

  CascadeModel<T>& model_;
  TrainConfig cfg_;
  TrainHistory history_;
  std::vector<Array4<T>> best_weights_;
  std::vector<SamplingMask> val_masks_;
  Array4<T> counters_;
  std::size_t step_ = 0;
  std::size_t next_epoch_ = 0;
  std::size_t stall_ = 0;
};

template <typename T>
TrainHistory train(CascadeModel<T>& model, const KSpaceVolume& train_set,
                   const KSpaceVolume& val_set, const TrainConfig& cfg) {
  Trainer<T> trainer(model, cfg);
  return trainer.train(train_set, val_set);
}

}  // namespace csrecon
