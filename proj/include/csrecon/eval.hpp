#pragma once

// Experiment harness: per-slice NRMSE/pSNR/VIF against the fully sampled
// SOS reference, acceleration sweeps, noise-only edge-slice exclusion, and
// per-slice reconstruction timing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "csrecon/cascade.hpp"
#include "csrecon/metrics.hpp"
#include "csrecon/stats.hpp"
#include "csrecon/train.hpp"

namespace csrecon {

struct SliceMetrics {
  std::string model_id;
  double r = 0.0;
  std::size_t slice = 0;
  double nrmse = 0.0, psnr = 0.0, vif = 0.0;
  bool excluded = false;
};

struct AggregateMetrics {
  std::string model_id;
  double r = 0.0;
  double nrmse_mean = 0.0, nrmse_std = 0.0;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double vif_mean = 0.0, vif_std = 0.0;
  std::size_t slices = 0;
};

struct MetricsReport {
  std::vector<SliceMetrics> per_slice;
  std::vector<AggregateMetrics> aggregates;
  std::string exclusion_note;
};

inline Plane combined_slice(const ImageVolume& v, std::size_t s) {
  if (v.kind != ImageKind::Combined) throw ShapeError("combined_slice: volume must be Combined");
  Plane p(v.ny(), v.nz());
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = v.data[s * p.v.size() + i].real();
  return p;
}

// Noise-only edge-slice rule: exclude a slice when the fraction of reference
// pixels above 5% of the volume peak falls below `min_foreground`.
inline bool is_edge_slice(const ImageVolume& ref, std::size_t s, double volume_peak,
                          double min_foreground = 0.02) {
  const std::size_t plane = ref.ny() * ref.nz();
  std::size_t above = 0;
  for (std::size_t i = 0; i < plane; ++i)
    if (ref.data[s * plane + i].real() > 0.05 * volume_peak) ++above;
  return static_cast<double>(above) / static_cast<double>(plane) < min_foreground;
}

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(sd / static_cast<double>(xs.size() - 1)) : 0.0;
}

}  // namespace detail

// Evaluates trained models over a test volume for each acceleration factor.
// Evaluation masks are drawn from fixed per-(R, slice) seeds so every model
// sees identical undersampling.
template <typename T>
MetricsReport evaluate(std::vector<std::pair<std::string, CascadeModel<T>*>> models,
                       const KSpaceVolume& test_set, const std::vector<double>& r_list,
                       std::uint64_t eval_seed, std::size_t center_radius = 16,
                       double min_foreground = 0.02) {
  MetricsReport report;
  report.exclusion_note =
      "slices with < " + std::to_string(min_foreground * 100.0) +
      "% of pixels above 5% of the volume peak are excluded as noise-only edge slices";

  const ImageVolume reference = sum_of_squares(ifft2c(test_set));
  double peak = 0.0;
  for (const cplx& v : reference.data.values) peak = std::max(peak, v.real());

  for (double r : r_list) {
    std::vector<SamplingMask> masks;
    for (std::size_t s = 0; s < test_set.ns(); ++s)
      masks.push_back(poisson_disc_mask(test_set.ny(), test_set.nz(), r, center_radius,
                                        derive_seed(eval_seed, static_cast<std::uint64_t>(r * 1000), s)));
    for (auto& [model_id, model] : models) {
      std::vector<double> ns, ps, vs;
      for (std::size_t s = 0; s < test_set.ns(); ++s) {
        KSpaceVolume slice = detail::slice_volume(test_set, s);
        KSpaceVolume xu = apply_mask(slice, masks[s]);
        ImageVolume recon = reconstruct(*model, xu, masks[s]);
        SliceMetrics m;
        m.model_id = model_id;
        m.r = r;
        m.slice = s;
        m.excluded = is_edge_slice(reference, s, peak, min_foreground);
        const Plane ref_p = combined_slice(reference, s);
        const Plane rec_p = combined_slice(recon, 0);
        m.nrmse = nrmse(rec_p, ref_p);
        m.psnr = psnr(rec_p, ref_p);
        m.vif = vif(rec_p, ref_p);
        report.per_slice.push_back(m);
        if (!m.excluded && std::isfinite(m.psnr)) {
          ns.push_back(m.nrmse);
          ps.push_back(m.psnr);
          vs.push_back(m.vif);
        }
      }
      AggregateMetrics agg;
      agg.model_id = model_id;
      agg.r = r;
      agg.slices = ns.size();
      detail::mean_std(ns, agg.nrmse_mean, agg.nrmse_std);
      detail::mean_std(ps, agg.psnr_mean, agg.psnr_std);
      detail::mean_std(vs, agg.vif_mean, agg.vif_std);
      report.aggregates.push_back(agg);
    }
  }
  return report;
}

// Mean wall-clock milliseconds per slice over `slices` reconstructions of a
// representative undersampled slice; warm-up iterations excluded.
template <typename T>
double benchmark_time(CascadeModel<T>& model, const KSpaceVolume& sample_slice,
                      const SamplingMask& mask, std::size_t slices = 256,
                      std::size_t warmup = 4) {
  KSpaceVolume xu = apply_mask(sample_slice, mask);
  for (std::size_t i = 0; i < warmup; ++i) (void)reconstruct(model, xu, mask);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < slices; ++i) (void)reconstruct(model, xu, mask);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return secs * 1000.0 / static_cast<double>(slices);
}

inline void save_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream f(path);
  if (!f) throw FormatError("save_metrics_csv: cannot open " + path);
  f << "model,R,slice,nrmse,psnr_db,vif,excluded\n";
  char buf[192];
  for (const SliceMetrics& m : report.per_slice) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%zu,%.9g,%.9g,%.9g,%d\n", m.model_id.c_str(), m.r,
                  m.slice, m.nrmse, m.psnr, m.vif, m.excluded ? 1 : 0);
    f << buf;
  }
}

inline void save_aggregates_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream f(path);
  if (!f) throw FormatError("save_aggregates_csv: cannot open " + path);
  f << "model,R,slices,nrmse_mean,nrmse_std,psnr_mean,psnr_std,vif_mean,vif_std\n";
  char buf[256];
  for (const AggregateMetrics& a : report.aggregates) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%zu,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                  a.model_id.c_str(), a.r, a.slices, a.nrmse_mean, a.nrmse_std, a.psnr_mean,
                  a.psnr_std, a.vif_mean, a.vif_std);
    f << buf;
  }
}

inline void save_stat_result(const std::string& path, const StatTestResult& friedman,
                             const StatTestResult& dunn,
                             const std::vector<std::string>& model_ids) {
  std::ofstream f(path);
  if (!f) throw FormatError("save_stat_result: cannot open " + path);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "friedman chi2 = %.6g\np = %.6g\nalpha = %.2f\n",
                friedman.statistic, friedman.p_value, dunn.alpha);
  f << buf;
  f << "dunn-bonferroni adjusted p-values:\n";
  for (std::size_t a = 0; a < dunn.pairwise_adjusted.size(); ++a)
    for (std::size_t b = a + 1; b < dunn.pairwise_adjusted.size(); ++b) {
      std::snprintf(buf, sizeof(buf), "  %s vs %s: %.6g\n", model_ids[a].c_str(),
                    model_ids[b].c_str(), dunn.pairwise_adjusted[a][b]);
      f << buf;
    }
}

}  // namespace csrecon
