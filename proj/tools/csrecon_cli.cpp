// csrecon command line driver.
//
// Subcommands: synth, mask, train, reconstruct, evaluate, bench. Every run
// reads one INI-style config (CSRECON_SECTION_KEY environment variables
// override individual keys), writes its outputs plus a run manifest into
// --out, and exits 0 on success, 2 on configuration errors, 3 on data or
// shape errors, 4 on training divergence.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csrecon/csrecon.hpp"

extern "C" void openblas_set_num_threads(int num_threads);

namespace fs = std::filesystem;
using namespace csrecon;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

std::string out_path(const GlobalArgs& g, const std::string& name) {
  return (fs::path(g.out_dir) / name).string();
}

RunManifest start_manifest(const GlobalArgs& g, const std::string& subcommand,
                           std::uint64_t seed) {
  fs::create_directories(g.out_dir);
  RunManifest m;
  m.subcommand = subcommand;
  m.config_path = g.config_path;
  m.seed = seed;
  m.deterministic = g.deterministic;
  m.started_at = RunManifest::timestamp();
  return m;
}

void finish_manifest(const GlobalArgs& g, RunManifest& m) {
  m.finished_at = RunManifest::timestamp();
  m.save(out_path(g, "manifest.txt"));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = s.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

CascadeSpec spec_from_config(const Config& cfg, const std::string& section, std::size_t nc) {
  CascadeSpec spec;
  const std::string name = cfg.get(section + ".spec");
  if (name == "deepcascade") {
    spec.domains = "IIIIII";
    spec.kind = BlockKind::DeepCascadeBlock;
  } else {
    spec.domains = name;
    spec.kind = BlockKind::UNet;
  }
  const std::string coil = cfg.get(section + ".config", "mc");
  if (coil == "sc")
    spec.config = CoilConfig::SC;
  else if (coil == "mc")
    spec.config = CoilConfig::MC;
  else
    throw ConfigError("config: " + section + ".config must be sc or mc, got '" + coil + "'");
  spec.nc = nc;
  spec.base_width = static_cast<std::size_t>(cfg.get_int(section + ".base_width", 32));
  spec.seed = static_cast<std::uint64_t>(cfg.get_int(section + ".model_seed", 0));
  spec.validate();
  return spec;
}

// Model manifests may reference their checkpoint relative to themselves.
CascadeModel<float> load_model(const std::string& manifest_path) {
  ModelManifest m = load_model_manifest(manifest_path);
  fs::path ckpt(m.checkpoint_path);
  if (ckpt.is_relative()) ckpt = fs::path(manifest_path).parent_path() / ckpt;
  CascadeModel<float> model(m.spec);
  load_checkpoint(ckpt.string(), model);
  return model;
}

void write_pgm(const std::string& path, const Plane& img, double peak) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("write_pgm: cannot open " + path);
  f << "P5\n" << img.nz << " " << img.ny << "\n65535\n";
  for (double v : img.v) {
    const double x = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) : 0.0;
    const std::uint16_t q = static_cast<std::uint16_t>(std::lround(x * 65535.0));
    const unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8),
                                    static_cast<unsigned char>(q & 0xff)};
    f.write(reinterpret_cast<const char*>(bytes), 2);
  }
}

// --- subcommands ---

int cmd_synth(const GlobalArgs& g, const Config& cfg) {
  const std::uint64_t seed =
      g.seed.value_or(static_cast<std::uint64_t>(cfg.get_int("data.seed", 0)));
  const auto ns = static_cast<std::size_t>(cfg.get_int("data.ns", 16));
  const auto nc = static_cast<std::size_t>(cfg.get_int("data.nc", 1));
  const auto ny = static_cast<std::size_t>(cfg.get_int("data.ny", 64));
  const auto nz = static_cast<std::size_t>(cfg.get_int("data.nz", 64));
  const bool trivial = cfg.get_int("data.trivial_coil", 0) != 0;

  RunManifest man = start_manifest(g, "synth", seed);
  SynthesisResult syn = synthesize_phantom(seed, ns, nc, ny, nz, trivial);

  if (cfg.has("data.split")) {
    // "a/b/c" percent shares -> contiguous disjoint train/val/test partition
    const auto parts = split_list([&] {
      std::string s = cfg.get("data.split");
      std::replace(s.begin(), s.end(), '/', ',');
      return s;
    }());
    if (parts.size() != 3) throw ConfigError("config: data.split must be three percentages");
    double shares[3];
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
      shares[i] = std::stod(parts[i]);
      if (shares[i] < 0.0) throw ConfigError("config: data.split shares must be >= 0");
      total += shares[i];
    }
    if (total <= 0.0) throw ConfigError("config: data.split shares sum to zero");
    std::size_t counts[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 2; ++i) {
      counts[i] = static_cast<std::size_t>(std::lround(shares[i] / total * static_cast<double>(ns)));
      counts[i] = std::min(counts[i], ns - assigned);
      assigned += counts[i];
    }
    counts[2] = ns - assigned;
    const char* names[3] = {"train.csr", "val.csr", "test.csr"};
    std::size_t cursor = 0;
    for (int i = 0; i < 3; ++i) {
      if (counts[i] == 0) {
        cursor += counts[i];
        continue;
      }
      ComplexTensor t({counts[i], nc, ny, nz});
      const std::size_t n = nc * ny * nz;
      std::copy_n(syn.kspace.data.values.data() + cursor * n, counts[i] * n, t.values.data());
      DatasetMeta meta = syn.kspace.meta;
      meta.ns = counts[i];
      const std::string path = out_path(g, names[i]);
      save_dataset(path, KSpaceVolume(std::move(t), meta));
      man.outputs.push_back(path);
      cursor += counts[i];
    }
  } else {
    const std::string path = out_path(g, "dataset.csr");
    save_dataset(path, syn.kspace);
    man.outputs.push_back(path);
  }
  finish_manifest(g, man);
  return 0;
}

int cmd_mask(const GlobalArgs& g, const Config& cfg) {
  const std::uint64_t seed =
      g.seed.value_or(static_cast<std::uint64_t>(cfg.get_int("mask.seed", 0)));
  const auto ny = static_cast<std::size_t>(cfg.get_int("mask.ny", 218));
  const auto nz = static_cast<std::size_t>(cfg.get_int("mask.nz", 170));
  const double r = cfg.get_real("mask.r", 4.0);
  const auto radius = static_cast<std::size_t>(cfg.get_int("mask.center_radius", 16));

  RunManifest man = start_manifest(g, "mask", seed);
  SamplingMask mask = poisson_disc_mask(ny, nz, r, radius, seed);
  const std::string path = out_path(g, "mask.csm");
  save_mask(path, mask);
  std::printf("mask %zux%zu R=%g achieved=%.4f d_min=%.4f\n", ny, nz, r,
              achieved_acceleration(mask), mask.d_min);
  man.outputs.push_back(path);
  finish_manifest(g, man);
  return 0;
}

int cmd_train(const GlobalArgs& g, const Config& cfg) {
  const std::string train_path = cfg.get("train.dataset");
  const std::string val_path = cfg.get("train.valset");
  KSpaceVolume train_set = load_dataset(train_path);
  KSpaceVolume val_set = load_dataset(val_path);

  TrainConfig tc;
  tc.learning_rate = cfg.get_real("train.lr", 1e-3);
  tc.decay = cfg.get_real("train.decay", 1e-6);
  tc.max_epochs = static_cast<std::size_t>(cfg.get_int("train.epochs", 50));
  tc.patience = static_cast<std::size_t>(cfg.get_int("train.patience", 5));
  tc.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch_size", 4));
  tc.base_seed = g.seed.value_or(static_cast<std::uint64_t>(cfg.get_int("train.seed", 0)));
  tc.r = cfg.get_real("train.r", 4.0);
  tc.center_radius = static_cast<std::size_t>(cfg.get_int("train.center_radius", 16));
  tc.validate();

  CascadeSpec spec = spec_from_config(cfg, "train", train_set.nc());
  CascadeModel<float> model(spec);
  RunManifest man = start_manifest(g, "train", tc.base_seed);
  man.inputs = {train_path, val_path};

  Trainer<float> trainer(model, tc);
  if (cfg.has("train.resume")) {
    trainer.load_state(cfg.get("train.resume"));
    man.inputs.push_back(cfg.get("train.resume"));
  }
  TrainHistory history = trainer.train(train_set, val_set);

  const std::string ckpt = out_path(g, "model.ckpt");
  const std::string manifest = out_path(g, "model.manifest");
  const std::string hist = out_path(g, "history.csv");
  const std::string state = out_path(g, "trainer_state.bin");
  save_checkpoint(ckpt, model);
  save_model_manifest(manifest, spec, "model.ckpt");
  save_history_csv(hist, history);
  trainer.save_state(state);
  std::printf("trained %s: %zu epochs, best val loss %.9g at epoch %zu\n", spec.domains.c_str(),
              history.stopping_epoch, history.best_val_loss, history.best_epoch);
  man.outputs = {ckpt, manifest, hist, state};
  finish_manifest(g, man);
  return 0;
}

int cmd_reconstruct(const GlobalArgs& g, const Config& cfg) {
  const std::string data_path = cfg.get("reconstruct.dataset");
  const std::string model_path = cfg.get("reconstruct.model");
  KSpaceVolume data = load_dataset(data_path);
  CascadeModel<float> model = load_model(model_path);

  const std::uint64_t seed =
      g.seed.value_or(static_cast<std::uint64_t>(cfg.get_int("reconstruct.mask_seed", 0)));
  RunManifest man = start_manifest(g, "reconstruct", seed);
  man.inputs = {data_path, model_path};

  SamplingMask mask;
  if (cfg.has("reconstruct.mask")) {
    mask = load_mask(cfg.get("reconstruct.mask"));
    man.inputs.push_back(cfg.get("reconstruct.mask"));
  } else {
    const double r = cfg.get_real("reconstruct.r", 4.0);
    const auto radius = static_cast<std::size_t>(cfg.get_int("reconstruct.center_radius", 16));
    mask = poisson_disc_mask(data.ny(), data.nz(), r, radius, seed);
  }

  KSpaceVolume xu = apply_mask(data, mask);
  KSpaceVolume k_out = cascade_forward(model, xu, mask);
  ImageVolume image = sum_of_squares(ifft2c(k_out));

  const std::string kpath = out_path(g, "recon.csr");
  save_dataset(kpath, k_out);
  man.outputs.push_back(kpath);

  double peak = 0.0;
  for (const cplx& v : image.data.values) peak = std::max(peak, v.real());
  for (std::size_t s = 0; s < image.ns(); ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%03zu.pgm", s);
    const std::string ipath = out_path(g, name);
    write_pgm(ipath, combined_slice(image, s), peak);
    man.outputs.push_back(ipath);
  }
  finish_manifest(g, man);
  return 0;
}

int cmd_evaluate(const GlobalArgs& g, const Config& cfg) {
  const std::string data_path = cfg.get("evaluate.dataset");
  KSpaceVolume data = load_dataset(data_path);
  const std::uint64_t seed =
      g.seed.value_or(static_cast<std::uint64_t>(cfg.get_int("evaluate.seed", 0)));
  const auto radius = static_cast<std::size_t>(cfg.get_int("evaluate.center_radius", 16));

  std::vector<double> r_list;
  for (const std::string& r : split_list(cfg.get("evaluate.r_list", "4")))
    r_list.push_back(std::stod(r));
  if (r_list.empty()) throw ConfigError("config: evaluate.r_list is empty");

  RunManifest man = start_manifest(g, "evaluate", seed);
  man.inputs.push_back(data_path);

  std::vector<std::string> ids;
  std::vector<CascadeModel<float>> models;
  for (const std::string& path : split_list(cfg.get("evaluate.models"))) {
    ids.push_back(fs::path(path).stem().string());
    models.push_back(load_model(path));
    man.inputs.push_back(path);
  }
  if (models.empty()) throw ConfigError("config: evaluate.models is empty");

  std::vector<std::pair<std::string, CascadeModel<float>*>> refs;
  for (std::size_t i = 0; i < models.size(); ++i) refs.emplace_back(ids[i], &models[i]);
  MetricsReport report = evaluate(refs, data, r_list, seed, radius);

  const std::string mpath = out_path(g, "metrics.csv");
  const std::string apath = out_path(g, "aggregates.csv");
  save_metrics_csv(mpath, report);
  save_aggregates_csv(apath, report);
  man.outputs = {mpath, apath};

  if (models.size() >= 2) {
    // subjects = included (R, slice) pairs, scored by NRMSE per model
    std::vector<std::vector<double>> scores;
    const std::size_t per_model = report.per_slice.size() / models.size();
    for (std::size_t row = 0; row < per_model; ++row) {
      // per_slice is grouped by (R, model, slice)
      const std::size_t ns = data.ns();
      const std::size_t r_idx = row / ns, s_idx = row % ns;
      std::vector<double> subject;
      bool usable = true;
      for (std::size_t m = 0; m < models.size(); ++m) {
        const SliceMetrics& sm =
            report.per_slice[(r_idx * models.size() + m) * ns + s_idx];
        if (sm.excluded) usable = false;
        subject.push_back(sm.nrmse);
      }
      if (usable) scores.push_back(std::move(subject));
    }
    if (scores.size() >= 2) {
      const std::string spath = out_path(g, "stats.txt");
      save_stat_result(spath, friedman_test(scores), dunn_posthoc(scores), ids);
      man.outputs.push_back(spath);
    }
  }
  finish_manifest(g, man);
  return 0;
}

int cmd_bench(const GlobalArgs& g, const Config& cfg) {
  const std::uint64_t seed =
      g.seed.value_or(static_cast<std::uint64_t>(cfg.get_int("bench.seed", 0)));
  const auto ny = static_cast<std::size_t>(cfg.get_int("bench.ny", 218));
  const auto nz = static_cast<std::size_t>(cfg.get_int("bench.nz", 170));
  const auto nc = static_cast<std::size_t>(cfg.get_int("bench.nc", 1));
  const double r = cfg.get_real("bench.r", 4.0);
  const auto radius = static_cast<std::size_t>(cfg.get_int("bench.center_radius", 16));
  const auto slices = static_cast<std::size_t>(cfg.get_int("bench.slices", 256));

  RunManifest man = start_manifest(g, "bench", seed);
  SynthesisResult syn = synthesize_phantom(seed, 1, nc, ny, nz, nc == 1);
  SamplingMask mask = poisson_disc_mask(ny, nz, r, radius, derive_seed(seed, 0x62656e63));

  const std::string bpath = out_path(g, "bench.csv");
  std::ofstream f(bpath);
  if (!f) throw FormatError("bench: cannot open " + bpath);
  f << "model,ms_per_slice\n";
  for (const std::string& path : split_list(cfg.get("bench.models"))) {
    CascadeModel<float> model = load_model(path);
    const double ms = benchmark_time(model, syn.kspace, mask, slices);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%.3f\n", fs::path(path).stem().string().c_str(), ms);
    f << buf;
    std::printf("%s", buf);
    man.inputs.push_back(path);
  }
  man.outputs.push_back(bpath);
  finish_manifest(g, man);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compressed-sensing MRI reconstruction toolkit"};
  app.require_subcommand(1);

  GlobalArgs g;
  std::uint64_t seed_arg = 0;
  app.add_option("--config", g.config_path, "path to the run configuration")->required();
  app.add_option("--out", g.out_dir, "output directory (created if missing)");
  auto* seed_opt = app.add_option("--seed", seed_arg, "override the configured base seed");
  app.add_flag("--deterministic", g.deterministic,
               "single-threaded BLAS for bit-reproducible runs");

  int (*handler)(const GlobalArgs&, const Config&) = nullptr;
  for (auto [name, fn] : {std::pair{"synth", &cmd_synth}, std::pair{"mask", &cmd_mask},
                          std::pair{"train", &cmd_train},
                          std::pair{"reconstruct", &cmd_reconstruct},
                          std::pair{"evaluate", &cmd_evaluate}, std::pair{"bench", &cmd_bench}}) {
    auto fn_copy = fn;
    auto* sub = app.add_subcommand(name);
    sub->fallthrough();  // global flags may follow the subcommand
    sub->callback([&handler, fn_copy]() { handler = fn_copy; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed_arg;
  if (g.deterministic) openblas_set_num_threads(1);

  try {
    const Config cfg = Config::from_file(g.config_path);
    return handler(g, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {  // Shape/Format and filesystem errors
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
