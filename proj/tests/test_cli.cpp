#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "csrecon/dataset_io.hpp"
#include "csrecon/mask.hpp"

using namespace csrecon;
namespace fs = std::filesystem;

namespace {

std::string cli_bin() {
  const char* p = std::getenv("CSRECON_BIN");
  REQUIRE_MESSAGE(p != nullptr, "CSRECON_BIN must point at the built csrecon binary");
  return p;
}

int run(const std::string& args) {
  const int status = std::system((cli_bin() + " " + args + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("usage and configuration errors exit with code 2") {
  CHECK(run("") == 2);
  CHECK(run("synth") == 2);  // --config is required
  CHECK(run("synth --config /nonexistent/path.cfg") == 2);

  TempDir dir("csrecon_cli_badcfg");
  write_file(dir / "bad.cfg", "[data]\nthis line has no equals sign\n");
  CHECK(run("synth --config " + (dir / "bad.cfg") + " --out " + (dir / "out")) == 2);
}

TEST_CASE("synth writes a loadable dataset and is byte-deterministic") {
  TempDir dir("csrecon_cli_synth");
  write_file(dir / "run.cfg", "[data]\nseed = 11\nns = 4\nnc = 2\nny = 32\nnz = 32\n");

  CHECK(run("synth --config " + (dir / "run.cfg") + " --out " + (dir / "a")) == 0);
  CHECK(run("synth --config " + (dir / "run.cfg") + " --out " + (dir / "b")) == 0);

  KSpaceVolume v = load_dataset(dir / "a/dataset.csr");
  CHECK(v.ns() == 4);
  CHECK(v.nc() == 2);
  CHECK(v.ny() == 32);
  CHECK(read_bytes(dir / "a/dataset.csr") == read_bytes(dir / "b/dataset.csr"));
  CHECK(fs::exists(dir / "a/manifest.txt"));
}

TEST_CASE("the --seed flag overrides the configured seed") {
  TempDir dir("csrecon_cli_seed");
  write_file(dir / "run.cfg", "[data]\nseed = 11\nns = 2\nnc = 1\nny = 32\nnz = 32\n");
  CHECK(run("synth --config " + (dir / "run.cfg") + " --out " + (dir / "a")) == 0);
  CHECK(run("synth --config " + (dir / "run.cfg") + " --seed 12 --out " + (dir / "b")) == 0);
  CHECK(run("synth --config " + (dir / "run.cfg") + " --seed 12 --out " + (dir / "c")) == 0);
  CHECK(read_bytes(dir / "a/dataset.csr") != read_bytes(dir / "b/dataset.csr"));
  CHECK(read_bytes(dir / "b/dataset.csr") == read_bytes(dir / "c/dataset.csr"));
}

TEST_CASE("split partitions are disjoint and exhaustive") {
  TempDir dir("csrecon_cli_split");
  write_file(dir / "run.cfg",
             "[data]\nseed = 5\nns = 10\nnc = 1\nny = 32\nnz = 32\nsplit = 60/20/20\n");
  CHECK(run("synth --config " + (dir / "run.cfg") + " --out " + (dir / "out")) == 0);

  KSpaceVolume tr = load_dataset(dir / "out/train.csr");
  KSpaceVolume va = load_dataset(dir / "out/val.csr");
  KSpaceVolume te = load_dataset(dir / "out/test.csr");
  CHECK(tr.ns() == 6);
  CHECK(va.ns() == 2);
  CHECK(te.ns() == 2);

  // concatenating the three partitions reproduces the unsplit volume
  write_file(dir / "all.cfg", "[data]\nseed = 5\nns = 10\nnc = 1\nny = 32\nnz = 32\n");
  CHECK(run("synth --config " + (dir / "all.cfg") + " --out " + (dir / "full")) == 0);
  KSpaceVolume all = load_dataset(dir / "full/dataset.csr");
  std::size_t cursor = 0;
  for (const KSpaceVolume* part : {&tr, &va, &te}) {
    for (std::size_t i = 0; i < part->data.numel(); ++i)
      CHECK(part->data[i] == all.data[cursor + i]);
    cursor += part->data.numel();
  }
  CHECK(cursor == all.data.numel());
}

TEST_CASE("mask subcommand writes a loadable mask") {
  TempDir dir("csrecon_cli_mask");
  write_file(dir / "run.cfg",
             "[mask]\nny = 64\nnz = 64\nr = 4\ncenter_radius = 8\nseed = 3\n");
  CHECK(run("mask --config " + (dir / "run.cfg") + " --out " + (dir / "out")) == 0);
  SamplingMask m = load_mask(dir / "out/mask.csm");
  CHECK(m.ny == 64);
  CHECK(m.nz == 64);
  CHECK(m.ones() > 0);
}

TEST_CASE("train, reconstruct and evaluate round trip through the CLI") {
  TempDir dir("csrecon_cli_train");
  const std::string cfg = dir / "run.cfg";
  write_file(cfg,
             "[data]\nseed = 7\nns = 8\nnc = 1\nny = 32\nnz = 32\ntrivial_coil = 1\n"
             "split = 50/25/25\n"
             "[train]\ndataset = " + (dir / "data/train.csr") +
             "\nvalset = " + (dir / "data/val.csr") +
             "\nspec = II\nconfig = sc\nbase_width = 4\nepochs = 2\npatience = 2\n"
             "batch_size = 2\nr = 3\ncenter_radius = 8\nseed = 1\n"
             "[reconstruct]\ndataset = " + (dir / "data/test.csr") +
             "\nmodel = " + (dir / "model/model.manifest") +
             "\nr = 1\ncenter_radius = 8\nmask_seed = 2\n"
             "[evaluate]\ndataset = " + (dir / "data/test.csr") +
             "\nmodels = " + (dir / "model/model.manifest") +
             "\nr_list = 3\nseed = 2\ncenter_radius = 8\n");

  REQUIRE(run("synth --config " + cfg + " --out " + (dir / "data")) == 0);
  REQUIRE(run("train --config " + cfg + " --deterministic --out " + (dir / "model")) == 0);
  CHECK(fs::exists(dir / "model/model.ckpt"));
  CHECK(fs::exists(dir / "model/history.csv"));

  // R = 1: hard DC makes any model reproduce the measurements exactly
  REQUIRE(run("reconstruct --config " + cfg + " --out " + (dir / "recon")) == 0);
  KSpaceVolume recon = load_dataset(dir / "recon/recon.csr");
  KSpaceVolume test_set = load_dataset(dir / "data/test.csr");
  REQUIRE(recon.data.shape == test_set.data.shape);
  for (std::size_t i = 0; i < recon.data.numel(); ++i)
    CHECK(recon.data[i] == test_set.data[i]);
  CHECK(fs::exists(dir / "recon/slice_000.pgm"));

  // evaluation is deterministic across runs, byte for byte
  REQUIRE(run("evaluate --config " + cfg + " --deterministic --out " + (dir / "e1")) == 0);
  REQUIRE(run("evaluate --config " + cfg + " --deterministic --out " + (dir / "e2")) == 0);
  CHECK(read_bytes(dir / "e1/metrics.csv") == read_bytes(dir / "e2/metrics.csv"));
  CHECK(read_bytes(dir / "e1/aggregates.csv") == read_bytes(dir / "e2/aggregates.csv"));
  std::ifstream f(dir / "e1/metrics.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "model,R,slice,nrmse,psnr_db,vif,excluded");
}

TEST_CASE("a bad cascade spec string exits with code 2") {
  TempDir dir("csrecon_cli_badspec");
  const std::string cfg = dir / "run.cfg";
  write_file(cfg,
             "[data]\nseed = 7\nns = 2\nnc = 1\nny = 32\nnz = 32\n"
             "[train]\ndataset = " + (dir / "data/dataset.csr") +
             "\nvalset = " + (dir / "data/dataset.csr") +
             "\nspec = IQ\nconfig = sc\nbase_width = 4\nepochs = 1\npatience = 1\n"
             "r = 3\ncenter_radius = 8\n");
  REQUIRE(run("synth --config " + cfg + " --out " + (dir / "data")) == 0);
  CHECK(run("train --config " + cfg + " --out " + (dir / "model")) == 2);
}

TEST_CASE("training divergence exits with code 4") {
  TempDir dir("csrecon_cli_diverge");
  const std::string cfg = dir / "run.cfg";
  write_file(cfg,
             "[data]\nseed = 9\nns = 2\nnc = 1\nny = 32\nnz = 32\ntrivial_coil = 1\n"
             "[train]\ndataset = " + (dir / "data/dataset.csr") +
             "\nvalset = " + (dir / "data/dataset.csr") +
             "\nspec = I\nconfig = sc\nbase_width = 4\nepochs = 10\npatience = 10\n"
             "lr = 1e18\nr = 3\ncenter_radius = 8\n");
  REQUIRE(run("synth --config " + cfg + " --out " + (dir / "data")) == 0);
  CHECK(run("train --config " + cfg + " --out " + (dir / "model")) == 4);
}

TEST_CASE("environment variables override config keys") {
  TempDir dir("csrecon_cli_env");
  write_file(dir / "run.cfg", "[data]\nseed = 11\nns = 2\nnc = 1\nny = 32\nnz = 32\n");
  CHECK(run("synth --config " + (dir / "run.cfg") + " --out " + (dir / "a")) == 0);
  const int status = std::system(("CSRECON_DATA_SEED=12 " + cli_bin() + " synth --config " +
                                  (dir / "run.cfg") + " --out " + (dir / "b") + " > /dev/null 2>&1")
                                     .c_str());
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(read_bytes(dir / "a/dataset.csr") != read_bytes(dir / "b/dataset.csr"));
}
