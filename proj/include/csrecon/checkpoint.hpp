#pragma once

// Weight checkpoints: magic "CSWGT1", u32-LE length-prefixed manifest (one
// line per tensor: name b c h w), then float32 LE payload in manifest
// order. Loading validates the manifest against the constructed model.
// Model manifests are key=value text sufficient to rebuild a model.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csrecon/cascade.hpp"

namespace csrecon {

inline constexpr char kWeightMagic[6] = {'C', 'S', 'W', 'G', 'T', '1'};

template <typename T>
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Array4<T>*>>& tensors) {
  std::ostringstream hdr;
  for (const auto& [name, arr] : tensors)
    hdr << name << " " << arr->b << " " << arr->c << " " << arr->h << " " << arr->w << "\n";
  const std::string header = hdr.str();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("save_tensors: cannot open " + path);
  f.write(kWeightMagic, 6);
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, arr] : tensors) {
    std::vector<float> buf(arr->numel());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(arr->v[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw FormatError("save_tensors: write failed for " + path);
}

template <typename T>
void load_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Array4<T>*>>& tensors) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_tensors: cannot open " + path);
  char magic[6];
  f.read(magic, 6);
  if (f.gcount() != 6 || std::memcmp(magic, kWeightMagic, 6) != 0)
    throw FormatError("load_tensors: bad magic in " + path);
  std::uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  std::string header(len, '\0');
  f.read(header.data(), len);
  if (f.gcount() != static_cast<std::streamsize>(len))
    throw FormatError("load_tensors: truncated manifest in " + path);

  std::istringstream hs(header);
  std::string line;
  std::size_t idx = 0;
  for (; std::getline(hs, line); ++idx) {
    if (idx >= tensors.size())
      throw FormatError("load_tensors: checkpoint has more tensors than the model");
    std::istringstream ls(line);
    std::string name;
    std::size_t b, c, h, w;
    if (!(ls >> name >> b >> c >> h >> w))
      throw FormatError("load_tensors: bad manifest line '" + line + "'");
    Array4<T>* arr = tensors[idx].second;
    if (name != tensors[idx].first)
      throw FormatError("load_tensors: tensor '" + name + "' does not match expected '" +
                        tensors[idx].first + "'");
    if (b != arr->b || c != arr->c || h != arr->h || w != arr->w)
      throw FormatError("load_tensors: shape mismatch for '" + name + "'");
    std::vector<float> buf(arr->numel());
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
      throw FormatError("load_tensors: truncated payload for '" + name + "'");
    for (std::size_t i = 0; i < buf.size(); ++i) arr->v[i] = static_cast<T>(buf[i]);
  }
  if (idx != tensors.size())
    throw FormatError("load_tensors: checkpoint has fewer tensors than the model");
}

template <typename T>
void save_checkpoint(const std::string& path, CascadeModel<T>& model) {
  std::vector<std::pair<std::string, const Array4<T>*>> tensors;
  for (auto& [name, p] : model.named_params()) tensors.emplace_back(name, &p->w);
  save_tensors(path, tensors);
}

template <typename T>
void load_checkpoint(const std::string& path, CascadeModel<T>& model) {
  std::vector<std::pair<std::string, Array4<T>*>> tensors;
  for (auto& [name, p] : model.named_params()) tensors.emplace_back(name, &p->w);
  load_tensors(path, tensors);
}

inline void save_model_manifest(const std::string& path, const CascadeSpec& spec,
                                const std::string& checkpoint_path) {
  std::ofstream f(path);
  if (!f) throw FormatError("save_model_manifest: cannot open " + path);
  f << "spec=" << spec.domains << "\n"
    << "kind=" << (spec.kind == BlockKind::UNet ? "unet" : "deepcascade") << "\n"
    << "config=" << (spec.config == CoilConfig::SC ? "sc" : "mc") << "\n"
    << "nc=" << spec.nc << "\n"
    << "base_width=" << spec.base_width << "\n"
    << "seed=" << spec.seed << "\n"
    << "checkpoint=" << checkpoint_path << "\n";
}

struct ModelManifest {
  CascadeSpec spec;
  std::string checkpoint_path;
};

inline ModelManifest load_model_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("load_model_manifest: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw FormatError(std::string("load_model_manifest: missing field '") + key + "'");
    return it->second;
  };
  ModelManifest m;
  m.spec.domains = need("spec");
  const std::string& kind = need("kind");
  if (kind == "unet")
    m.spec.kind = BlockKind::UNet;
  else if (kind == "deepcascade")
    m.spec.kind = BlockKind::DeepCascadeBlock;
  else
    throw FormatError("load_model_manifest: bad kind '" + kind + "'");
  const std::string& config = need("config");
  if (config == "sc")
    m.spec.config = CoilConfig::SC;
  else if (config == "mc")
    m.spec.config = CoilConfig::MC;
  else
    throw FormatError("load_model_manifest: bad config '" + config + "'");
  m.spec.nc = std::stoul(need("nc"));
  m.spec.base_width = std::stoul(need("base_width"));
  m.spec.seed = std::stoull(need("seed"));
  m.checkpoint_path = need("checkpoint");
  m.spec.validate();
  return m;
}

}  // namespace csrecon
