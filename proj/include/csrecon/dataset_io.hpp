#pragma once

// Dataset container: 8-byte magic "CSRECON1", u32-LE length-prefixed UTF-8
// header of key=value lines (version, ns, nc, ny, nz, seed, scale,
// provenance), then Ns*Nc*Ny*Nz interleaved (re, im) float32 LE samples in
// [slice][channel][ky][kz] row-major order.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csrecon/volume.hpp"

namespace csrecon {

inline constexpr char kDatasetMagic[8] = {'C', 'S', 'R', 'E', 'C', 'O', 'N', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const std::string& path, const KSpaceVolume& vol) {
  vol.validate();
  std::ostringstream hdr;
  hdr << "version=" << kDatasetVersion << "\n"
      << "ns=" << vol.meta.ns << "\n"
      << "nc=" << vol.meta.nc << "\n"
      << "ny=" << vol.meta.ny << "\n"
      << "nz=" << vol.meta.nz << "\n"
      << "seed=" << vol.meta.seed << "\n";
  char scale[64];
  std::snprintf(scale, sizeof(scale), "scale=%.17g\n", vol.meta.scale);
  hdr << scale << "provenance=" << provenance_name(vol.meta.provenance) << "\n";
  const std::string header = hdr.str();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("save_dataset: cannot open " + path);
  f.write(kDatasetMagic, 8);
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<float> payload(2 * vol.data.numel());
  for (std::size_t i = 0; i < vol.data.numel(); ++i) {
    payload[2 * i] = static_cast<float>(vol.data[i].real());
    payload[2 * i + 1] = static_cast<float>(vol.data[i].imag());
  }
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!f) throw FormatError("save_dataset: write failed for " + path);
}

inline KSpaceVolume load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_dataset: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (f.gcount() != 8 || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw FormatError("load_dataset: bad magic bytes in " + path);
  std::uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  if (f.gcount() != 4) throw FormatError("load_dataset: truncated header length in " + path);
  std::string header(len, '\0');
  f.read(header.data(), len);
  if (f.gcount() != static_cast<std::streamsize>(len))
    throw FormatError("load_dataset: truncated header in " + path);

  std::map<std::string, std::string> kv;
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw FormatError(std::string("load_dataset: header missing field '") + key + "'");
    return it->second;
  };
  if (std::stoul(need("version")) != kDatasetVersion)
    throw FormatError("load_dataset: unsupported version " + need("version"));

  DatasetMeta meta;
  meta.ns = std::stoul(need("ns"));
  meta.nc = std::stoul(need("nc"));
  meta.ny = std::stoul(need("ny"));
  meta.nz = std::stoul(need("nz"));
  meta.seed = std::stoull(need("seed"));
  meta.scale = std::stod(need("scale"));
  const std::string& prov = need("provenance");
  if (prov == "synthetic")
    meta.provenance = Provenance::Synthetic;
  else if (prov == "external")
    meta.provenance = Provenance::ExternalFile;
  else
    throw FormatError("load_dataset: bad provenance '" + prov + "'");
  if (meta.scale <= 0.0) throw FormatError("load_dataset: field 'scale' must be > 0");

  const std::size_t n = meta.ns * meta.nc * meta.ny * meta.nz;
  std::vector<float> payload(2 * n);
  f.read(reinterpret_cast<char*>(payload.data()),
         static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float)))
    throw FormatError("load_dataset: truncated payload in " + path);

  ComplexTensor t({meta.ns, meta.nc, meta.ny, meta.nz});
  for (std::size_t i = 0; i < n; ++i)
    t[i] = cplx(static_cast<double>(payload[2 * i]), static_cast<double>(payload[2 * i + 1]));
  return KSpaceVolume(std::move(t), meta);
}

}  // namespace csrecon
