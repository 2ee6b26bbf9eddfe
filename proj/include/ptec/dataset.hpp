#pragma once

#include <nlohmann/json.hpp>

#include <fstream>

#include "ptec/data.hpp"
#include "ptec/errors.hpp"

namespace ptec {

// Flat binary dataset: 8-byte LE header length, UTF-8 JSON header
// (M, dims, counts, seed, names, weights), then little-endian 64-bit real
// frames per source in source order, training samples before heldout ones.

inline void save_dataset(const std::string& path,
                         const std::vector<DataSource>& sources,
                         int feature_dim, int frames_per_sample,
                         std::uint64_t seed) {
  nlohmann::json header;
  header["M"] = sources.size();
  header["feature_dim"] = feature_dim;
  header["frames_per_sample"] = frames_per_sample;
  header["seed"] = seed;
  for (const DataSource& s : sources) {
    header["names"].push_back(s.name);
    header["train_counts"].push_back(s.samples.size());
    header["heldout_counts"].push_back(s.heldout.size());
    header["size_weights"].push_back(s.size_weight);
  }
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_dataset: cannot open " + path);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  auto write_samples = [&](const std::vector<Sample>& samples) {
    for (const Sample& smp : samples)
      out.write(reinterpret_cast<const char*>(smp.data.data()),
                static_cast<std::streamsize>(smp.data.size() * 8));
  };
  for (const DataSource& s : sources) {
    write_samples(s.samples);
    write_samples(s.heldout);
  }
  out.flush();
  if (!out) throw Error("save_dataset: write failed for " + path);
}

inline std::vector<DataSource> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_dataset: cannot open " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in) throw FormatError("load_dataset: truncated header length");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("load_dataset: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("load_dataset: bad header JSON: ") + e.what());
  }
  const auto M = header.at("M").get<std::size_t>();
  const int feature_dim = header.at("feature_dim").get<int>();
  const int frames = header.at("frames_per_sample").get<int>();
  std::vector<DataSource> out;
  auto read_samples = [&](std::vector<Sample>& dst, std::size_t count) {
    for (std::size_t n = 0; n < count; ++n) {
      Sample s(frames, feature_dim);
      const std::streamsize want =
          static_cast<std::streamsize>(s.data.size() * 8);
      in.read(reinterpret_cast<char*>(s.data.data()), want);
      if (in.gcount() != want)
        throw CorruptionError("load_dataset: frame payload truncated");
      dst.push_back(std::move(s));
    }
  };
  for (std::size_t i = 0; i < M; ++i) {
    DataSource src;
    src.source_id = static_cast<int>(i);
    src.name = header.at("names").at(i).get<std::string>();
    src.size_weight = header.at("size_weights").at(i).get<double>();
    read_samples(src.samples, header.at("train_counts").at(i).get<std::size_t>());
    read_samples(src.heldout, header.at("heldout_counts").at(i).get<std::size_t>());
    out.push_back(std::move(src));
  }
  return out;
}

}  // namespace ptec
