// Copyright 2026 The spikeprune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spikeprune/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace spikeprune {

namespace {

using nlohmann::json;

void put_f32_le(float x, std::string& out) {
  std::uint32_t u;
  std::memcpy(&u, &x, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

float get_f32_le(const std::string& buf, std::size_t at) {
  const auto b = [&](std::size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i]));
  };
  const std::uint32_t u = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
  float x;
  std::memcpy(&x, &u, 4);
  return x;
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open for write: " + path);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw CheckpointError("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open: " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return data;
}

}  // namespace

void save_checkpoint(const std::string& dir,
                     const std::vector<const Parameter*>& params) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["dtype"] = "f32";
  json plist = json::array();

  std::string weights;
  std::string masks;
  std::int64_t mask_bits = 0;
  std::uint8_t pending = 0;
  int pending_bits = 0;
  auto push_bit = [&](bool bit) {
    if (bit) pending |= static_cast<std::uint8_t>(1u << pending_bits);
    if (++pending_bits == 8) {
      masks.push_back(static_cast<char>(pending));
      pending = 0;
      pending_bits = 0;
    }
    ++mask_bits;
  };

  for (const Parameter* p : params) {
    json entry;
    entry["name"] = p->name;
    entry["shape"] = p->value.shape;
    entry["dtype"] = "f32";
    entry["byte_offset"] = weights.size();
    entry["byte_length"] = static_cast<std::size_t>(p->numel()) * 4;
    entry["prunable"] = p->prunable;
    entry["init_bound"] = p->init.uniform_bound;
    for (float x : p->value.v) put_f32_le(x, weights);
    if (p->prunable) {
      entry["mask_bit_offset"] = mask_bits;
      for (float m : p->mask.v) push_bit(m != 0.0f);
    }
    plist.push_back(std::move(entry));
  }
  if (pending_bits > 0) masks.push_back(static_cast<char>(pending));
  manifest["params"] = std::move(plist);
  manifest["weight_bytes"] = weights.size();
  manifest["mask_bits"] = mask_bits;

  write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
  write_file(dir + "/weights.bin", weights);
  write_file(dir + "/masks.bin", masks);
}

void load_checkpoint(const std::string& dir, const std::vector<Parameter*>& params) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    throw CheckpointError("bad manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("version"))
    throw CheckpointError("manifest missing version field");
  if (manifest["version"].get<int>() != 1)
    throw CheckpointError("unsupported checkpoint version");

  const std::string weights = read_file(dir + "/weights.bin");
  const std::string masks = read_file(dir + "/masks.bin");
  const auto& plist = manifest["params"];
  if (plist.size() != params.size())
    throw CheckpointError("parameter count drift: manifest has " +
                          std::to_string(plist.size()) + ", model has " +
                          std::to_string(params.size()));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter* p = params[i];
    const auto& entry = plist[i];
    if (entry["name"].get<std::string>() != p->name)
      throw CheckpointError("parameter name drift at index " + std::to_string(i) +
                            ": " + entry["name"].get<std::string>() + " vs " + p->name);
    const auto shape = entry["shape"].get<std::vector<std::int64_t>>();
    if (shape != p->value.shape)
      throw CheckpointError("shape drift for " + p->name + ": checkpoint " +
                            shape_str(shape) + " vs model " + shape_str(p->value.shape));
    const std::size_t off = entry["byte_offset"].get<std::size_t>();
    const std::size_t len = entry["byte_length"].get<std::size_t>();
    if (len != static_cast<std::size_t>(p->numel()) * 4 || off + len > weights.size())
      throw CheckpointError("weight blob extent mismatch for " + p->name);
    for (std::int64_t j = 0; j < p->numel(); ++j)
      p->value.v[j] = get_f32_le(weights, off + static_cast<std::size_t>(j) * 4);
    p->init.uniform_bound = entry["init_bound"].get<float>();
    if (entry["prunable"].get<bool>() != p->prunable)
      throw CheckpointError("prunable flag drift for " + p->name);
    if (p->prunable) {
      const std::int64_t bit_off = entry["mask_bit_offset"].get<std::int64_t>();
      for (std::int64_t j = 0; j < p->numel(); ++j) {
        const std::int64_t bit = bit_off + j;
        const std::size_t byte = static_cast<std::size_t>(bit / 8);
        if (byte >= masks.size())
          throw CheckpointError("mask blob too short for " + p->name);
        const bool on =
            (static_cast<unsigned char>(masks[byte]) >> (bit % 8)) & 1;
        p->mask.v[j] = on ? 1.0f : 0.0f;
      }
    }
  }
}

}  // namespace spikeprune
