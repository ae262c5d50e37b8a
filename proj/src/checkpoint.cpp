// Copyright 2026 The tslm Authors.
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

#include "tslm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tslm/errors.hpp"

namespace tslm::ad {
namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw ParseError("checkpoint truncated in header");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\n") != std::string::npos) {
    throw ValidationError(std::string("checkpoint ") + what +
                          " must be a non-empty token without whitespace: '" + s + "'");
  }
}

}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  std::ostringstream manifest;
  std::uint64_t offset = 0;
  for (const auto& [key, value] : data.meta) {
    check_token(key, "meta key");
    if (value.find('\n') != std::string::npos) {
      throw ValidationError("checkpoint meta value contains a newline: " + key);
    }
    manifest << "meta " << key << ' ' << value << '\n';
  }
  for (const auto& [name, t] : data.tensors) {
    check_token(name, "tensor name");
    manifest << "tensor " << name << ' ' << t.rank();
    for (auto d : t.shape()) manifest << ' ' << d;
    manifest << ' ' << offset << ' ' << t.size() << '\n';
    offset += 8 * t.size();
  }
  const std::string text = manifest.str();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(kCheckpointMagic, 4);
    put_le<std::uint32_t>(os, kCheckpointVersion);
    put_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : data.tensors) {
      for (double v : t.values()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw ParseError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = get_le<std::uint64_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) {
    throw ParseError("checkpoint truncated in manifest");
  }
  const std::streamoff payload = is.tellg();

  CheckpointData data;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      data.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      ls >> name >> rank;
      Shape shape(rank);
      for (auto& d : shape) ls >> d;
      std::uint64_t offset = 0, count = 0;
      ls >> offset >> count;
      if (!ls || count != shape_size(shape)) {
        throw ParseError("bad manifest line " + std::to_string(lineno) + ": " + line);
      }
      std::vector<double> values(count);
      is.seekg(payload + static_cast<std::streamoff>(offset));
      for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
      data.tensors.emplace_back(name, Tensor(std::move(shape), std::move(values)));
    } else if (!kind.empty()) {
      throw ParseError("unknown manifest entry on line " + std::to_string(lineno));
    }
  }
  return data;
}

void append_parameters(CheckpointData& data, const ParameterStore& store) {
  for (const auto& p : store.all()) data.tensors.emplace_back(p.name, p.value);
}

void restore_parameters(const CheckpointData& data, ParameterStore& store) {
  for (auto& p : store.all()) {
    const Tensor* t = data.find(p.name);
    if (t == nullptr) throw ParseError("checkpoint lacks parameter " + p.name);
    if (t->shape() != p.value.shape()) {
      throw DimensionError("checkpoint parameter " + p.name + " has shape " +
                           shape_str(t->shape()) + ", model expects " +
                           shape_str(p.value.shape()));
    }
    p.value = *t;
  }
}

}  // namespace tslm::ad
