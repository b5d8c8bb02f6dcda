/*
 * Copyright 2026 The ranklab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ranklab/common.hpp"
#include "ranklab/tensor.hpp"

namespace ranklab {

// Checkpoint container: a text manifest (one line per tensor with name,
// shape and byte offset into the payload) followed by the raw payload of
// little-endian IEEE-754 doubles. Round-trips are bit-exact.
//
//   ranklab-checkpoint 1
//   tensor <name> <d0>x<d1>... <offset>
//   payload <total-bytes>
//   <binary doubles>

namespace detail {

inline void put_le64(std::ostream& os, std::uint64_t bits) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline std::uint64_t get_le64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return bits;
}

inline std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

inline Shape parse_shape_token(const std::string& tok) {
  Shape s;
  std::size_t pos = 0;
  while (pos < tok.size()) {
    std::size_t next = tok.find('x', pos);
    if (next == std::string::npos) next = tok.size();
    s.push_back(static_cast<std::size_t>(std::stoull(tok.substr(pos, next - pos))));
    pos = next + 1;
  }
  return s;
}

} // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  check_config(os.good(), "checkpoint: cannot open ", path, " for writing");
  std::uint64_t offset = 0;
  os << "ranklab-checkpoint 1\n";
  for (const auto& [name, t] : tensors) {
    check(name.find(' ') == std::string::npos && !name.empty(),
          "checkpoint: tensor name must be non-empty and space-free: '", name, "'");
    os << "tensor " << name << " " << detail::shape_token(t.shape()) << " "
       << offset << "\n";
    offset += t.size() * 8;
  }
  os << "payload " << offset << "\n";
  for (const auto& [name, t] : tensors) {
    for (double v : t.data()) detail::put_le64(os, std::bit_cast<std::uint64_t>(v));
  }
  check_config(os.good(), "checkpoint: short write to ", path);
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check_config(is.good(), "checkpoint: cannot open ", path);
  std::string line;
  std::getline(is, line);
  check_config(line == "ranklab-checkpoint 1", "checkpoint: bad magic in ", path);
  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  std::uint64_t payload_bytes = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "tensor") {
      Entry e;
      std::string shape_tok;
      ls >> e.name >> shape_tok >> e.offset;
      check_config(!ls.fail(), "checkpoint: malformed manifest line: ", line);
      e.shape = detail::parse_shape_token(shape_tok);
      entries.push_back(std::move(e));
    } else if (kind == "payload") {
      ls >> payload_bytes;
      check_config(!ls.fail(), "checkpoint: malformed payload line: ", line);
      break;
    } else {
      throw ConfigError(detail::concat("checkpoint: unexpected manifest line: ", line));
    }
  }
  std::vector<std::pair<std::string, Tensor>> out;
  std::uint64_t read_bytes = 0;
  for (const auto& e : entries) {
    std::vector<double> data(numel(e.shape));
    for (double& v : data) v = std::bit_cast<double>(detail::get_le64(is));
    read_bytes += data.size() * 8;
    out.emplace_back(e.name, Tensor(e.shape, std::move(data)));
  }
  check_config(read_bytes == payload_bytes && is.good(),
               "checkpoint: payload size mismatch in ", path, " (manifest says ",
               payload_bytes, ", read ", read_bytes, ")");
  return out;
}

} // namespace ranklab
