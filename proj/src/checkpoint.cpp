// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace phaseforge {

namespace {

void wr_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8),
                        (unsigned char)(v >> 16), (unsigned char)(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void wr_u64(std::ofstream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 8);
}

uint32_t rd_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t rd_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_pfckpt(const std::string& path, const std::vector<NamedTensor>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << "PFCKPT v1\n";
  wr_u64(out, entries.size());
  for (const auto& e : entries) {
    wr_u32(out, uint32_t(e.name.size()));
    out.write(e.name.data(), std::streamsize(e.name.size()));
    wr_u32(out, uint32_t(e.t.rank()));
    for (int i = 0; i < e.t.rank(); ++i) wr_u64(out, uint64_t(e.t.dim(i)));
    out.write(reinterpret_cast<const char*>(e.t.data()),
              std::streamsize(e.t.numel() * sizeof(double)));
  }
  if (!out) throw FormatError("write failed for " + path);
}

std::vector<NamedTensor> read_pfckpt(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header) || header != "PFCKPT v1")
    throw FormatError(path + ": bad PFCKPT header");
  uint64_t count = rd_u64(in);
  if (!in) throw FormatError(path + ": truncated entry count");
  if (count > (1ULL << 32)) throw FormatError(path + ": implausible entry count");
  std::vector<NamedTensor> entries;
  entries.reserve(size_t(count));
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t name_len = rd_u32(in);
    if (!in || name_len > (1u << 20)) throw FormatError(path + ": bad entry name length");
    std::string name(name_len, '\0');
    in.read(name.data(), std::streamsize(name_len));
    uint32_t rank = rd_u32(in);
    if (!in || rank > 8) throw FormatError(path + ": bad entry rank");
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = int64_t(rd_u64(in));
    int64_t numel = shape_numel(shape);
    if (!in || numel < 0 || numel > (int64_t(1) << 34))
      throw FormatError(path + ": implausible entry size");
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data()), std::streamsize(numel * sizeof(double)));
    if (!in) throw FormatError(path + ": truncated payload for " + name);
    entries.push_back({std::move(name), std::move(t)});
  }
  return entries;
}

const NamedTensor& find_entry(const std::vector<NamedTensor>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw FormatError("checkpoint entry missing: " + name);
}

bool has_entry(const std::vector<NamedTensor>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return true;
  return false;
}

}  // namespace phaseforge
