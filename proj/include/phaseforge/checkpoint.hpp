// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "phaseforge/tensor.hpp"

namespace phaseforge {

struct NamedTensor {
  std::string name;
  Tensor t;
};

/// PFCKPT container: "PFCKPT v1" header line, then an entry count followed by
/// per-entry framing of name length, name bytes, rank, dims, and row-major
/// little-endian 64-bit float data. Optimizer moments ride in the same
/// framing under names suffixed ".m"/".v".
void write_pfckpt(const std::string& path, const std::vector<NamedTensor>& entries);

/// Throws FormatError on a bad header or truncated payload; never partially
/// populates the result.
std::vector<NamedTensor> read_pfckpt(const std::string& path);

/// Convenience lookup; throws FormatError when the name is absent.
const NamedTensor& find_entry(const std::vector<NamedTensor>& entries, const std::string& name);
bool has_entry(const std::vector<NamedTensor>& entries, const std::string& name);

}  // namespace phaseforge
