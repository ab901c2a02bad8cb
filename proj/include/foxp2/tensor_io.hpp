#pragma once

#include "foxp2/common.hpp"
#include "foxp2/dictionary.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace foxp2 {

// Record header of the trace format: float64 little-endian, row-major payload follows.
struct TensorHeader {
  std::int32_t layer = 0;
  std::int32_t step = 0;
  std::int32_t prompt_id = -1;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
};

struct TensorRecord {
  TensorHeader header;
  Mat data;
};

std::string encode_tensors(const std::vector<TensorRecord>& records);
std::vector<TensorRecord> decode_tensors(const std::string& bytes);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& bytes);
// Reads a file and throws PinError if its SHA-256 differs from `expected`.
std::string read_pinned(const std::filesystem::path& p, const std::string& expected);

// Hash of the encoded (W, b) tensors.
std::string dictionary_sha256(const Dictionary& D);

}  // namespace foxp2
