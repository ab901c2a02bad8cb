#include "foxp2/tensor_io.hpp"

#include "foxp2/hash.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace foxp2 {

namespace {

constexpr char kMagic[4] = {'F', '2', 'T', '1'};

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& s, std::int32_t v) {
  auto u = static_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& s;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > s.size()) throw PinError("truncated tensor stream");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::int32_t i32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 4;
    return static_cast<std::int32_t>(v);
  }
};

}  // namespace

std::string encode_tensors(const std::vector<TensorRecord>& records) {
  std::string s;
  for (const auto& r : records) {
    s.append(kMagic, 4);
    put_i32(s, r.header.layer);
    put_i32(s, r.header.step);
    put_i32(s, r.header.prompt_id);
    put_u64(s, static_cast<std::uint64_t>(r.data.rows()));
    put_u64(s, static_cast<std::uint64_t>(r.data.cols()));
    for (Eigen::Index i = 0; i < r.data.rows(); ++i)
      for (Eigen::Index j = 0; j < r.data.cols(); ++j) {
        std::uint64_t bits;
        double v = r.data(i, j);
        std::memcpy(&bits, &v, 8);
        put_u64(s, bits);
      }
  }
  return s;
}

std::vector<TensorRecord> decode_tensors(const std::string& bytes) {
  std::vector<TensorRecord> out;
  Reader rd{bytes};
  while (rd.pos < bytes.size()) {
    rd.need(4);
    if (std::memcmp(bytes.data() + rd.pos, kMagic, 4) != 0) throw PinError("bad tensor record magic");
    rd.pos += 4;
    TensorRecord r;
    r.header.layer = rd.i32();
    r.header.step = rd.i32();
    r.header.prompt_id = rd.i32();
    r.header.rows = rd.u64();
    r.header.cols = rd.u64();
    if (r.header.rows * r.header.cols > (bytes.size() - rd.pos) / 8) throw PinError("truncated tensor payload");
    r.data.resize(static_cast<Eigen::Index>(r.header.rows), static_cast<Eigen::Index>(r.header.cols));
    for (Eigen::Index i = 0; i < r.data.rows(); ++i)
      for (Eigen::Index j = 0; j < r.data.cols(); ++j) {
        std::uint64_t bits = rd.u64();
        double v;
        std::memcpy(&v, &bits, 8);
        r.data(i, j) = v;
      }
    out.push_back(std::move(r));
  }
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + p.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_pinned(const std::filesystem::path& p, const std::string& expected) {
  std::string bytes = read_file(p);
  std::string got = sha256_hex(bytes);
  if (got != expected) throw PinError(p.string() + ": expected " + expected + " got " + got);
  return bytes;
}

std::string dictionary_sha256(const Dictionary& D) {
  Mat b = D.b.transpose();
  return sha256_hex(encode_tensors({{TensorHeader{}, D.W}, {TensorHeader{}, b}}));
}

}  // namespace foxp2
