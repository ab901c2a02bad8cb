#include "foxp2/hash.hpp"

#include "foxp2/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>

namespace foxp2 {

namespace {

void digest(std::string_view bytes, unsigned char* out, unsigned int* len) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out, len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  digest(bytes, md, &len);
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    s.push_back(hex[md[i] >> 4]);
    s.push_back(hex[md[i] & 15]);
  }
  return s;
}

std::string sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PinError("cannot open pinned file: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return sha256_hex(data);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t index) {
  std::string key = std::to_string(master) + "|" + std::string(stage) + "|" + std::to_string(index);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  digest(key, md, &len);
  std::uint64_t s = 0;
  for (int i = 0; i < 8; ++i) s = (s << 8) | md[i];
  return s;
}

std::string lang_name(Lang l) {
  switch (l) {
    case Lang::En: return "en";
    case Lang::Hi: return "hi";
    case Lang::Es: return "es";
  }
  return "?";
}

Lang lang_from_name(const std::string& s) {
  if (s == "en") return Lang::En;
  if (s == "hi") return Lang::Hi;
  if (s == "es") return Lang::Es;
  throw ConfigError("unknown language: " + s);
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  double pos = q * static_cast<double>(xs.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, xs.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

}  // namespace foxp2
