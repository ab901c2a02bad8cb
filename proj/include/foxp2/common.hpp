#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace foxp2 {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Lang : int { En = 0, Hi = 1, Es = 2 };
inline constexpr int kNumLangs = 3;

std::string lang_name(Lang l);
Lang lang_from_name(const std::string& s);

// Execution policy for the data-parallel kernels. Serial is the reference path.
enum class Exec { Serial, Parallel };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PinError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GuardrailInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContextOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// child seed = first 8 bytes of SHA-256("master|stage|index")
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t index = 0);

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view stage, std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(master, stage, index));
}

// Linear-interpolation quantile of an unsorted sample (q in [0,1]).
double quantile(std::vector<double> xs, double q);
double median(std::vector<double> xs);

}  // namespace foxp2
