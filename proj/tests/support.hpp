#ifndef SEQMASKS_TESTS_SUPPORT_HPP_
#define SEQMASKS_TESTS_SUPPORT_HPP_

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <torch/torch.h>

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "seqmasks") {
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::filesystem::path path_;
};

/// Analytic gradient of a scalar function versus central differences, in double.
/// Returns ||analytic - numeric|| / max(||analytic||, ||numeric||, tiny).
inline double gradcheck_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                              const torch::Tensor& at, double h = 1e-6) {
  auto x = at.detach().to(torch::kFloat64).clone().requires_grad_(true);
  auto y = f(x);
  auto analytic = torch::autograd::grad({y}, {x}, {}, false, false, true)[0];
  if (!analytic.defined()) analytic = torch::zeros_like(x);
  auto flat = x.detach().clone();
  auto numeric = torch::zeros_like(flat);
  auto fp = flat.view({-1});
  auto np = numeric.view({-1});
  torch::NoGradGuard guard;
  for (int64_t i = 0; i < fp.numel(); ++i) {
    const double orig = fp[i].item<double>();
    fp[i] = orig + h;
    const double up = f(flat).item<double>();
    fp[i] = orig - h;
    const double down = f(flat).item<double>();
    fp[i] = orig;
    np[i] = (up - down) / (2 * h);
  }
  const double diff = (analytic.detach() - numeric).norm().item<double>();
  const double scale = std::max({analytic.norm().item<double>(), numeric.norm().item<double>(), 1e-12});
  return diff / scale;
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

}  // namespace testing_support

#endif  // SEQMASKS_TESTS_SUPPORT_HPP_
