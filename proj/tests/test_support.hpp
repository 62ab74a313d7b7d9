#pragma once
// Shared test helpers: finite-difference gradient checking against the
// reverse-mode engine, random tensor construction, and scratch directories.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "avret/tensor.hpp"

namespace testutil {

inline avret::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                   double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return avret::Tensor::from_data(rows, cols, std::move(v));
}

inline avret::Tensor random_parameter(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                      double scale = 1.0) {
  return avret::Tensor::parameter(random_tensor(rows, cols, rng, scale));
}

// Central differences with h = 1e-4 against the analytic gradient of a
// scalar-valued function of one parameter. Relative error uses
// max(|analytic|, |numeric|, 0.1) in the denominator so near-zero gradients
// are compared absolutely.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
};

inline GradCheckResult grad_check(
    avret::Tensor& param, const std::function<avret::Tensor(const avret::Tensor&)>& f,
    double h = 1e-4) {
  param.zero_grad();
  avret::Tensor loss = f(param);
  avret::backward(loss);
  std::vector<double> analytic = param.grad();

  GradCheckResult res;
  std::vector<double> base = param.data();
  for (std::size_t p = 0; p < base.size(); ++p) {
    std::vector<double> plus = base, minus = base;
    plus[p] += h;
    minus[p] -= h;
    avret::Tensor tp = avret::Tensor::parameter(param.rows(), param.cols(), plus);
    avret::Tensor tm = avret::Tensor::parameter(param.rows(), param.cols(), minus);
    double fd = (f(tp).scalar() - f(tm).scalar()) / (2.0 * h);
    double denom = std::max({std::fabs(analytic[p]), std::fabs(fd), 0.1});
    double rel = std::fabs(analytic[p] - fd) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = p;
    }
  }
  return res;
}

// Fresh scratch directory under the system temp root, unique per call.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("avret_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter.fetch_add(1)));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
