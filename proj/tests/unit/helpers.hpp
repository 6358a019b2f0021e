#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dymen/corpus.hpp"
#include "dymen/tensor.hpp"
#include "oracle.hpp"

namespace testing_util {

using dymen::Tensor;

inline Tensor param_from(const oracle::Mat& m) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return Tensor::parameter({m.size(), m.empty() ? 0 : m[0].size()}, std::move(v));
}

inline Tensor const_from(const oracle::Mat& m) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return Tensor::constant({m.size(), m.empty() ? 0 : m[0].size()}, std::move(v));
}

inline oracle::Mat rows_of(const Tensor& t) {
  oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline oracle::Vec gaussian(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  oracle::Vec v(n);
  for (double& x : v) x = g(rng);
  return v;
}

inline oracle::Mat gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng,
                            double sd = 1.0) {
  oracle::Mat m;
  for (std::size_t i = 0; i < r; ++i) m.push_back(gaussian(c, rng, sd));
  return m;
}

/// Largest relative error between backward() and central differences for
/// every entry of every listed parameter.
inline double max_fd_error(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                           double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  dymen::backward(loss());
  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto v = p.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = loss().item();
      v[i] = keep - h;
      const double down = loss().item();
      v[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
    }
  }
  return worst;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dymen_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_util
