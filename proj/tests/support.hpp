#pragma once

// Shared test helpers: finite-difference oracle, random data, temp dirs.

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sensia/model.hpp"
#include "sensia/rng.hpp"
#include "sensia/tensor.hpp"

namespace sensia::testing {

inline ad::Tensor random_tensor(ad::Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0,
                                bool requires_grad = true) {
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return ad::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Redraws every parameter from U[-0.5, 0.5]. A freshly initialized model has
// many gradients near 1e-9, where central differences only measure round-off.
inline void randomize_parameters(BackpackModel& model, std::uint64_t seed) {
  Rng rng(seed, Stream::kInit);
  for (auto& p : model.parameters()) {
    for (double& v : p.tensor.mutable_values()) v = rng.uniform(-0.5, 0.5);
  }
}

struct GradCheck {
  std::size_t checked = 0;
  double worst = 0.0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Compares backward() of f against central differences with step h on the
// listed (tensor, flat index) coordinates.
inline GradCheck finite_difference_check(const std::function<ad::Tensor()>& f,
                                         std::vector<ad::Tensor> leaves,
                                         const std::vector<std::pair<std::size_t, std::size_t>>& coords,
                                         double h = 1e-5) {
  for (auto& leaf : leaves) leaf.zero_grad();
  f().backward();
  GradCheck out;
  for (const auto& [which, idx] : coords) {
    ad::Tensor& t = leaves[which];
    const double analytic = t.grad().empty() ? 0.0 : t.grad()[idx];
    const double saved = t.values()[idx];
    double plus, minus;
    {
      ad::NoGradGuard guard;
      t.mutable_values()[idx] = saved + h;
      plus = f().item();
      t.mutable_values()[idx] = saved - h;
      minus = f().item();
      t.mutable_values()[idx] = saved;
    }
    const double numeric = (plus - minus) / (2.0 * h);
    out.worst = std::max(out.worst, relative_error(analytic, numeric));
    ++out.checked;
  }
  return out;
}

// Every coordinate of every leaf.
inline std::vector<std::pair<std::size_t, std::size_t>> all_coords(const std::vector<ad::Tensor>& leaves) {
  std::vector<std::pair<std::size_t, std::size_t>> c;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = 0; j < leaves[i].size(); ++j) c.emplace_back(i, j);
  }
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("sensia-test-" + tag + "-" + std::to_string(std::hash<std::string>{}(tag) ^
                                                         reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace sensia::testing
