#include "sensia/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sensia/errors.hpp"

namespace sensia {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw InvalidArgument(std::string(what) + ": non-finite input");
    }
  }
}

// Softmax of one row into `out`; masked entries get 0.
void softmax_row(const double* in, double* out, std::size_t n, double tau,
                 const std::uint8_t* mask) {
  double max_v = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask || mask[j]) max_v = std::max(max_v, in[j] / tau);
  }
  if (max_v == -std::numeric_limits<double>::infinity()) {
    std::fill(out, out + n, 0.0);
    return;
  }
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask || mask[j]) {
      out[j] = std::exp(in[j] / tau - max_v);
      total += out[j];
    } else {
      out[j] = 0.0;
    }
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= total;
}

}  // namespace

std::vector<double> softmax(std::span<const double> v, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("softmax: tau must be positive");
  check_finite(v, "softmax");
  std::vector<double> out(v.size());
  softmax_row(v.data(), out.data(), v.size(), tau, nullptr);
  return out;
}

std::vector<double> l2_normalize(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > kEpsilonNorm)) {
    throw DegenerateVector("l2_normalize: norm below epsilon");
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

namespace ad {

namespace {

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Returns the parent's gradient buffer, or nullptr when it needs none.
double* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() == b.size() && a.rows() == b.rows()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  throw InvalidArgument(std::string(op) + ": incompatible shapes");
}

std::size_t broadcast_index(Broadcast mode, std::size_t r, std::size_t c,
                            std::size_t cols) {
  switch (mode) {
    case Broadcast::kSame:
      return r * cols + c;
    case Broadcast::kRow:
      return c;
    case Broadcast::kCol:
      return r;
    case Broadcast::kScalar:
      return 0;
  }
  return 0;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw InvalidArgument("matmul: inner dimensions differ");
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return make_node(matrix_shape(m, n), std::move(out), {a, b},
                   [m, k, n](Node& self) {
                     const double* g = self.grad.data();
                     const double* av = parent(self, 0).value.data();
                     const double* bv = parent(self, 1).value.data();
                     if (double* ga = grad_of(self, 0)) {
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t p = 0; p < k; ++p) {
                           double acc = 0.0;
                           const double* brow = bv + p * n;
                           const double* grow = g + i * n;
                           for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                           ga[i * k + p] += acc;
                         }
                       }
                     }
                     if (double* gb = grad_of(self, 1)) {
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* grow = g + i * n;
                         for (std::size_t p = 0; p < k; ++p) {
                           const double x = av[i * k + p];
                           double* gbrow = gb + p * n;
                           for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
                         }
                       }
                     }
                   });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) throw InvalidArgument("matmul_nt: inner dimensions differ");
  std::vector<double> out(m * n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  }
  return make_node(matrix_shape(m, n), std::move(out), {a, b},
                   [m, k, n](Node& self) {
                     const double* g = self.grad.data();
                     const double* av = parent(self, 0).value.data();
                     const double* bv = parent(self, 1).value.data();
                     if (double* ga = grad_of(self, 0)) {
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           const double gij = g[i * n + j];
                           for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
                         }
                       }
                     }
                     if (double* gb = grad_of(self, 1)) {
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           const double gij = g[i * n + j];
                           for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
                         }
                       }
                     }
                   });
}

namespace {

Tensor elementwise_add(const Tensor& a, const Tensor& b, double sign) {
  const Broadcast mode = broadcast_mode(a, b, "add");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] += sign * bv[broadcast_index(mode, i, j, c)];
    }
  }
  return make_node(a.shape(), std::move(out), {a, b},
                   [mode, r, c, sign](Node& self) {
                     const double* g = self.grad.data();
                     if (double* ga = grad_of(self, 0)) {
                       for (std::size_t i = 0; i < r * c; ++i) ga[i] += g[i];
                     }
                     if (double* gb = grad_of(self, 1)) {
                       for (std::size_t i = 0; i < r; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           gb[broadcast_index(mode, i, j, c)] += sign * g[i * c + j];
                         }
                       }
                     }
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_add(a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_add(a, b, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast mode = broadcast_mode(a, b, "mul");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = av[i * c + j] * bv[broadcast_index(mode, i, j, c)];
    }
  }
  return make_node(a.shape(), std::move(out), {a, b}, [mode, r, c](Node& self) {
    const double* g = self.grad.data();
    const double* av = parent(self, 0).value.data();
    const double* bv = parent(self, 1).value.data();
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t bi = broadcast_index(mode, i, j, c);
        if (ga) ga[i * c + j] += g[i * c + j] * bv[bi];
        if (gb) gb[bi] += g[i * c + j] * av[i * c + j];
      }
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& x : out) x *= factor;
  return make_node(a.shape(), std::move(out), {a}, [factor](Node& self) {
    if (double* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += factor * self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double x : a.values()) total += x;
  return make_node({}, {total}, {a}, [](Node& self) {
    if (double* ga = grad_of(self, 0)) {
      const std::size_t n = parent(self, 0).value.size();
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw InvalidArgument("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor softmax_rows(const Tensor& a, double tau, const Mask* mask) {
  if (!(tau > 0.0)) throw InvalidArgument("softmax: tau must be positive");
  check_finite(a.values(), "softmax");
  if (mask && mask->size() != a.size()) {
    throw InvalidArgument("softmax: mask size mismatch");
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    softmax_row(a.values().data() + i * c, out.data() + i * c, c, tau,
                mask ? mask->data() + i * c : nullptr);
  }
  return make_node(a.shape(), std::move(out), {a}, [r, c, tau](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * g[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot) / tau;
      }
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  check_finite(a.values(), "log_softmax");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  const double* av = a.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    double max_v = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) max_v = std::max(max_v, av[i * c + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(av[i * c + j] - max_v);
    const double lse = max_v + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] - lse;
  }
  return make_node(a.shape(), std::move(out), {a}, [r, c](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += g[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        ga[i * c + j] += g[i * c + j] - std::exp(y[i * c + j]) * gsum;
      }
    }
  });
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gamma,
                       const Tensor& beta, double eps) {
  const std::size_t r = a.rows(), c = a.cols();
  if (gamma.size() != c || beta.size() != c) {
    throw InvalidArgument("layer_norm: parameter width mismatch");
  }
  std::vector<double> out(a.size());
  std::vector<double> xhat(a.size());
  std::vector<double> rstd(r);
  const double* av = a.values().data();
  const double* gv = gamma.values().data();
  const double* bv = beta.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += av[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = av[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (av[i * c + j] - mu) * rstd[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return make_node(
      a.shape(), std::move(out), {a, gamma, beta},
      [r, c, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const double* g = self.grad.data();
        const double* gv = parent(self, 1).value.data();
        double* ga = grad_of(self, 0);
        double* ggamma = grad_of(self, 1);
        double* gbeta = grad_of(self, 2);
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double gij = g[i * c + j];
            if (ggamma) ggamma[j] += gij * xhat[i * c + j];
            if (gbeta) gbeta[j] += gij;
            const double dxhat = gij * gv[j];
            mean_d += dxhat;
            mean_dx += dxhat * xhat[i * c + j];
          }
          if (!ga) continue;
          mean_d *= inv_c;
          mean_dx *= inv_c;
          for (std::size_t j = 0; j < c; ++j) {
            const double dxhat = g[i * c + j] * gv[j];
            ga[i * c + j] += rstd[i] * (dxhat - mean_d - xhat[i * c + j] * mean_dx);
          }
        }
      });
}

Tensor gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(a.size());
  const double* av = a.values().data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
  }
  return make_node(a.shape(), std::move(out), {a}, [](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double* av = parent(self, 0).value.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = av[i];
      const double t = std::tanh(kC * (x + kA * x * x * x));
      const double d = 0.5 * (1.0 + t) +
                       0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
      ga[i] += self.grad[i] * d;
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  const std::size_t vocab = table.rows(), c = table.cols();
  std::vector<double> out(ids.size() * c);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw InvalidToken("token id " + std::to_string(ids[i]) +
                         " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(table.values().data() + ids[i] * c, c, out.data() + i * c);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return make_node(matrix_shape(ids.size(), c), std::move(out), {table},
                   [saved = std::move(saved), c](Node& self) {
                     double* gt = grad_of(self, 0);
                     if (!gt) return;
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       double* row = gt + saved[i] * c;
                       for (std::size_t j = 0; j < c; ++j) row[j] += self.grad[i * c + j];
                     }
                   });
}

Tensor row_norms(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r);
  const double* av = a.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < c; ++j) sq += av[i * c + j] * av[i * c + j];
    out[i] = std::sqrt(sq);
  }
  return make_node(matrix_shape(r, 1), std::move(out), {a}, [r, c](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double* av = parent(self, 0).value.data();
    for (std::size_t i = 0; i < r; ++i) {
      const double n = self.value[i];
      if (n <= 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[i] * av[i * c + j] / n;
    }
  });
}

Tensor l2_normalize_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> norms(r);
  const double* av = a.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < c; ++j) sq += av[i * c + j] * av[i * c + j];
    norms[i] = std::sqrt(sq);
    if (!(norms[i] > kEpsilonNorm)) {
      throw DegenerateVector("row " + std::to_string(i) + " has near-zero norm", i);
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] / norms[i];
  }
  return make_node(a.shape(), std::move(out), {a},
                   [r, c, norms = std::move(norms)](Node& self) {
                     double* ga = grad_of(self, 0);
                     if (!ga) return;
                     const double* y = self.value.data();
                     const double* g = self.grad.data();
                     for (std::size_t i = 0; i < r; ++i) {
                       double dot = 0.0;
                       for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * g[i * c + j];
                       for (std::size_t j = 0; j < c; ++j) {
                         ga[i * c + j] += (g[i * c + j] - y[i * c + j] * dot) / norms[i];
                       }
                     }
                   });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  return matmul_nt(l2_normalize_rows(a), l2_normalize_rows(b));
}

Tensor masked_mean_rows(const Tensor& a, const Mask& mask) {
  const std::size_t r = a.rows(), c = a.cols();
  if (mask.size() != r) throw InvalidArgument("masked_mean: mask size mismatch");
  const auto count = static_cast<double>(std::count_if(
      mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
  if (count == 0.0) throw EmptySequence("masked_mean: no unmasked rows");
  std::vector<double> out(c, 0.0);
  const double* av = a.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
  }
  for (double& x : out) x /= count;
  return make_node(matrix_shape(1, c), std::move(out), {a},
                   [mask, r, c, count](Node& self) {
                     double* ga = grad_of(self, 0);
                     if (!ga) return;
                     for (std::size_t i = 0; i < r; ++i) {
                       if (!mask[i]) continue;
                       for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j] / count;
                     }
                   });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t r = a.rows(), c = a.cols();
  if (index.size() != r) throw InvalidArgument("pick: one index per row required");
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (index[i] >= c) throw InvalidArgument("pick: column out of range");
    out[i] = a.values()[i * c + index[i]];
  }
  std::vector<std::size_t> saved(index.begin(), index.end());
  return make_node(matrix_shape(r, 1), std::move(out), {a},
                   [saved = std::move(saved), c](Node& self) {
                     double* ga = grad_of(self, 0);
                     if (!ga) return;
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       ga[i * c + saved[i]] += self.grad[i];
                     }
                   });
}

Tensor gather_cols(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t r = a.rows(), c = a.cols(), n = index.size();
  std::vector<double> out(r * n);
  for (std::size_t j = 0; j < n; ++j) {
    if (index[j] >= c) throw InvalidArgument("gather_cols: column out of range");
  }
  const double* av = a.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * c + index[j]];
  }
  std::vector<std::size_t> saved(index.begin(), index.end());
  return make_node(matrix_shape(r, n), std::move(out), {a},
                   [saved = std::move(saved), r, c](Node& self) {
                     double* ga = grad_of(self, 0);
                     if (!ga) return;
                     const std::size_t n = saved.size();
                     for (std::size_t i = 0; i < r; ++i) {
                       for (std::size_t j = 0; j < n; ++j) {
                         ga[i * c + saved[j]] += self.grad[i * n + j];
                       }
                     }
                   });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t c = a.cols();
  if (begin + count > a.rows()) throw InvalidArgument("slice_rows: out of range");
  std::vector<double> out(a.values().begin() + begin * c,
                          a.values().begin() + (begin + count) * c);
  return make_node(matrix_shape(count, c), std::move(out), {a},
                   [begin, c](Node& self) {
                     double* ga = grad_of(self, 0);
                     if (!ga) return;
                     for (std::size_t i = 0; i < self.grad.size(); ++i) {
                       ga[begin * c + i] += self.grad[i];
                     }
                   });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t r = a.rows(), c = a.cols();
  if (begin + count > c) throw InvalidArgument("slice_cols: out of range");
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.values().data() + i * c + begin, count, out.data() + i * count);
  }
  return make_node(matrix_shape(r, count), std::move(out), {a},
                   [r, c, begin, count](Node& self) {
                     double* ga = grad_of(self, 0);
                     if (!ga) return;
                     for (std::size_t i = 0; i < r; ++i) {
                       for (std::size_t j = 0; j < count; ++j) {
                         ga[i * c + begin + j] += self.grad[i * count + j];
                       }
                     }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: nothing to concatenate");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != c) throw InvalidArgument("concat_rows: column mismatch");
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_node(matrix_shape(total, c), std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t n = self.parents[k]->value.size();
      if (double* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: nothing to concatenate");
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    if (p.rows() != r) throw InvalidArgument("concat_cols: row mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(p.values().data() + i * w, w, out.data() + i * total + offset);
    }
    offset += w;
  }
  return make_node(matrix_shape(r, total), std::move(out), parts,
                   [r, total, widths = std::move(widths)](Node& self) {
                     std::size_t offset = 0;
                     for (std::size_t k = 0; k < widths.size(); ++k) {
                       const std::size_t w = widths[k];
                       if (double* g = grad_of(self, k)) {
                         for (std::size_t i = 0; i < r; ++i) {
                           for (std::size_t j = 0; j < w; ++j) {
                             g[i * w + j] += self.grad[i * total + offset + j];
                           }
                         }
                       }
                       offset += w;
                     }
                   });
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
  }
  return make_node(matrix_shape(c, r), std::move(out), {a}, [r, c](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) throw InvalidArgument("reshape: size mismatch");
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_node(std::move(shape), std::move(out), {a}, [](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

}  // namespace ad
}  // namespace sensia
