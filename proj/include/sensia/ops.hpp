#pragma once

// Differentiable primitives. Every operation treats its inputs through the
// matrix view of Tensor (rows x cols) unless stated otherwise.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sensia/tensor.hpp"

namespace sensia {

// Norms below this are treated as degenerate by every normalization.
inline constexpr double kEpsilonNorm = 1e-8;

// Plain-vector forms used outside the graph.
std::vector<double> softmax(std::span<const double> v, double tau = 1.0);
std::vector<double> l2_normalize(std::span<const double> v);

namespace ad {

using Mask = std::vector<std::uint8_t>;

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Elementwise, with broadcasting of `b` when it is a single row (1 x cols) or
// a single column (rows x 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Row-wise softmax of a / tau. Entries whose mask byte is 0 receive exactly
// zero probability; a fully masked row yields all zeros.
Tensor softmax_rows(const Tensor& a, double tau = 1.0,
                    const Mask* mask = nullptr);
Tensor log_softmax_rows(const Tensor& a);

Tensor layer_norm_rows(const Tensor& a, const Tensor& gamma,
                       const Tensor& beta, double eps = 1e-5);
// tanh approximation, as in GPT-2.
Tensor gelu(const Tensor& a);

// Gathers rows of `table`.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// rows x 1 column of row norms.
Tensor row_norms(const Tensor& a);
// Throws DegenerateVector naming the first row whose norm is <= kEpsilonNorm.
Tensor l2_normalize_rows(const Tensor& a);
// Cosine similarity of every row of a with every row of b.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// Mean over the rows whose mask byte is non-zero; 1 x cols.
Tensor masked_mean_rows(const Tensor& a, const Mask& mask);

// Picks a[i, index[i]] for every row; rows x 1.
Tensor pick(const Tensor& a, std::span<const std::size_t> index);

// out[:, i] = a[:, index[i]]; columns may repeat.
Tensor gather_cols(const Tensor& a, std::span<const std::size_t> index);

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

}  // namespace ad
}  // namespace sensia
