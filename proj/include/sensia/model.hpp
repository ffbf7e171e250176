#pragma once

// Sense-decomposed causal language model.
//
// Each token embedding x_t is projected through K matrices E_k into sense
// vectors s_{t,k} = x_t E_k. A causal transformer over the embeddings
// produces contextual states c_t; a weight head turns those into a
// distribution alpha_t over every (position j <= t, sense k) pair, and the
// mixture h_t = sum_{j,k} alpha_{t,j,k} s_{j,k} feeds the output head
// directly (log-linear in the senses).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sensia/ops.hpp"
#include "sensia/tensor.hpp"

namespace sensia {

struct ModelConfig {
  std::size_t vocab_size = 512;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t n_senses = 4;
  std::size_t max_positions = 64;
  bool tie_output = true;

  // Throws InvalidArgument describing the first violated constraint.
  void validate() const;
  // Width of each sense's query/key in the weight head.
  std::size_t weight_head_dim() const;
};

// Which freezing group a parameter belongs to.
enum class ParamGroup {
  kTokenEmbedding,
  kSenseProjection,
  kContextNet,
  kWeightHead,
  kOutputHead,
};

struct Parameter {
  std::string name;
  ParamGroup group;
  ad::Tensor tensor;
};

// Sense vectors are stored row-major as (T*K) x d with row t*K + k.
// alpha is T x (T*K) with column j*K + k, so h = alpha * senses.
struct SenseDecomposition {
  std::size_t length = 0;
  std::size_t n_senses = 0;
  ad::Tensor senses;
  ad::Tensor alpha;
  ad::Tensor mixture;
  ad::Tensor context;

  double alpha_at(std::size_t t, std::size_t j, std::size_t k) const {
    return alpha.at(t, j * n_senses + k);
  }
};

struct LmOutput {
  ad::Tensor logits;  // T x vocab; row t predicts token t + 1
  SenseDecomposition decomposition;
};

// Rewrites a T x (T*K) alpha before mixing; used by inference-time ablations.
using AlphaTransform =
    std::function<ad::Tensor(const ad::Tensor& alpha, std::size_t length,
                             std::size_t n_senses)>;

class BackpackModel {
 public:
  BackpackModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  // s with shape {T, K, d}.
  ad::Tensor sense_vectors(std::span<const int> ids) const;

  // c_t for every position (T x d), after the final layer norm.
  ad::Tensor context_states(std::span<const int> ids,
                            const ad::Mask& pad_mask) const;

  SenseDecomposition contextual_mixture(
      std::span<const int> ids, const ad::Mask& pad_mask,
      const AlphaTransform& transform = nullptr) const;

  LmOutput forward_lm(std::span<const int> ids, const ad::Mask& pad_mask,
                      const AlphaTransform& transform = nullptr) const;

  // Logits for an already formed mixture (T x d).
  ad::Tensor output_logits(const ad::Tensor& mixture) const;

  bool output_tied() const { return config_.tie_output; }
  // Gives the output head its own copy of the embedding values.
  void untie_output_head();

  // Deep copy with independent parameter storage.
  BackpackModel clone() const;

 private:
  BackpackModel() = default;
  friend class CheckpointReader;

  void add_param(std::string name, ParamGroup group, ad::Shape shape);
  const ad::Tensor& param(const std::string& name) const;
  ad::Tensor transformer_block(const ad::Tensor& x, std::size_t layer,
                               const ad::Mask& pad_mask) const;

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<Parameter> params_;
};

// Norm-based sense weights: pi_{t,.} = softmax_k(||s_{t,k}|| / tau_pool).
// `senses` is the {T, K, d} tensor from sense_vectors; result is T x K.
ad::Tensor norm_pool_weights(const ad::Tensor& senses, double tau_pool);

// All-ones pad mask of length n.
ad::Mask full_mask(std::size_t n);

}  // namespace sensia
