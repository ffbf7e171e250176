#pragma once

// Contrastive and language-modelling objectives.

#include <optional>
#include <span>
#include <vector>

#include "sensia/batch.hpp"
#include "sensia/model.hpp"

namespace sensia {

struct LossWeights {
  double sns = 0.0;
  double ctx = 0.0;
  double lm = 0.0;
};

struct Temperatures {
  double sns = 0.05;
  double ctx = 0.07;
};

// How sentence-level sense embeddings pool token representations.
enum class SensePooling {
  kNormPooled,  // sum_k pi_{t,k} s_{t,k} with norm-based pi
  kContextual,  // the model's contextual mixture h_t
};

struct LossSettings {
  Temperatures temps;
  double tau_pool = 0.7;
  double label_smoothing = 0.05;
  SensePooling pooling = SensePooling::kNormPooled;
};

struct LossBreakdown {
  // A term is nullopt when its weight was exactly zero and it was skipped.
  std::optional<double> l_sns;
  std::optional<double> l_ctx;
  std::optional<double> l_lm;
  double l_total = 0.0;
  LossWeights weights_used;
  Temperatures temps_used;
  ad::Tensor total;  // differentiable l_total
};

// -(1/2B) sum_i [log p_ii + log p'_ii] for row-paired unit vectors.
// Throws InvalidBatch for B < 2 and PreconditionViolation for rows that are
// not unit norm within 1e-6.
ad::Tensor info_nce_symmetric(const ad::Tensor& u_src, const ad::Tensor& u_tgt, double tau);

// Per-sentence forward results shared by the three losses.
struct SentenceForward {
  std::size_t length = 0;
  std::vector<int> ids;
  ad::Tensor senses;   // {T, K, d}
  ad::Tensor context;  // T x d
  ad::Tensor mixture;  // T x d, only when requested
  ad::Tensor alpha;    // T x (T*K), with the mixture
  ad::Tensor logits;   // T x V, only when requested
  ad::Mask mask;
};

struct ForwardRequest {
  bool context = true;
  bool mixture = false;
  bool logits = false;
};

std::vector<SentenceForward> forward_sentences(const BackpackModel& model,
                                               const PaddedSequences& seqs,
                                               ForwardRequest request,
                                               const AlphaTransform& transform = nullptr);

// B x d, L2-normalized. DegenerateVector::index() names the sentence.
ad::Tensor sense_embeddings(const std::vector<SentenceForward>& sentences, double tau_pool,
                            SensePooling pooling = SensePooling::kNormPooled);
ad::Tensor context_embeddings(const std::vector<SentenceForward>& sentences);

ad::Tensor sense_loss(const TokenizedBatch& batch, const BackpackModel& model,
                      double tau_sns, double tau_pool,
                      SensePooling pooling = SensePooling::kNormPooled);
ad::Tensor context_loss(const TokenizedBatch& batch, const BackpackModel& model,
                        double tau_ctx);

// Mean over rows with mask != 0 of -sum_v q(v) log softmax(logits)(v), where
// q = (1 - epsilon) one_hot(target) + epsilon / |V|.
ad::Tensor lm_loss(const ad::Tensor& logits, std::span<const int> target_ids,
                   const ad::Mask& mask, double epsilon);

// Next-token LM loss over the target side of a batch.
ad::Tensor target_lm_loss(const std::vector<SentenceForward>& tgt, double epsilon);

// w_sns * l_sns + w_ctx * l_ctx + w_lm * l_lm on plain values.
double combine_losses(double l_sns, double l_ctx, double l_lm, const LossWeights& w);

LossBreakdown total_loss(const BackpackModel& model, const TokenizedBatch& batch,
                         const LossWeights& weights, const LossSettings& settings);

}  // namespace sensia
