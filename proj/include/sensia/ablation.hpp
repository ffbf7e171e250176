#pragma once

// Inference-time sense-mixture overrides and loss/phase ablation variants.

#include <string>
#include <vector>

#include "sensia/corpus.hpp"
#include "sensia/model.hpp"
#include "sensia/schedule.hpp"

namespace sensia {

struct MixtureMode {
  enum class Kind { kFull, kTopK, kUniform };
  Kind kind = Kind::kFull;
  std::size_t k = 1;

  static MixtureMode full() { return {Kind::kFull, 0}; }
  static MixtureMode topk(std::size_t k) { return {Kind::kTopK, k}; }
  static MixtureMode uniform() { return {Kind::kUniform, 0}; }

  // "full", "uniform", "top1", "top2", ...
  static MixtureMode parse(const std::string& text);
  std::string name() const;
};

// Rewrites a K-distribution. Throws PreconditionViolation when `pi` is not a
// distribution (negative entry or sum off by more than 1e-9), InvalidArgument
// when topk's k is outside [1, K]. Top-k ties keep the lower index.
std::vector<double> override_mixture(std::span<const double> pi, const MixtureMode& mode);

// Factors alpha[t, j*K + k] as m[t, j] * pi[t, j, k], overrides each pi and
// rebuilds alpha. Rows of the result are renormalized to sum to one. The
// returned tensor carries no gradient history.
AlphaTransform mixture_override_transform(const MixtureMode& mode);

struct CrossEntropyResult {
  double ce = 0.0;
  std::size_t tokens = 0;
};

// Mean next-token cross-entropy on the target side of `eval_pairs` with the
// mixture rewritten per `mode`. Full mode performs the same computation as
// the trainer's evaluation.
CrossEntropyResult cross_entropy_eval(const BackpackModel& model,
                                      const std::vector<TokenizedPair>& eval_pairs,
                                      const MixtureMode& mode, int pad_id);

// Variant names: full, no-sns, no-ctx, no-lm, no-align, no-joint, no-polish.
// Loss variants combine; at most one phase variant is allowed, and zeroing
// every loss is rejected.
ScheduleConfig ablation_switches(const std::vector<std::string>& variants,
                                 ScheduleConfig base = {});

}  // namespace sensia
