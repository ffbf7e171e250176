#include "sensia/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sensia/errors.hpp"
#include "sensia/trainer.hpp"

namespace sensia {

MixtureMode MixtureMode::parse(const std::string& text) {
  if (text == "full") return full();
  if (text == "uniform") return uniform();
  if (text.size() > 3 && text.compare(0, 3, "top") == 0) {
    const std::string digits = text.substr(3);
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      const std::size_t k = std::stoul(digits);
      if (k >= 1) return topk(k);
    }
  }
  throw InvalidArgument("unknown mixture mode '" + text + "'");
}

std::string MixtureMode::name() const {
  switch (kind) {
    case Kind::kFull:
      return "full";
    case Kind::kUniform:
      return "uniform";
    case Kind::kTopK:
      return "top" + std::to_string(k);
  }
  return "full";
}

std::vector<double> override_mixture(std::span<const double> pi, const MixtureMode& mode) {
  const std::size_t K = pi.size();
  if (K == 0) throw PreconditionViolation("mixture distribution is empty");
  double total = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw PreconditionViolation("mixture weights must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw PreconditionViolation("mixture weights must sum to 1");

  std::vector<double> out(pi.begin(), pi.end());
  switch (mode.kind) {
    case MixtureMode::Kind::kFull:
      break;
    case MixtureMode::Kind::kUniform:
      std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(K));
      break;
    case MixtureMode::Kind::kTopK: {
      if (mode.k < 1 || mode.k > K) throw InvalidArgument("top-k needs 1 <= k <= K");
      std::vector<std::size_t> order(K);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return pi[a] > pi[b]; });
      double kept = 0.0;
      for (std::size_t i = 0; i < mode.k; ++i) kept += pi[order[i]];
      std::fill(out.begin(), out.end(), 0.0);
      for (std::size_t i = 0; i < mode.k; ++i) {
        out[order[i]] = kept > 0.0 ? pi[order[i]] / kept : 1.0 / static_cast<double>(mode.k);
      }
      break;
    }
  }
  return out;
}

AlphaTransform mixture_override_transform(const MixtureMode& mode) {
  return [mode](const ad::Tensor& alpha, std::size_t T, std::size_t K) {
    std::vector<double> rebuilt(T * T * K, 0.0);
    std::vector<double> pi(K);
    for (std::size_t t = 0; t < T; ++t) {
      double row_total = 0.0;
      for (std::size_t j = 0; j < T; ++j) {
        double m = 0.0;
        for (std::size_t k = 0; k < K; ++k) m += alpha.at(t, j * K + k);
        if (m <= 0.0) continue;
        for (std::size_t k = 0; k < K; ++k) pi[k] = alpha.at(t, j * K + k) / m;
        // Renormalize against rounding before the validity check.
        const double s = std::accumulate(pi.begin(), pi.end(), 0.0);
        for (double& p : pi) p /= s;
        const std::vector<double> replaced = override_mixture(pi, mode);
        for (std::size_t k = 0; k < K; ++k) {
          rebuilt[t * T * K + j * K + k] = m * replaced[k];
          row_total += m * replaced[k];
        }
      }
      if (row_total > 0.0) {
        for (std::size_t c = 0; c < T * K; ++c) rebuilt[t * T * K + c] /= row_total;
      }
    }
    return ad::Tensor::from({T, T * K}, std::move(rebuilt));
  };
}

CrossEntropyResult cross_entropy_eval(const BackpackModel& model,
                                      const std::vector<TokenizedPair>& eval_pairs,
                                      const MixtureMode& mode, int pad_id) {
  if (eval_pairs.empty()) throw InvalidArgument("cross-entropy evaluation needs pairs");
  ad::NoGradGuard no_grad;
  std::vector<std::vector<int>> rows;
  rows.reserve(eval_pairs.size());
  for (const TokenizedPair& p : eval_pairs) rows.push_back(p.tgt);
  const PaddedSequences tgt = pad_sequences(rows, pad_id);
  const AlphaTransform transform =
      mode.kind == MixtureMode::Kind::kFull ? AlphaTransform{} : mixture_override_transform(mode);
  const auto forwards =
      forward_sentences(model, tgt, {.context = true, .mixture = true, .logits = true}, transform);
  const NllTotals nll = next_token_nll(forwards);
  if (nll.count == 0) throw InvalidArgument("evaluation set has no next-token targets");
  return {nll.sum / static_cast<double>(nll.count), nll.count};
}

ScheduleConfig ablation_switches(const std::vector<std::string>& variants, ScheduleConfig base) {
  bool phase_set = false;
  for (const std::string& v : variants) {
    if (v == "full") continue;
    if (v == "no-sns") {
      base.zero_sns = true;
    } else if (v == "no-ctx") {
      base.zero_ctx = true;
    } else if (v == "no-lm") {
      base.zero_lm = true;
    } else if (v == "no-align" || v == "no-joint" || v == "no-polish") {
      const PhaseSkip skip = v == "no-align"   ? PhaseSkip::kNoAlignment
                             : v == "no-joint" ? PhaseSkip::kNoJoint
                                               : PhaseSkip::kNoPolish;
      if (phase_set && base.skip != skip) {
        throw InvalidArgument("ablation: at most one phase may be skipped");
      }
      phase_set = true;
      base.skip = skip;
    } else {
      throw InvalidArgument("ablation: unknown variant '" + v + "'");
    }
  }
  if (base.zero_sns && base.zero_ctx && base.zero_lm) {
    throw InvalidArgument("ablation: zeroing every loss leaves nothing to train");
  }
  base.validate();
  return base;
}

}  // namespace sensia
