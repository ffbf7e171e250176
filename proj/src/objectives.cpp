#include "sensia/objectives.hpp"

#include <cmath>
#include <numeric>

#include "sensia/errors.hpp"

namespace sensia {

using ad::Tensor;

PaddedSequences pad_sequences(const std::vector<std::vector<int>>& rows, int pad_id) {
  PaddedSequences out;
  out.count = rows.size();
  for (const auto& r : rows) {
    if (r.empty()) throw EmptySequence("cannot pad an empty sequence");
    out.length = std::max(out.length, r.size());
  }
  out.ids.assign(out.count * out.length, pad_id);
  out.mask.assign(out.count * out.length, 0);
  out.last_index.resize(out.count);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t t = 0; t < rows[i].size(); ++t) {
      out.ids[i * out.length + t] = rows[i][t];
      out.mask[i * out.length + t] = 1;
    }
    out.last_index[i] = rows[i].size() - 1;
  }
  return out;
}

Tensor info_nce_symmetric(const Tensor& u_src, const Tensor& u_tgt, double tau) {
  const std::size_t B = u_src.rows();
  if (B < 2) throw InvalidBatch("InfoNCE needs at least two pairs per batch");
  if (u_tgt.rows() != B || u_tgt.cols() != u_src.cols()) {
    throw InvalidBatch("InfoNCE source and target batches differ in shape");
  }
  if (!(tau > 0.0)) throw InvalidArgument("InfoNCE temperature must be positive");
  for (const Tensor* u : {&u_src, &u_tgt}) {
    for (std::size_t i = 0; i < B; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < u->cols(); ++j) sq += u->at(i, j) * u->at(i, j);
      if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
        throw PreconditionViolation("InfoNCE row " + std::to_string(i) + " is not unit norm");
      }
    }
  }
  Tensor sim = ad::scale(ad::matmul_nt(u_src, u_tgt), 1.0 / tau);
  std::vector<std::size_t> diag(B);
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  Tensor forward = ad::sum(ad::pick(ad::log_softmax_rows(sim), diag));
  Tensor backward = ad::sum(ad::pick(ad::log_softmax_rows(ad::transpose(sim)), diag));
  return ad::scale(ad::add(forward, backward), -1.0 / (2.0 * static_cast<double>(B)));
}

std::vector<SentenceForward> forward_sentences(const BackpackModel& model,
                                               const PaddedSequences& seqs,
                                               ForwardRequest request,
                                               const AlphaTransform& transform) {
  std::vector<SentenceForward> out(seqs.count);
  for (std::size_t i = 0; i < seqs.count; ++i) {
    SentenceForward& f = out[i];
    const auto ids = seqs.trimmed_row(i);
    f.ids.assign(ids.begin(), ids.end());
    f.mask = seqs.trimmed_mask(i);
    f.length = ids.size();
    if (request.mixture || request.logits) {
      SenseDecomposition dec = model.contextual_mixture(ids, f.mask, transform);
      f.senses = dec.senses;
      f.context = dec.context;
      f.mixture = dec.mixture;
      f.alpha = dec.alpha;
      if (request.logits) f.logits = model.output_logits(dec.mixture);
    } else {
      f.senses = model.sense_vectors(ids);
      if (request.context) f.context = model.context_states(ids, f.mask);
    }
  }
  return out;
}

Tensor sense_embeddings(const std::vector<SentenceForward>& sentences, double tau_pool,
                        SensePooling pooling) {
  std::vector<Tensor> pooled;
  pooled.reserve(sentences.size());
  for (const SentenceForward& f : sentences) {
    if (pooling == SensePooling::kContextual) {
      if (!f.mixture.defined()) throw InvalidArgument("contextual pooling needs the mixture");
      pooled.push_back(ad::masked_mean_rows(f.mixture, f.mask));
      continue;
    }
    const std::size_t T = f.length, K = f.senses.shape()[1], d = f.senses.shape()[2];
    Tensor pi = norm_pool_weights(f.senses, tau_pool);
    Tensor weighted = ad::mul(ad::reshape(f.senses, {T * K, d}), ad::reshape(pi, {T * K, 1}));
    ad::Mask expanded(T * K);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < K; ++k) expanded[t * K + k] = f.mask[t];
    }
    // Mean over (t, k) rows times K is the mean over t of sum_k.
    pooled.push_back(ad::scale(ad::masked_mean_rows(weighted, expanded), static_cast<double>(K)));
  }
  return ad::l2_normalize_rows(ad::concat_rows(pooled));
}

Tensor context_embeddings(const std::vector<SentenceForward>& sentences) {
  std::vector<Tensor> last;
  last.reserve(sentences.size());
  for (const SentenceForward& f : sentences) {
    std::size_t idx = f.length;
    while (idx > 0 && !f.mask[idx - 1]) --idx;
    if (idx == 0) throw EmptySequence("sentence has no non-pad tokens");
    last.push_back(ad::slice_rows(f.context, idx - 1, 1));
  }
  return ad::l2_normalize_rows(ad::concat_rows(last));
}

Tensor sense_loss(const TokenizedBatch& batch, const BackpackModel& model, double tau_sns,
                  double tau_pool, SensePooling pooling) {
  if (batch.src.count != batch.tgt.count) throw InvalidBatch("source/target batch sizes differ");
  const ForwardRequest req{.context = false,
                           .mixture = pooling == SensePooling::kContextual,
                           .logits = false};
  auto src = forward_sentences(model, batch.src, req);
  auto tgt = forward_sentences(model, batch.tgt, req);
  return info_nce_symmetric(sense_embeddings(src, tau_pool, pooling),
                            sense_embeddings(tgt, tau_pool, pooling), tau_sns);
}

Tensor context_loss(const TokenizedBatch& batch, const BackpackModel& model, double tau_ctx) {
  if (batch.src.count != batch.tgt.count) throw InvalidBatch("source/target batch sizes differ");
  const ForwardRequest req{.context = true, .mixture = false, .logits = false};
  auto src = forward_sentences(model, batch.src, req);
  auto tgt = forward_sentences(model, batch.tgt, req);
  return info_nce_symmetric(context_embeddings(src), context_embeddings(tgt), tau_ctx);
}

Tensor lm_loss(const Tensor& logits, std::span<const int> target_ids, const ad::Mask& mask,
               double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidArgument("label smoothing must be in [0, 1)");
  const std::size_t rows = logits.rows(), V = logits.cols();
  if (target_ids.size() != rows || mask.size() != rows) {
    throw InvalidArgument("lm_loss: targets and mask must match logits rows");
  }
  std::size_t count = 0;
  std::vector<double> q(rows * V, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!mask[i]) continue;
    if (target_ids[i] < 0 || static_cast<std::size_t>(target_ids[i]) >= V) {
      throw InvalidToken("lm_loss: target id outside vocabulary");
    }
    ++count;
    for (std::size_t v = 0; v < V; ++v) q[i * V + v] = epsilon / static_cast<double>(V);
    q[i * V + target_ids[i]] += 1.0 - epsilon;
  }
  if (count == 0) throw EmptySequence("lm_loss: no non-pad target positions");
  Tensor weights = Tensor::from(logits.shape(), std::move(q));
  return ad::scale(ad::sum(ad::mul(ad::log_softmax_rows(logits), weights)),
                   -1.0 / static_cast<double>(count));
}

Tensor target_lm_loss(const std::vector<SentenceForward>& tgt, double epsilon) {
  std::vector<Tensor> rows;
  std::vector<int> targets;
  ad::Mask mask;
  for (const SentenceForward& f : tgt) {
    if (f.length < 2) continue;
    rows.push_back(ad::slice_rows(f.logits, 0, f.length - 1));
    for (std::size_t t = 0; t + 1 < f.length; ++t) {
      targets.push_back(f.ids[t + 1]);
      mask.push_back(f.mask[t] && f.mask[t + 1]);
    }
  }
  if (rows.empty()) throw EmptySequence("no target sentence has a next token to predict");
  return lm_loss(ad::concat_rows(rows), targets, mask, epsilon);
}

double combine_losses(double l_sns, double l_ctx, double l_lm, const LossWeights& w) {
  return w.sns * l_sns + w.ctx * l_ctx + w.lm * l_lm;
}

LossBreakdown total_loss(const BackpackModel& model, const TokenizedBatch& batch,
                         const LossWeights& weights, const LossSettings& settings) {
  if (weights.sns < 0.0 || weights.ctx < 0.0 || weights.lm < 0.0) {
    throw InvalidArgument("loss weights must be non-negative");
  }
  if (batch.src.count != batch.tgt.count) throw InvalidBatch("source/target batch sizes differ");
  LossBreakdown out;
  out.weights_used = weights;
  out.temps_used = settings.temps;

  const bool want_sns = weights.sns != 0.0;
  const bool want_ctx = weights.ctx != 0.0;
  const bool want_lm = weights.lm != 0.0;
  const bool contextual = settings.pooling == SensePooling::kContextual;

  const ForwardRequest src_req{.context = want_ctx,
                               .mixture = want_sns && contextual,
                               .logits = false};
  const ForwardRequest tgt_req{.context = want_ctx,
                               .mixture = (want_sns && contextual) || want_lm,
                               .logits = want_lm};
  std::vector<SentenceForward> src, tgt;
  if (want_sns || want_ctx) src = forward_sentences(model, batch.src, src_req);
  if (want_sns || want_ctx || want_lm) tgt = forward_sentences(model, batch.tgt, tgt_req);

  std::vector<Tensor> terms;
  if (want_sns) {
    Tensor l = info_nce_symmetric(sense_embeddings(src, settings.tau_pool, settings.pooling),
                                  sense_embeddings(tgt, settings.tau_pool, settings.pooling),
                                  settings.temps.sns);
    out.l_sns = l.item();
    terms.push_back(ad::scale(l, weights.sns));
  }
  if (want_ctx) {
    Tensor l = info_nce_symmetric(context_embeddings(src), context_embeddings(tgt),
                                  settings.temps.ctx);
    out.l_ctx = l.item();
    terms.push_back(ad::scale(l, weights.ctx));
  }
  if (want_lm) {
    Tensor l = target_lm_loss(tgt, settings.label_smoothing);
    out.l_lm = l.item();
    terms.push_back(ad::scale(l, weights.lm));
  }
  out.l_total = combine_losses(out.l_sns.value_or(0.0), out.l_ctx.value_or(0.0),
                               out.l_lm.value_or(0.0), weights);
  if (terms.empty()) {
    out.total = Tensor::scalar(0.0);
  } else {
    out.total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) out.total = ad::add(out.total, terms[i]);
  }
  return out;
}

}  // namespace sensia
