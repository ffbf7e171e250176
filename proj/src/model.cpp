#include "sensia/model.hpp"

#include <cmath>

#include "sensia/errors.hpp"
#include "sensia/rng.hpp"

namespace sensia {

using ad::Tensor;

void ModelConfig::validate() const {
  if (n_senses < 1) throw InvalidArgument("model.n_senses must be >= 1");
  if (vocab_size < 2) throw InvalidArgument("model.vocab_size must be >= 2");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw InvalidArgument("model.d_model must be divisible by model.n_heads");
  }
  if (max_positions == 0) throw InvalidArgument("model.max_positions must be >= 1");
}

std::size_t ModelConfig::weight_head_dim() const {
  return std::max<std::size_t>(1, d_model / n_senses);
}

ad::Mask full_mask(std::size_t n) { return ad::Mask(n, 1); }

BackpackModel::BackpackModel(ModelConfig config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  const std::size_t d = config_.d_model, V = config_.vocab_size;
  const std::size_t K = config_.n_senses, dh = config_.weight_head_dim();

  add_param("token_embedding", ParamGroup::kTokenEmbedding, {V, d});
  for (std::size_t k = 0; k < K; ++k) {
    add_param("sense_proj." + std::to_string(k), ParamGroup::kSenseProjection, {d, d});
  }
  add_param("position_embedding", ParamGroup::kContextNet, {config_.max_positions, d});
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "ctx." + std::to_string(l) + ".";
    add_param(p + "ln1.gamma", ParamGroup::kContextNet, {1, d});
    add_param(p + "ln1.beta", ParamGroup::kContextNet, {1, d});
    add_param(p + "attn.qkv", ParamGroup::kContextNet, {d, 3 * d});
    add_param(p + "attn.qkv_bias", ParamGroup::kContextNet, {1, 3 * d});
    add_param(p + "attn.proj", ParamGroup::kContextNet, {d, d});
    add_param(p + "attn.proj_bias", ParamGroup::kContextNet, {1, d});
    add_param(p + "ln2.gamma", ParamGroup::kContextNet, {1, d});
    add_param(p + "ln2.beta", ParamGroup::kContextNet, {1, d});
    add_param(p + "mlp.fc", ParamGroup::kContextNet, {d, 4 * d});
    add_param(p + "mlp.fc_bias", ParamGroup::kContextNet, {1, 4 * d});
    add_param(p + "mlp.proj", ParamGroup::kContextNet, {4 * d, d});
    add_param(p + "mlp.proj_bias", ParamGroup::kContextNet, {1, d});
  }
  add_param("ctx.ln_f.gamma", ParamGroup::kContextNet, {1, d});
  add_param("ctx.ln_f.beta", ParamGroup::kContextNet, {1, d});
  add_param("weight_head.query", ParamGroup::kWeightHead, {d, K * dh});
  add_param("weight_head.key", ParamGroup::kWeightHead, {d, K * dh});
  add_param("weight_head.sense_logit", ParamGroup::kWeightHead, {d, K});
  add_param("weight_head.sense_bias", ParamGroup::kWeightHead, {1, K});
  if (!config_.tie_output) add_param("output_head", ParamGroup::kOutputHead, {d, V});

  Rng rng(seed, Stream::kInit);
  const double proj_std = 0.02 / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(1, config_.n_layers)));
  for (Parameter& p : params_) {
    auto v = p.tensor.mutable_values();
    const std::string& n = p.name;
    const bool is_gamma = n.ends_with("gamma");
    const bool is_bias = n.ends_with("beta") || n.ends_with("bias");
    if (is_gamma) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (is_bias) {
      std::fill(v.begin(), v.end(), 0.0);
    } else if (p.group == ParamGroup::kSenseProjection) {
      const double s = 0.02 / std::sqrt(static_cast<double>(K));
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          v[i * d + j] = (i == j ? 1.0 : 0.0) + rng.normal(0.0, s);
        }
      }
    } else {
      const double s = (n.ends_with("attn.proj") || n.ends_with("mlp.proj")) ? proj_std : 0.02;
      for (double& x : v) x = rng.normal(0.0, s);
    }
  }
}

void BackpackModel::add_param(std::string name, ParamGroup group, ad::Shape shape) {
  params_.push_back({std::move(name), group, Tensor::zeros(std::move(shape), true)});
}

const Parameter* BackpackModel::find(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* BackpackModel::find(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Tensor& BackpackModel::param(const std::string& name) const {
  const Parameter* p = find(name);
  if (!p) throw InvalidArgument("missing parameter " + name);
  return p->tensor;
}

BackpackModel BackpackModel::clone() const {
  BackpackModel copy;
  copy.config_ = config_;
  copy.seed_ = seed_;
  for (const Parameter& p : params_) {
    copy.params_.push_back({p.name, p.group,
                            Tensor::from(p.tensor.shape(),
                                         {p.tensor.values().begin(), p.tensor.values().end()},
                                         true)});
  }
  return copy;
}

void BackpackModel::untie_output_head() {
  if (!config_.tie_output) return;
  const std::size_t d = config_.d_model, V = config_.vocab_size;
  const auto emb = param("token_embedding").values();
  std::vector<double> head(d * V);
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t i = 0; i < d; ++i) head[i * V + v] = emb[v * d + i];
  }
  params_.push_back({"output_head", ParamGroup::kOutputHead,
                     Tensor::from({d, V}, std::move(head), true)});
  config_.tie_output = false;
}

namespace {

void check_sequence(std::span<const int> ids, const ad::Mask& pad_mask,
                    const ModelConfig& cfg) {
  if (pad_mask.size() != ids.size()) throw InvalidArgument("pad mask length differs from ids");
  if (ids.size() > cfg.max_positions) {
    throw InvalidArgument("sequence longer than model.max_positions");
  }
  bool any = false;
  for (std::uint8_t m : pad_mask) any = any || m;
  if (!any) throw EmptySequence("sequence has no non-pad tokens");
}

// [t, j] allowed iff j <= t and j is not padding.
ad::Mask causal_mask(const ad::Mask& pad_mask, std::size_t repeat) {
  const std::size_t T = pad_mask.size();
  ad::Mask mask(T * T * repeat, 0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j <= t; ++j) {
      if (!pad_mask[j]) continue;
      for (std::size_t r = 0; r < repeat; ++r) mask[t * T * repeat + j * repeat + r] = 1;
    }
  }
  return mask;
}

}  // namespace

Tensor BackpackModel::sense_vectors(std::span<const int> ids) const {
  const std::size_t T = ids.size(), d = config_.d_model, K = config_.n_senses;
  Tensor x = ad::embedding(param("token_embedding"), ids);
  std::vector<Tensor> projections;
  projections.reserve(K);
  for (std::size_t k = 0; k < K; ++k) projections.push_back(param("sense_proj." + std::to_string(k)));
  // Row t of x * [E_1 | ... | E_K] holds s_{t,1..K} back to back.
  Tensor stacked = ad::matmul(x, K == 1 ? projections[0] : ad::concat_cols(projections));
  return ad::reshape(stacked, {T, K, d});
}

Tensor BackpackModel::transformer_block(const Tensor& x, std::size_t layer,
                                        const ad::Mask& pad_mask) const {
  const std::size_t d = config_.d_model, H = config_.n_heads, dh = d / H;
  const std::string p = "ctx." + std::to_string(layer) + ".";
  const ad::Mask mask = causal_mask(pad_mask, 1);

  Tensor a = ad::layer_norm_rows(x, param(p + "ln1.gamma"), param(p + "ln1.beta"));
  Tensor qkv = ad::add(ad::matmul(a, param(p + "attn.qkv")), param(p + "attn.qkv_bias"));
  std::vector<Tensor> heads;
  heads.reserve(H);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < H; ++h) {
    Tensor q = ad::slice_cols(qkv, h * dh, dh);
    Tensor k = ad::slice_cols(qkv, d + h * dh, dh);
    Tensor v = ad::slice_cols(qkv, 2 * d + h * dh, dh);
    Tensor att = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt), 1.0, &mask);
    heads.push_back(ad::matmul(att, v));
  }
  Tensor merged = H == 1 ? heads[0] : ad::concat_cols(heads);
  Tensor out = ad::add(x, ad::add(ad::matmul(merged, param(p + "attn.proj")),
                                  param(p + "attn.proj_bias")));
  Tensor m = ad::layer_norm_rows(out, param(p + "ln2.gamma"), param(p + "ln2.beta"));
  Tensor hidden = ad::gelu(ad::add(ad::matmul(m, param(p + "mlp.fc")), param(p + "mlp.fc_bias")));
  return ad::add(out, ad::add(ad::matmul(hidden, param(p + "mlp.proj")),
                              param(p + "mlp.proj_bias")));
}

Tensor BackpackModel::context_states(std::span<const int> ids,
                                     const ad::Mask& pad_mask) const {
  check_sequence(ids, pad_mask, config_);
  Tensor x = ad::add(ad::embedding(param("token_embedding"), ids),
                     ad::slice_rows(param("position_embedding"), 0, ids.size()));
  for (std::size_t l = 0; l < config_.n_layers; ++l) x = transformer_block(x, l, pad_mask);
  return ad::layer_norm_rows(x, param("ctx.ln_f.gamma"), param("ctx.ln_f.beta"));
}

SenseDecomposition BackpackModel::contextual_mixture(std::span<const int> ids,
                                                     const ad::Mask& pad_mask,
                                                     const AlphaTransform& transform) const {
  const std::size_t T = ids.size(), d = config_.d_model, K = config_.n_senses;
  const std::size_t dh = config_.weight_head_dim();
  SenseDecomposition out;
  out.length = T;
  out.n_senses = K;
  out.context = context_states(ids, pad_mask);
  out.senses = sense_vectors(ids);

  Tensor q = ad::matmul(out.context, param("weight_head.query"));
  Tensor k = ad::matmul(out.context, param("weight_head.key"));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> blocks;  // block k holds scores[t, j] for sense k
  blocks.reserve(K);
  for (std::size_t s = 0; s < K; ++s) {
    blocks.push_back(ad::scale(
        ad::matmul_nt(ad::slice_cols(q, s * dh, dh), ad::slice_cols(k, s * dh, dh)), inv_sqrt));
  }
  Tensor by_sense = K == 1 ? blocks[0] : ad::concat_cols(blocks);
  std::vector<std::size_t> to_position_major(T * K), sense_of(T * K);
  for (std::size_t j = 0; j < T; ++j) {
    for (std::size_t s = 0; s < K; ++s) {
      to_position_major[j * K + s] = s * T + j;
      sense_of[j * K + s] = s;
    }
  }
  Tensor prior = ad::add(ad::matmul(out.context, param("weight_head.sense_logit")),
                         param("weight_head.sense_bias"));
  Tensor logits = ad::add(ad::gather_cols(by_sense, to_position_major),
                          ad::gather_cols(prior, sense_of));
  const ad::Mask mask = causal_mask(pad_mask, K);
  out.alpha = ad::softmax_rows(logits, 1.0, &mask);
  if (transform) out.alpha = transform(out.alpha, T, K);
  out.mixture = ad::matmul(out.alpha, ad::reshape(out.senses, {T * K, d}));
  return out;
}

Tensor BackpackModel::output_logits(const Tensor& mixture) const {
  if (config_.tie_output) return ad::matmul_nt(mixture, param("token_embedding"));
  return ad::matmul(mixture, param("output_head"));
}

LmOutput BackpackModel::forward_lm(std::span<const int> ids, const ad::Mask& pad_mask,
                                   const AlphaTransform& transform) const {
  LmOutput out;
  out.decomposition = contextual_mixture(ids, pad_mask, transform);
  out.logits = output_logits(out.decomposition.mixture);
  return out;
}

Tensor norm_pool_weights(const Tensor& senses, double tau_pool) {
  if (!(tau_pool > 0.0)) throw InvalidArgument("tau_pool must be positive");
  const auto& shape = senses.shape();
  if (shape.size() != 3) throw InvalidArgument("norm_pool_weights expects {T, K, d}");
  const std::size_t T = shape[0], K = shape[1], d = shape[2];
  Tensor norms = ad::row_norms(ad::reshape(senses, {T * K, d}));
  return ad::softmax_rows(ad::reshape(norms, {T, K}), tau_pool);
}

}  // namespace sensia
