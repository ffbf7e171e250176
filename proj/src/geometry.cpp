#include "sensia/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "sensia/errors.hpp"
#include "sensia/ops.hpp"

namespace sensia {

std::optional<Eigen::MatrixXd> pool_subword_senses(std::span<const Eigen::MatrixXd> positions,
                                                   std::size_t n_senses) {
  if (positions.empty()) throw InvalidArgument("cannot pool an empty word span");
  const Eigen::Index d = positions.front().cols();
  for (const auto& p : positions) {
    if (p.cols() != d) throw InvalidArgument("sense widths differ across the span");
    if (static_cast<std::size_t>(p.rows()) < n_senses) return std::nullopt;
  }
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_senses), d);
  for (const auto& p : positions) sum += p.topRows(static_cast<Eigen::Index>(n_senses));
  return sum / static_cast<double>(positions.size());
}

std::optional<Eigen::MatrixXd> center_normalize(const Eigen::MatrixXd& v) {
  Eigen::MatrixXd out = v.rowwise() - v.colwise().mean();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (n < kEpsilonNorm) return std::nullopt;
    out.row(r) /= n;
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman inputs differ in length");
  if (x.size() < 2) throw InvalidArgument("spearman needs at least two values");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("spearman input is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> upper_triangle(const Eigen::MatrixXd& g) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < g.cols(); ++j) out.push_back(g(i, j));
  }
  return out;
}

}  // namespace

double topology_rho(const Eigen::MatrixXd& v_src, const Eigen::MatrixXd& v_tgt) {
  if (v_src.rows() != v_tgt.rows()) throw InvalidArgument("sense counts differ");
  if (static_cast<std::size_t>(v_src.rows()) < kMinTopologySenses) {
    throw InvalidArgument("topology needs at least 3 senses");
  }
  const auto a = center_normalize(v_src);
  if (!a) throw DegenerateVector("source sense matrix degenerates after centering");
  const auto b = center_normalize(v_tgt);
  if (!b) throw DegenerateVector("target sense matrix degenerates after centering");
  const Eigen::MatrixXd ga = *a * a->transpose();
  const Eigen::MatrixXd gb = *b * b->transpose();
  return spearman(upper_triangle(ga), upper_triangle(gb));
}

BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b,
                                 std::size_t iters, std::uint64_t seed) {
  if (a.size() != b.size()) throw InvalidArgument("bootstrap lists differ in length");
  if (a.empty()) throw InvalidArgument("bootstrap needs at least one pair");
  if (iters == 0) throw InvalidArgument("bootstrap needs at least one iteration");
  const std::size_t n = a.size();
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) observed += a[i] - b[i];
  observed /= static_cast<double>(n);

  Rng rng(seed, Stream::kBootstrap);
  BootstrapResult out;
  std::size_t flips = 0;
  for (std::size_t it = 0; it < iters; ++it) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = rng.below(n);
      sa += a[idx];
      sb += b[idx];
    }
    const double ma = sa / static_cast<double>(n), mb = sb / static_cast<double>(n);
    out.mean_a += ma;
    out.mean_b += mb;
    const double d = ma - mb;
    out.delta += d;
    if (!(observed > 0.0 && d > 0.0) && !(observed < 0.0 && d < 0.0)) ++flips;
  }
  const double k = static_cast<double>(iters);
  out.mean_a /= k;
  out.mean_b /= k;
  out.delta /= k;
  out.p_value = std::min(1.0, 2.0 * static_cast<double>(flips) / k);
  return out;
}

TopologyReport topology_report(const std::vector<SenseMatrixPair>& pairs,
                               const std::vector<SenseMatrixPair>* control,
                               std::size_t bootstrap_iters, std::uint64_t seed) {
  if (control && control->size() != pairs.size()) {
    throw InvalidArgument("control word pairs must match the model's");
  }
  TopologyReport report;
  std::vector<double> ctrl;
  auto score = [&](const SenseMatrixPair& p) -> std::optional<double> {
    if (static_cast<std::size_t>(p.src.rows()) < kMinTopologySenses) {
      ++report.skipped_small_k;
      return std::nullopt;
    }
    try {
      return topology_rho(p.src, p.tgt);
    } catch (const DegenerateVector&) {
      ++report.skipped_degenerate;
    } catch (const UndefinedCorrelation&) {
      ++report.skipped_undefined;
    }
    return std::nullopt;
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto rho = score(pairs[i]);
    if (!rho) continue;
    if (control) {
      const auto c = score((*control)[i]);
      if (!c) continue;
      ctrl.push_back(*c);
    }
    report.indices.push_back(i);
    report.rhos.push_back(*rho);
  }
  if (report.rhos.empty()) return report;
  report.mean_rho = std::accumulate(report.rhos.begin(), report.rhos.end(), 0.0) /
                    static_cast<double>(report.rhos.size());
  const std::vector<double>& other = control ? ctrl : report.rhos;
  const BootstrapResult boot = paired_bootstrap(report.rhos, other, bootstrap_iters, seed);
  report.bootstrap_mean_rho = boot.mean_a;
  if (control) {
    report.control_mean_rho =
        std::accumulate(ctrl.begin(), ctrl.end(), 0.0) / static_cast<double>(ctrl.size());
    report.delta_vs_control = boot.delta;
    report.p_value = boot.p_value;
    report.control_rhos = std::move(ctrl);
  }
  return report;
}

std::optional<Eigen::VectorXd> mixture_embedding(const Eigen::MatrixXd& senses,
                                                 std::span<const double> pi) {
  if (static_cast<std::size_t>(senses.rows()) != pi.size()) {
    throw InvalidArgument("mixture weights must match the sense count");
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(senses.cols());
  for (Eigen::Index k = 0; k < senses.rows(); ++k) e += pi[static_cast<std::size_t>(k)] * senses.row(k).transpose();
  const double n = e.norm();
  if (n < kEpsilonNorm) return std::nullopt;
  return e / n;
}

Eigen::MatrixXd procrustes_q(const Eigen::MatrixXd& t, const Eigen::MatrixXd& e,
                             bool* rank_deficient) {
  if (t.rows() != e.rows() || t.cols() != e.cols()) {
    throw InvalidArgument("Procrustes matrices differ in shape");
  }
  if (t.rows() == 0) throw InvalidArgument("Procrustes needs at least one pair");
  const Eigen::MatrixXd m = t.transpose() * e;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (rank_deficient) {
    const auto& s = svd.singularValues();
    const double tol = std::max<double>(1.0, s(0)) * 1e-10 * static_cast<double>(m.rows());
    *rank_deficient = (s.array() <= tol).any();
  }
  return svd.matrixU() * svd.matrixV().transpose();
}

double mean_aligned_cosine(const Eigen::MatrixXd& t, const Eigen::MatrixXd& e,
                           const Eigen::MatrixXd& q) {
  const Eigen::MatrixXd tq = t * q;
  double total = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    const double denom = std::max(tq.row(i).norm() * e.row(i).norm(), kEpsilonNorm);
    total += tq.row(i).dot(e.row(i)) / denom;
  }
  return total / static_cast<double>(t.rows());
}

ProcrustesReport procrustes_align(const Eigen::MatrixXd& t, const Eigen::MatrixXd& e,
                                  std::size_t subsample_size, std::size_t n_subsamples,
                                  std::uint64_t seed) {
  ProcrustesReport report;
  report.n_pairs = static_cast<std::size_t>(t.rows());
  report.underdetermined = t.rows() < t.cols();
  if (report.underdetermined) {
    std::cerr << "warning: Procrustes with fewer pairs (" << t.rows() << ") than dimensions ("
              << t.cols() << ")\n";
  }
  report.q = procrustes_q(t, e, &report.rank_deficient);
  if (subsample_size == 0 || subsample_size >= report.n_pairs) {
    report.mean_cosine = mean_aligned_cosine(t, e, report.q);
    return report;
  }
  Rng rng(seed, Stream::kSubsample);
  std::vector<std::size_t> order(report.n_pairs);
  for (std::size_t s = 0; s < n_subsamples; ++s) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    Eigen::MatrixXd ts(static_cast<Eigen::Index>(subsample_size), t.cols());
    Eigen::MatrixXd es(static_cast<Eigen::Index>(subsample_size), e.cols());
    for (std::size_t i = 0; i < subsample_size; ++i) {
      ts.row(static_cast<Eigen::Index>(i)) = t.row(static_cast<Eigen::Index>(order[i]));
      es.row(static_cast<Eigen::Index>(i)) = e.row(static_cast<Eigen::Index>(order[i]));
    }
    report.subsample_means.push_back(mean_aligned_cosine(ts, es, procrustes_q(ts, es)));
  }
  report.mean_cosine =
      std::accumulate(report.subsample_means.begin(), report.subsample_means.end(), 0.0) /
      static_cast<double>(n_subsamples);
  return report;
}

Eigen::MatrixXd random_orthogonal(std::size_t d, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

std::vector<WordPair> collect_word_pairs(const std::vector<ParallelPair>& pairs,
                                         const std::vector<AlignmentLink>& links,
                                         const Vocab& vocab, const WordPairOptions& options) {
  std::vector<std::vector<std::string>> src_words, tgt_words;
  std::unordered_map<std::string, std::size_t> src_freq, tgt_freq;
  for (const ParallelPair& p : pairs) {
    src_words.push_back(split_whitespace(p.src_text));
    tgt_words.push_back(split_whitespace(p.tgt_text));
    for (const auto& w : src_words.back()) ++src_freq[w];
    for (const auto& w : tgt_words.back()) ++tgt_freq[w];
  }
  const std::set<std::string> stop(options.stop_words.begin(), options.stop_words.end());
  auto usable = [&](const std::string& w, const std::unordered_map<std::string, std::size_t>& freq) {
    if (stop.count(w) || !vocab.contains(w)) return false;
    const auto it = freq.find(w);
    return it != freq.end() && it->second >= options.min_frequency;
  };
  std::set<std::pair<int, int>> seen;
  std::vector<WordPair> out;
  for (const AlignmentLink& link : links) {
    if (link.pair_index >= pairs.size()) {
      throw InvalidArgument("alignment refers to pair " + std::to_string(link.pair_index) +
                            " beyond the corpus");
    }
    const auto& sw = src_words[link.pair_index];
    const auto& tw = tgt_words[link.pair_index];
    if (link.src_word_index >= sw.size() || link.tgt_word_index >= tw.size()) {
      throw InvalidArgument("alignment word index out of range in pair " +
                            std::to_string(link.pair_index));
    }
    const std::string& s = sw[link.src_word_index];
    const std::string& t = tw[link.tgt_word_index];
    if (!usable(s, src_freq) || !usable(t, tgt_freq)) continue;
    const std::pair<int, int> key{vocab.id(s), vocab.id(t)};
    if (seen.insert(key).second) out.push_back({key.first, key.second});
  }
  return out;
}

Eigen::MatrixXd token_senses(const BackpackModel& model, int token) {
  ad::NoGradGuard no_grad;
  const int ids[1] = {token};
  const ad::Tensor s = model.sense_vectors(ids);
  const auto K = static_cast<Eigen::Index>(s.shape()[1]);
  const auto d = static_cast<Eigen::Index>(s.shape()[2]);
  Eigen::MatrixXd out(K, d);
  const auto v = s.values();
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) out(k, j) = v[static_cast<std::size_t>(k * d + j)];
  }
  return out;
}

std::vector<SenseMatrixPair> sense_matrix_pairs(const BackpackModel& model,
                                                const std::vector<WordPair>& words) {
  std::vector<SenseMatrixPair> out;
  out.reserve(words.size());
  for (const WordPair& w : words) {
    out.push_back({token_senses(model, w.src_token), token_senses(model, w.tgt_token)});
  }
  return out;
}

namespace {

std::vector<double> norm_pool(const Eigen::MatrixXd& senses, double tau_pool) {
  std::vector<double> norms(static_cast<std::size_t>(senses.rows()));
  for (Eigen::Index k = 0; k < senses.rows(); ++k) norms[static_cast<std::size_t>(k)] = senses.row(k).norm();
  return softmax(norms, tau_pool);
}

}  // namespace

MixtureMatrices mixture_matrices(const BackpackModel& model, const std::vector<WordPair>& words,
                                 double tau_pool) {
  std::vector<Eigen::VectorXd> ts, es;
  MixtureMatrices out;
  for (const WordPair& w : words) {
    const Eigen::MatrixXd s_src = token_senses(model, w.src_token);
    const Eigen::MatrixXd s_tgt = token_senses(model, w.tgt_token);
    const auto e = mixture_embedding(s_src, norm_pool(s_src, tau_pool));
    const auto t = mixture_embedding(s_tgt, norm_pool(s_tgt, tau_pool));
    if (!e || !t) {
      ++out.skipped;
      continue;
    }
    es.push_back(*e);
    ts.push_back(*t);
  }
  const auto d = static_cast<Eigen::Index>(model.config().d_model);
  out.t.resize(static_cast<Eigen::Index>(ts.size()), d);
  out.e.resize(static_cast<Eigen::Index>(es.size()), d);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out.t.row(static_cast<Eigen::Index>(i)) = ts[i].transpose();
    out.e.row(static_cast<Eigen::Index>(i)) = es[i].transpose();
  }
  return out;
}

std::vector<std::string> read_stop_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open stop list " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& w : split_whitespace(line)) {
      if (!w.empty() && w[0] == '#') break;
      words.push_back(w);
    }
  }
  return words;
}

}  // namespace sensia
