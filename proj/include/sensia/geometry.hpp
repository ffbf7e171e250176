#pragma once

// Sense-space analyses: per-word sense topology (Gram matrices compared by
// rank correlation) and global orthogonal Procrustes alignment, with a
// paired bootstrap for comparing two models on the same word pairs.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sensia/corpus.hpp"
#include "sensia/model.hpp"
#include "sensia/rng.hpp"

namespace sensia {

// Element-wise mean of the K x d sense matrices of a word's positions.
// Throws InvalidArgument for an empty span or mismatched widths; returns
// nullopt when some position supplies fewer than K rows.
std::optional<Eigen::MatrixXd> pool_subword_senses(std::span<const Eigen::MatrixXd> positions,
                                                   std::size_t n_senses);

// Subtracts the mean row, then L2-normalizes each row. nullopt when a
// centered row has norm below kEpsilonNorm.
std::optional<Eigen::MatrixXd> center_normalize(const Eigen::MatrixXd& v);

// Ranks starting at 1; tied values share the average of their ranks.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson correlation of average ranks. Throws InvalidArgument for length
// mismatch or fewer than two values, UndefinedCorrelation for constant input.
double spearman(std::span<const double> x, std::span<const double> y);

inline constexpr std::size_t kMinTopologySenses = 3;

// Spearman over the strict upper triangles of the cosine Gram matrices of the
// centered, normalized sense matrices. Throws InvalidArgument when K < 3 or
// shapes differ, DegenerateVector when centering leaves a zero row, and
// UndefinedCorrelation when either triangle is constant.
double topology_rho(const Eigen::MatrixXd& v_src, const Eigen::MatrixXd& v_tgt);

struct BootstrapResult {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double delta = 0.0;
  double p_value = 1.0;
};

// Resamples indices with replacement `iters` times. delta is the mean over
// iterations of mean_a - mean_b; p is twice the fraction of iterations whose
// delta does not share the sign of the full-sample delta, capped at 1.
BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b,
                                 std::size_t iters, std::uint64_t seed);

struct SenseMatrixPair {
  Eigen::MatrixXd src;
  Eigen::MatrixXd tgt;
};

struct TopologyReport {
  std::vector<std::size_t> indices;  // input position of each scored pair
  std::vector<double> rhos;
  double mean_rho = 0.0;
  double bootstrap_mean_rho = 0.0;
  std::optional<std::vector<double>> control_rhos;
  std::optional<double> control_mean_rho;
  std::optional<double> delta_vs_control;
  std::optional<double> p_value;
  std::size_t skipped_degenerate = 0;
  std::size_t skipped_undefined = 0;
  std::size_t skipped_small_k = 0;
};

// Scores every pair. With a control, a pair is kept only when both models
// produce a defined rho, so the bootstrap stays paired.
TopologyReport topology_report(const std::vector<SenseMatrixPair>& pairs,
                               const std::vector<SenseMatrixPair>* control,
                               std::size_t bootstrap_iters, std::uint64_t seed);

// e = sum_k pi_k s_k, L2-normalized; nullopt when the norm is degenerate.
std::optional<Eigen::VectorXd> mixture_embedding(const Eigen::MatrixXd& senses,
                                                 std::span<const double> pi);

struct ProcrustesReport {
  Eigen::MatrixXd q;
  double mean_cosine = 0.0;
  std::size_t n_pairs = 0;
  std::vector<double> subsample_means;
  bool rank_deficient = false;
  bool underdetermined = false;  // N < d
};

// Q = U V^T from the SVD of T^T E.
Eigen::MatrixXd procrustes_q(const Eigen::MatrixXd& t, const Eigen::MatrixXd& e,
                             bool* rank_deficient = nullptr);

// (1/N) sum_i cos(T_i Q, E_i).
double mean_aligned_cosine(const Eigen::MatrixXd& t, const Eigen::MatrixXd& e,
                           const Eigen::MatrixXd& q);

// Fits Q on all rows. When 0 < subsample_size < N, mean_cosine is instead the
// average over `n_subsamples` seeded subsamples (without replacement), each
// fitted and scored on its own rows.
ProcrustesReport procrustes_align(const Eigen::MatrixXd& t, const Eigen::MatrixXd& e,
                                  std::size_t subsample_size = 0,
                                  std::size_t n_subsamples = 5, std::uint64_t seed = 0);

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
// of R's diagonal folded into Q.
Eigen::MatrixXd random_orthogonal(std::size_t d, Rng& rng);

// ---------------------------------------------------------------------------
// Word pairs from aligned bitext

struct WordPair {
  int src_token = 0;
  int tgt_token = 0;
};

struct WordPairOptions {
  std::size_t min_frequency = 5;
  std::vector<std::string> stop_words;
};

// Distinct (src, tgt) word pairs from one-to-one alignment links whose words
// both occur at least min_frequency times on their side and are neither stop
// words nor unknown. Ordered by first occurrence.
std::vector<WordPair> collect_word_pairs(const std::vector<ParallelPair>& pairs,
                                         const std::vector<AlignmentLink>& links,
                                         const Vocab& vocab, const WordPairOptions& options);

// Pre-context K x d sense matrix of a single token.
Eigen::MatrixXd token_senses(const BackpackModel& model, int token);

std::vector<SenseMatrixPair> sense_matrix_pairs(const BackpackModel& model,
                                                const std::vector<WordPair>& words);

// Rows are mixture embeddings (norm-pooled weights) of the source and target
// word of each pair; pairs with a degenerate embedding on either side are
// dropped and counted in `skipped`.
struct MixtureMatrices {
  Eigen::MatrixXd t;  // target language
  Eigen::MatrixXd e;  // source language
  std::size_t skipped = 0;
};
MixtureMatrices mixture_matrices(const BackpackModel& model, const std::vector<WordPair>& words,
                                 double tau_pool);

std::vector<std::string> read_stop_list(const std::string& path);

}  // namespace sensia
