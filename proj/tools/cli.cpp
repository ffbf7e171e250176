#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"
#include "sensia/ablation.hpp"
#include "sensia/checkpoint.hpp"
#include "sensia/config.hpp"
#include "sensia/corpus.hpp"
#include "sensia/errors.hpp"
#include "sensia/geometry.hpp"
#include "sensia/mc_scorer.hpp"
#include "sensia/plot.hpp"
#include "sensia/rng.hpp"
#include "sensia/trainer.hpp"

namespace fs = std::filesystem;

namespace sensia::cli {

namespace {

constexpr int kManifestFormatVersion = 1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Outputs are written into <out>.partial-<pid> and moved into <out> only when
// the command succeeds.
class Staging {
 public:
  explicit Staging(const std::string& out) : final_(out) {
    if (out.empty()) throw ConfigError("--out", "an output directory is required");
    stage_ = fs::path(out + ".partial-" + std::to_string(::getpid()));
    fs::remove_all(stage_);
    fs::create_directories(stage_);
  }
  ~Staging() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(stage_, ec);
    }
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;

  std::string file(const std::string& name) {
    files_.push_back(name);
    return (stage_ / name).string();
  }
  const fs::path& dir() const { return stage_; }
  const std::vector<std::string>& files() const { return files_; }

  void commit() {
    fs::create_directories(final_);
    for (const auto& entry : fs::directory_iterator(stage_)) {
      fs::rename(entry.path(), final_ / entry.path().filename());
    }
    fs::remove_all(stage_);
    committed_ = true;
  }

 private:
  fs::path final_, stage_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << text;
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override one key (key=value); repeatable");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = desk_config();
  if (!c.config_path.empty()) cfg = load_config(c.config_path, cfg);
  std::string text;
  for (const auto& kv : c.overrides) {
    if (kv.find('=') == std::string::npos) throw ConfigError(kv, "--set expects key=value");
    text += kv + "\n";
  }
  if (!text.empty()) cfg = parse_config(text, cfg);
  return cfg;
}

void write_manifest(Staging& staging, const std::string& command,
                    const std::vector<std::string>& argv, const RunConfig& cfg,
                    std::uint64_t seed, const std::map<std::string, std::string>& extra = {}) {
  std::ostringstream m;
  std::string args;
  for (std::size_t i = 1; i < argv.size(); ++i) args += (i > 1 ? " " : "") + argv[i];
  const std::vector<std::string> outputs = staging.files();
  std::string out_list;
  for (std::size_t i = 0; i < outputs.size(); ++i) out_list += (i ? "," : "") + outputs[i];
  m << "# Run manifest. Accepted as a --config file to reproduce the run.\n"
    << "manifest.format_version = " << kManifestFormatVersion << "\n"
    << "manifest.command = " << command << "\n"
    << "manifest.argv = " << args << "\n"
    << "manifest.seed = " << seed << "\n"
    << "manifest.seed_rule = stream_seed = splitmix64(seed + stream * 0x9E3779B97F4A7C15)\n"
    << "manifest.streams = init=1,batch_order=2,synthetic=3,filter_sampling=4,bootstrap=5,"
       "subsample=6,split=7\n"
    << "manifest.checkpoint_format_version = " << kCheckpointFormatVersion << "\n"
    << "manifest.metrics_header = " << kMetricsHeader << "\n"
    << "manifest.outputs = " << out_list << "\n";
  for (const auto& [k, v] : extra) m << "manifest." << k << " = " << v << "\n";
  m << cfg.to_text();
  write_text(staging.file("manifest.txt"), m.str());
}

std::vector<TokenizedPair> load_tokenized(const std::string& path, const Vocab& vocab,
                                          std::size_t max_len) {
  return tokenize_pairs(read_pairs_tsv(path), vocab, max_len);
}

// Resolves a flag against its config key and records the absolute path in the
// config so the manifest alone can replay the run.
std::string require_path(const std::string& flag, const std::string& from_flag,
                         std::string& config_field) {
  const std::string p = from_flag.empty() ? config_field : from_flag;
  if (p.empty()) throw ConfigError(flag, "a path is required");
  if (!fs::exists(p)) throw ConfigError(flag, "file does not exist: " + p);
  config_field = fs::absolute(p).lexically_normal().string();
  return config_field;
}

// ---------------------------------------------------------------------------

int cmd_gen_synthetic(const Common& c, std::optional<std::size_t> pairs,
                      std::optional<std::size_t> n_dev, std::optional<std::uint64_t> seed,
                      const std::vector<std::string>& argv) {
  RunConfig cfg = resolve(c);
  if (pairs) cfg.synthetic.pairs = *pairs;
  if (n_dev) cfg.synthetic.dev = *n_dev;
  if (seed) cfg.synthetic.seed = *seed;
  if (cfg.synthetic.dev >= cfg.synthetic.pairs) {
    throw ConfigError("synthetic.dev", "must be smaller than synthetic.pairs");
  }
  const SyntheticCorpus corpus = generate_synthetic(cfg.synthetic.seed, cfg.synthetic.pairs);
  const std::size_t n_train = cfg.synthetic.pairs - cfg.synthetic.dev;
  const std::vector<ParallelPair> train(corpus.pairs.begin(), corpus.pairs.begin() + n_train);
  const std::vector<ParallelPair> dev(corpus.pairs.begin() + n_train, corpus.pairs.end());
  std::vector<AlignmentLink> train_links, dev_links;
  for (AlignmentLink l : corpus.alignments) {
    if (l.pair_index < n_train) {
      train_links.push_back(l);
    } else {
      l.pair_index -= n_train;
      dev_links.push_back(l);
    }
  }
  Staging st(c.out);
  write_pairs_tsv(st.file("train.tsv"), train);
  write_pairs_tsv(st.file("dev.tsv"), dev);
  write_alignments(st.file("train.align"), train_links, train.size());
  write_alignments(st.file("dev.align"), dev_links, dev.size());
  build_vocab(corpus.pairs).save(st.file("vocab.txt"));
  std::string cipher;
  for (const auto& [s, t] : corpus.cipher) cipher += s + "\t" + t + "\n";
  write_text(st.file("cipher.tsv"), cipher);
  write_manifest(st, "gen-synthetic", argv, cfg, cfg.synthetic.seed);
  st.commit();
  std::cout << "wrote " << train.size() << " training and " << dev.size() << " dev pairs to "
            << c.out << "\n";
  return kExitOk;
}

int cmd_filter(const Common& c, const std::string& input, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve(c);
  cfg.validate();
  const auto pairs = read_pairs_tsv(input);
  const SimilarityFn sim = cfg.filter_similarity == "trigram" ? SimilarityFn(trigram_similarity)
                                                              : SimilarityFn(stored_similarity);
  const FilterResult result = filter_pipeline(pairs, cfg.filter, sim);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  Staging st(c.out);
  write_pairs_tsv(st.file("filtered.tsv"), result.pairs);
  write_text(st.file("filter_stats.txt"), result.stats.to_text());
  write_text(st.file("filter_stats.csv"), result.stats.to_csv());
  write_manifest(st, "filter-data", argv, cfg, cfg.filter.seed);
  st.commit();
  std::cout << result.stats.to_text();
  return kExitOk;
}

Vocab vocab_for_training(RunConfig& cfg, const std::string& vocab_flag,
                         const std::vector<ParallelPair>& train,
                         const std::vector<ParallelPair>& dev) {
  if (!vocab_flag.empty() || !cfg.vocab_path.empty()) {
    return Vocab::load(require_path("paths.vocab", vocab_flag, cfg.vocab_path));
  }
  std::vector<ParallelPair> all = train;
  all.insert(all.end(), dev.begin(), dev.end());
  return build_vocab(all);
}

int cmd_train(const Common& c, const std::string& train_flag, const std::string& dev_flag,
              const std::string& vocab_flag, const std::vector<std::string>& argv) {
  RunConfig cfg = resolve(c);
  const std::string train_path = require_path("paths.train", train_flag, cfg.train_path);
  const std::string dev_path = require_path("paths.dev", dev_flag, cfg.dev_path);
  cfg.validate();
  const auto train_pairs = read_pairs_tsv(train_path);
  const auto dev_pairs = read_pairs_tsv(dev_path);
  const Vocab vocab = vocab_for_training(cfg, vocab_flag, train_pairs, dev_pairs);
  cfg.model.vocab_size = vocab.size();
  cfg.validate();

  Staging st(c.out);
  BackpackModel model(cfg.model, cfg.train.seed);
  TrainHooks hooks;
  hooks.checkpoint_dir = st.dir().string();
  hooks.on_eval = [](const MetricsRow& r, const BackpackModel&) {
    std::fprintf(stderr, "step %zu %s l_total=%.4f recall=%.3f/%.3f entropy=%.3f ppl=%.2f\n",
                 r.step, phase_name(r.phase).c_str(), r.l_total, r.eval.recall_s2t,
                 r.eval.recall_t2s, r.eval.entropy_tgt, r.eval.ppl_tgt);
  };
  const TrainResult result =
      train(model, tokenize_pairs(train_pairs, vocab, cfg.train.max_len),
            tokenize_pairs(dev_pairs, vocab, cfg.train.max_len), cfg.train, cfg.schedule,
            vocab.pad_id(), hooks);
  st.file("latest.ckpt");
  st.file("final.ckpt");
  if (fs::exists(st.dir() / "polish_start.ckpt")) st.file("polish_start.ckpt");
  write_metrics_csv(st.file("metrics.csv"), result.rows);
  vocab.save(st.file("vocab.txt"));
  write_manifest(st, "train", argv, cfg, cfg.train.seed,
                 {{"polish_start_step", std::to_string(result.polish_start_step)}});
  st.commit();
  const MetricsRow& last = result.rows.back();
  std::cout << "final recall_s2t=" << last.eval.recall_s2t << " recall_t2s=" << last.eval.recall_t2s
            << " entropy=" << last.eval.entropy_tgt << " ppl=" << last.eval.ppl_tgt << "\n";
  return kExitOk;
}

struct ModelInputs {
  std::string checkpoint, vocab, dev;
};

void add_model_inputs(CLI::App* cmd, ModelInputs& m, bool needs_dev) {
  cmd->add_option("--checkpoint", m.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--vocab", m.vocab, "vocabulary file")->check(CLI::ExistingFile);
  if (needs_dev) cmd->add_option("--dev", m.dev, "evaluation pairs (TSV)")->check(CLI::ExistingFile);
}

int cmd_evaluate(const Common& c, const ModelInputs& in, const std::vector<std::string>& argv) {
  RunConfig cfg = resolve(c);
  const std::string dev_path = require_path("paths.dev", in.dev, cfg.dev_path);
  const Vocab vocab = Vocab::load(require_path("paths.vocab", in.vocab, cfg.vocab_path));
  const BackpackModel model = load_checkpoint(in.checkpoint);
  cfg.model = model.config();
  cfg.validate();
  const EvalMetrics m = evaluate(model, load_tokenized(dev_path, vocab, cfg.train.max_len),
                                 cfg.train, cfg.schedule.tau_pool, vocab.pad_id());
  std::ostringstream csv;
  csv << "recall_s2t,recall_t2s,entropy_tgt,ppl_tgt,ce_tgt,target_tokens\n"
      << fmt(m.recall_s2t) << ',' << fmt(m.recall_t2s) << ',' << fmt(m.entropy_tgt) << ','
      << fmt(m.ppl_tgt) << ',' << fmt(m.ce_tgt) << ',' << m.target_tokens << "\n";
  Staging st(c.out);
  write_text(st.file("eval.csv"), csv.str());
  write_manifest(st, "evaluate", argv, cfg, model.seed());
  st.commit();
  std::cout << csv.str();
  return kExitOk;
}

int cmd_ablate(const Common& c, const ModelInputs& in, const std::vector<std::string>& modes,
               const std::vector<std::string>& argv) {
  RunConfig cfg = resolve(c);
  const std::string dev_path = require_path("paths.dev", in.dev, cfg.dev_path);
  const Vocab vocab = Vocab::load(require_path("paths.vocab", in.vocab, cfg.vocab_path));
  const BackpackModel model = load_checkpoint(in.checkpoint);
  cfg.model = model.config();
  cfg.validate();
  std::vector<MixtureMode> parsed;
  if (modes.empty()) {
    parsed = {MixtureMode::full(), MixtureMode::topk(1), MixtureMode::uniform()};
  } else {
    for (const auto& m : modes) {
      try {
        parsed.push_back(MixtureMode::parse(m));
      } catch (const InvalidArgument& e) {
        throw ConfigError("--modes", e.what());
      }
    }
  }
  const auto pairs = load_tokenized(dev_path, vocab, cfg.train.max_len);
  std::ostringstream csv;
  csv << "mode,ce,tokens\n";
  for (const MixtureMode& m : parsed) {
    const CrossEntropyResult r = cross_entropy_eval(model, pairs, m, vocab.pad_id());
    csv << m.name() << ',' << fmt(r.ce) << ',' << r.tokens << "\n";
  }
  Staging st(c.out);
  write_text(st.file("mixture_ablation.csv"), csv.str());
  write_manifest(st, "ablate-mixture", argv, cfg, model.seed());
  st.commit();
  std::cout << csv.str();
  return kExitOk;
}

struct AnalysisInputs {
  std::string checkpoint, control, vocab, pairs, alignments, stop_list;
};

void add_analysis_inputs(CLI::App* cmd, AnalysisInputs& a) {
  cmd->add_option("--checkpoint", a.checkpoint, "adapted model checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--control", a.control, "control model checkpoint")->check(CLI::ExistingFile);
  cmd->add_option("--vocab", a.vocab, "vocabulary file")->check(CLI::ExistingFile);
  cmd->add_option("--pairs", a.pairs, "bitext TSV the alignments refer to")->required()->check(CLI::ExistingFile);
  cmd->add_option("--alignments", a.alignments, "Pharaoh alignment file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--stop-list", a.stop_list, "words to exclude")->check(CLI::ExistingFile);
}

struct AnalysisData {
  RunConfig cfg;
  Vocab vocab;
  BackpackModel model;
  std::optional<BackpackModel> control;
  std::vector<WordPair> words;
  std::size_t dropped_links = 0;
};

AnalysisData load_analysis(const Common& c, const AnalysisInputs& in) {
  RunConfig cfg = resolve(c);
  Vocab vocab = Vocab::load(require_path("paths.vocab", in.vocab, cfg.vocab_path));
  BackpackModel model = load_checkpoint(in.checkpoint);
  cfg.model = model.config();
  cfg.validate();
  std::optional<BackpackModel> control;
  if (!in.control.empty()) {
    control = load_checkpoint(in.control);
    if (control->config().n_senses != model.config().n_senses ||
        control->config().d_model != model.config().d_model ||
        control->config().vocab_size != model.config().vocab_size) {
      throw ConfigError("--control", "control model shape differs from the adapted model");
    }
  }
  const AlignmentSet links = load_alignments(in.alignments);
  WordPairOptions opts;
  opts.min_frequency = cfg.min_word_frequency;
  const std::string stop = in.stop_list.empty() ? cfg.stop_list_path : in.stop_list;
  if (!stop.empty()) opts.stop_words = read_stop_list(stop);
  auto words = collect_word_pairs(read_pairs_tsv(in.pairs), links.links, vocab, opts);
  return {std::move(cfg), std::move(vocab), std::move(model), std::move(control), std::move(words),
          links.dropped};
}

int cmd_topology(const Common& c, const AnalysisInputs& in, const std::vector<std::string>& argv) {
  AnalysisData d = load_analysis(c, in);
  const auto pairs = sense_matrix_pairs(d.model, d.words);
  std::vector<SenseMatrixPair> control_pairs;
  if (d.control) control_pairs = sense_matrix_pairs(*d.control, d.words);
  const TopologyReport r = topology_report(pairs, d.control ? &control_pairs : nullptr,
                                           d.cfg.bootstrap_iters, d.model.seed());
  std::ostringstream csv, summary;
  csv << "src_word,tgt_word,rho" << (d.control ? ",control_rho" : "") << "\n";
  for (std::size_t i = 0; i < r.rhos.size(); ++i) {
    const WordPair& w = d.words[r.indices[i]];
    csv << d.vocab.token(w.src_token) << ',' << d.vocab.token(w.tgt_token) << ',' << fmt(r.rhos[i]);
    if (d.control) csv << ',' << fmt((*r.control_rhos)[i]);
    csv << "\n";
  }
  summary << "word_pairs " << d.words.size() << "\n"
          << "scored " << r.rhos.size() << "\n"
          << "skipped_degenerate " << r.skipped_degenerate << "\n"
          << "skipped_undefined " << r.skipped_undefined << "\n"
          << "skipped_small_k " << r.skipped_small_k << "\n"
          << "alignment_links_dropped " << d.dropped_links << "\n"
          << "mean_rho " << fmt(r.mean_rho) << "\n"
          << "bootstrap_mean_rho " << fmt(r.bootstrap_mean_rho) << "\n";
  if (d.control) {
    summary << "control_mean_rho " << fmt(*r.control_mean_rho) << "\n"
            << "delta_vs_control " << fmt(*r.delta_vs_control) << "\n"
            << "p_value " << fmt(*r.p_value) << "\n";
  }
  Staging st(c.out);
  write_text(st.file("topology.csv"), csv.str());
  write_text(st.file("topology_summary.txt"), summary.str());
  write_manifest(st, "analyze-topology", argv, d.cfg, d.model.seed());
  st.commit();
  std::cout << summary.str();
  return kExitOk;
}

int cmd_procrustes(const Common& c, const AnalysisInputs& in, const std::vector<std::string>& argv) {
  AnalysisData d = load_analysis(c, in);
  std::ostringstream csv, summary;
  csv << "model,n_pairs,skipped,mean_cosine,rank_deficient,subsample_means\n";
  auto run_one = [&](const std::string& label, const BackpackModel& m) {
    const MixtureMatrices mm = mixture_matrices(m, d.words, d.cfg.schedule.tau_pool);
    if (mm.t.rows() == 0) throw InvalidArgument("no usable word pairs for Procrustes");
    const ProcrustesReport r =
        procrustes_align(mm.t, mm.e, d.cfg.procrustes_subsample, 5, d.model.seed());
    std::string subs;
    for (std::size_t i = 0; i < r.subsample_means.size(); ++i) {
      subs += (i ? ";" : "") + fmt(r.subsample_means[i]);
    }
    csv << label << ',' << r.n_pairs << ',' << mm.skipped << ',' << fmt(r.mean_cosine) << ','
        << (r.rank_deficient ? 1 : 0) << ',' << subs << "\n";
    summary << label << "_mean_cosine " << fmt(r.mean_cosine) << "\n"
            << label << "_n_pairs " << r.n_pairs << "\n";
    return r.mean_cosine;
  };
  const double adapted = run_one("adapted", d.model);
  if (d.control) {
    const double control = run_one("control", *d.control);
    summary << "delta_cosine " << fmt(adapted - control) << "\n";
  }
  Staging st(c.out);
  write_text(st.file("procrustes.csv"), csv.str());
  write_text(st.file("procrustes_summary.txt"), summary.str());
  write_manifest(st, "analyze-procrustes", argv, d.cfg, d.model.seed());
  st.commit();
  std::cout << summary.str();
  return kExitOk;
}

int cmd_score(const Common& c, const ModelInputs& in, const std::string& items_path, bool grid,
              const std::vector<std::string>& argv) {
  RunConfig cfg = resolve(c);
  const Vocab vocab = Vocab::load(require_path("paths.vocab", in.vocab, cfg.vocab_path));
  const BackpackModel model = load_checkpoint(in.checkpoint);
  cfg.model = model.config();
  cfg.validate();
  const auto items = read_mc_items(items_path);
  if (items.empty()) throw InvalidArgument("no MC items in " + items_path);
  const BackpackScorer scorer(model, vocab);
  const auto stats = item_stats(items, scorer);
  Staging st(c.out);
  std::ostringstream summary;
  if (grid) {
    const GridResult g = grid_search(items, stats);
    write_grid_csv(st.file("grid.csv"), g);
    summary << "best_scheme " << g.best.scheme_name() << "\n"
            << "best_lambda " << fmt(g.best.lambda) << "\n"
            << "best_alpha " << fmt(g.best.alpha) << "\n"
            << "best_accuracy " << fmt(g.best_accuracy) << "\n";
    write_text(st.file("grid_best.txt"), summary.str());
    write_manifest(st, "grid-search", argv, cfg, model.seed());
  } else {
    write_mc_results_csv(st.file("mc_results.csv"), items, stats, cfg.score);
    summary << "items " << items.size() << "\n"
            << "accuracy " << fmt(accuracy(items, stats, cfg.score)) << "\n";
    write_text(st.file("mc_summary.txt"), summary.str());
    write_manifest(st, "score-mc", argv, cfg, model.seed());
  }
  st.commit();
  std::cout << summary.str();
  return kExitOk;
}

int cmd_plot(const Common& c, const std::string& metrics_path, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve(c);
  const auto rows = read_metrics_csv(metrics_path);
  if (rows.empty()) throw InvalidArgument("metrics file has no rows");
  Series entropy{"entropy_tgt", {}, {}}, s2t{"recall_s2t", {}, {}}, t2s{"recall_t2s", {}, {}};
  std::vector<double> markers;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = static_cast<double>(rows[i].step);
    entropy.x.push_back(x);
    entropy.y.push_back(rows[i].eval.entropy_tgt);
    s2t.x.push_back(x);
    s2t.y.push_back(rows[i].eval.recall_s2t);
    t2s.x.push_back(x);
    t2s.y.push_back(rows[i].eval.recall_t2s);
    if (i > 0 && rows[i].phase != rows[i - 1].phase) markers.push_back(x);
  }
  Staging st(c.out);
  write_text(st.file("entropy.svg"),
             line_chart_svg({entropy}, {"(a) target sense entropy", "step", "entropy (nats)", 0.0,
                                        0.0, markers}));
  write_text(st.file("recall_s2t.svg"),
             line_chart_svg({s2t}, {"(b) src->tgt recall@1", "step", "recall@1", 0.0, 1.0, markers}));
  write_text(st.file("recall_t2s.svg"),
             line_chart_svg({t2s}, {"(c) tgt->src recall@1", "step", "recall@1", 0.0, 1.0, markers}));
  write_manifest(st, "plot", argv, cfg, cfg.train.seed);
  st.commit();
  return kExitOk;
}

int cmd_generate(const Common& c, const ModelInputs& in, const std::string& prompt,
                 std::size_t max_tokens, const std::vector<std::string>& argv) {
  RunConfig cfg = resolve(c);
  const Vocab vocab = Vocab::load(require_path("paths.vocab", in.vocab, cfg.vocab_path));
  const BackpackModel model = load_checkpoint(in.checkpoint);
  cfg.model = model.config();
  std::vector<int> seq{vocab.eos_id()};
  for (const auto& w : split_whitespace(prompt)) seq.push_back(vocab.id(w));
  const std::size_t prompt_len = seq.size();
  ad::NoGradGuard no_grad;
  while (seq.size() < model.config().max_positions && seq.size() - prompt_len < max_tokens) {
    const LmOutput out = model.forward_lm(seq, full_mask(seq.size()));
    const std::size_t last = seq.size() - 1, V = out.logits.cols();
    std::size_t best = 0;
    for (std::size_t v = 1; v < V; ++v) {
      if (out.logits.at(last, v) > out.logits.at(last, best)) best = v;
    }
    const int next = static_cast<int>(best);
    if (next == vocab.eos_id()) break;
    seq.push_back(next);
  }
  const std::string text = detokenize(std::span<const int>(seq).subspan(1), vocab);
  Staging st(c.out);
  write_text(st.file("generation.txt"), text + "\n");
  write_manifest(st, "generate", argv, cfg, model.seed());
  st.commit();
  std::cout << text << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& argv) {
  CLI::App app{"sense-decomposed language model adaptation toolkit", "sensia"};
  app.require_subcommand(1);

  Common common;
  std::optional<std::size_t> syn_pairs, syn_dev;
  std::optional<std::uint64_t> syn_seed;
  auto* gen = app.add_subcommand("gen-synthetic", "write a seeded synthetic cipher bitext");
  add_common(gen, common);
  gen->add_option("--pairs", syn_pairs, "total number of pairs");
  gen->add_option("--dev", syn_dev, "pairs held out for the dev split");
  gen->add_option("--seed", syn_seed, "generator seed");

  std::string filter_input;
  auto* filt = app.add_subcommand("filter-data", "run the bitext filtering pipeline");
  add_common(filt, common);
  filt->add_option("--input", filter_input, "input TSV")->required()->check(CLI::ExistingFile);

  std::string train_path, dev_path, vocab_path;
  auto* tr = app.add_subcommand("train", "adapt a model on a bitext");
  add_common(tr, common);
  tr->add_option("--train", train_path, "training pairs (TSV)")->check(CLI::ExistingFile);
  tr->add_option("--dev", dev_path, "dev pairs (TSV)")->check(CLI::ExistingFile);
  tr->add_option("--vocab", vocab_path, "vocabulary file")->check(CLI::ExistingFile);

  ModelInputs model_in;
  auto* ev = app.add_subcommand("evaluate", "recall@1, sense entropy and perplexity");
  add_common(ev, common);
  add_model_inputs(ev, model_in, true);

  std::vector<std::string> modes;
  auto* ab = app.add_subcommand("ablate-mixture", "cross-entropy under sense-mixture overrides");
  add_common(ab, common);
  add_model_inputs(ab, model_in, true);
  ab->add_option("--modes", modes, "full, topK, uniform")->delimiter(',');

  AnalysisInputs analysis_in;
  auto* topo = app.add_subcommand("analyze-topology", "per-word sense topology correlation");
  add_common(topo, common);
  add_analysis_inputs(topo, analysis_in);
  auto* proc = app.add_subcommand("analyze-procrustes", "orthogonal Procrustes alignment");
  add_common(proc, common);
  add_analysis_inputs(proc, analysis_in);

  std::string items_path;
  auto* score = app.add_subcommand("score-mc", "score multiple-choice items");
  add_common(score, common);
  add_model_inputs(score, model_in, false);
  score->add_option("--items", items_path, "items TSV")->required()->check(CLI::ExistingFile);
  auto* grid = app.add_subcommand("grid-search", "search scoring parameters on validation items");
  add_common(grid, common);
  add_model_inputs(grid, model_in, false);
  grid->add_option("--items", items_path, "items TSV")->required()->check(CLI::ExistingFile);

  std::string metrics_path;
  auto* plot = app.add_subcommand("plot", "render metrics curves as SVG");
  add_common(plot, common);
  plot->add_option("--metrics", metrics_path, "metrics CSV")->required()->check(CLI::ExistingFile);

  std::string prompt;
  std::size_t max_tokens = 20;
  auto* gen_text = app.add_subcommand("generate", "greedy continuation of a prompt");
  add_common(gen_text, common);
  add_model_inputs(gen_text, model_in, false);
  gen_text->add_option("--prompt", prompt, "prompt text")->required();
  gen_text->add_option("--max-tokens", max_tokens, "maximum new tokens");

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_synthetic(common, syn_pairs, syn_dev, syn_seed, argv);
    if (*filt) return cmd_filter(common, filter_input, argv);
    if (*tr) return cmd_train(common, train_path, dev_path, vocab_path, argv);
    if (*ev) return cmd_evaluate(common, model_in, argv);
    if (*ab) return cmd_ablate(common, model_in, modes, argv);
    if (*topo) return cmd_topology(common, analysis_in, argv);
    if (*proc) return cmd_procrustes(common, analysis_in, argv);
    if (*score) return cmd_score(common, model_in, items_path, false, argv);
    if (*grid) return cmd_score(common, model_in, items_path, true, argv);
    if (*plot) return cmd_plot(common, metrics_path, argv);
    if (*gen_text) return cmd_generate(common, model_in, prompt, max_tokens, argv);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace sensia::cli
