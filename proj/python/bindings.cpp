#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sensia/ablation.hpp"
#include "sensia/checkpoint.hpp"
#include "sensia/config.hpp"
#include "sensia/corpus.hpp"
#include "sensia/errors.hpp"
#include "sensia/geometry.hpp"
#include "sensia/objectives.hpp"
#include "sensia/schedule.hpp"
#include "sensia/trainer.hpp"

namespace py = pybind11;
using namespace sensia;

namespace {

// Python side passes pairs as (src, tgt) or (src, tgt, corpus, similarity).
std::vector<ParallelPair> to_pairs(const py::sequence& rows) {
  std::vector<ParallelPair> out;
  out.reserve(rows.size());
  for (const auto& item : rows) {
    const auto row = item.cast<py::sequence>();
    if (row.size() < 2 || row.size() > 4) {
      throw py::value_error("a pair is (src, tgt[, corpus[, similarity]])");
    }
    ParallelPair p;
    p.src_text = row[0].cast<std::string>();
    p.tgt_text = row[1].cast<std::string>();
    if (row.size() >= 3) p.source_corpus = row[2].cast<std::string>();
    if (row.size() == 4 && !row[3].is_none()) p.similarity = row[3].cast<double>();
    out.push_back(std::move(p));
  }
  return out;
}

py::list from_pairs(const std::vector<ParallelPair>& pairs) {
  py::list out;
  for (const auto& p : pairs) {
    py::object sim = p.similarity ? py::object(py::float_(*p.similarity)) : py::none();
    out.append(py::make_tuple(p.src_text, p.tgt_text, p.source_corpus, sim));
  }
  return out;
}

py::tuple weights_tuple(const LossWeights& w) { return py::make_tuple(w.sns, w.ctx, w.lm); }

py::dict metrics_dict(const EvalMetrics& m) {
  py::dict d;
  d["recall_s2t"] = m.recall_s2t;
  d["recall_t2s"] = m.recall_t2s;
  d["entropy_tgt"] = m.entropy_tgt;
  d["ppl_tgt"] = m.ppl_tgt;
  d["ce_tgt"] = m.ce_tgt;
  d["target_tokens"] = m.target_tokens;
  return d;
}

Eigen::MatrixXd tensor_matrix(const ad::Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  }
  return m;
}

ad::Tensor matrix_tensor(const Eigen::MatrixXd& m) {
  std::vector<double> v(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = m(i, j);
  }
  return ad::Tensor::from({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                          std::move(v));
}

}  // namespace

PYBIND11_MODULE(_sensia, m) {
  m.doc() = "Sense-decomposed Backpack language model core";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<PreconditionViolation>(m, "PreconditionViolation", PyExc_ValueError);
  py::register_exception<InvalidBatch>(m, "InvalidBatch", PyExc_ValueError);
  py::register_exception<InvalidToken>(m, "InvalidToken", PyExc_IndexError);
  py::register_exception<EmptySequence>(m, "EmptySequence", PyExc_ValueError);
  py::register_exception<DegenerateVector>(m, "DegenerateVector", PyExc_ArithmeticError);
  py::register_exception<UndefinedCorrelation>(m, "UndefinedCorrelation", PyExc_ArithmeticError);
  py::register_exception<NonFiniteLoss>(m, "NonFiniteLoss", PyExc_ArithmeticError);

  py::class_<RunConfig>(m, "Config")
      .def(py::init<>())
      .def_static("desk", &desk_config)
      .def_static("parse", [](const std::string& text) { return parse_config(text); })
      .def_static("load", [](const std::string& path) { return load_config(path); })
      // Routed through the parser so derived fields (schedule length, ablation
      // switches) follow the same rules as a config file.
      .def("set",
           [](RunConfig& cfg, const std::string& key, const std::string& value) {
             cfg = parse_config(key + " = " + value + "\n", cfg);
           },
           py::arg("key"), py::arg("value"))
      .def("validate", &RunConfig::validate)
      .def("to_text", &RunConfig::to_text)
      .def("__repr__", &RunConfig::to_text);

  py::class_<Vocab>(m, "Vocab")
      .def_static("from_pairs", [](const py::sequence& rows) { return build_vocab(to_pairs(rows)); })
      .def_static("load", &Vocab::load)
      .def("save", &Vocab::save)
      .def("__len__", &Vocab::size)
      .def("id", &Vocab::id)
      .def("token", &Vocab::token)
      .def_property_readonly("pad_id", &Vocab::pad_id)
      .def_property_readonly("eos_id", &Vocab::eos_id)
      .def("encode", [](const Vocab& v, const std::string& text) { return tokenize(text, v); })
      .def("decode", [](const Vocab& v, const std::vector<int>& ids) { return detokenize(ids, v); });

  py::class_<BackpackModel>(m, "Model")
      .def(py::init([](const RunConfig& cfg, std::size_t vocab_size, std::uint64_t seed) {
             ModelConfig mc = cfg.model;
             mc.vocab_size = vocab_size;
             return BackpackModel(mc, seed);
           }),
           py::arg("config"), py::arg("vocab_size"), py::arg("seed"))
      .def_static("load", &load_checkpoint)
      .def("save", [](const BackpackModel& model, const std::string& path) {
        save_checkpoint(model, path);
      })
      .def_property_readonly("vocab_size", [](const BackpackModel& model) { return model.config().vocab_size; })
      .def_property_readonly("n_senses", [](const BackpackModel& model) { return model.config().n_senses; })
      .def_property_readonly("d_model", [](const BackpackModel& model) { return model.config().d_model; })
      .def_property_readonly("output_tied", &BackpackModel::output_tied)
      .def("parameter_names", [](const BackpackModel& model) {
        std::vector<std::string> names;
        for (const auto& p : model.parameters()) names.push_back(p.name);
        return names;
      })
      .def("senses", [](const BackpackModel& model, int token) { return token_senses(model, token); },
           "K x d sense vectors of one token")
      .def("alpha", [](const BackpackModel& model, const std::vector<int>& ids) {
        ad::NoGradGuard guard;
        const ad::Mask mask(ids.size(), 1);
        return tensor_matrix(model.contextual_mixture(ids, mask).alpha);
      }, "T x (T*K) mixture weights, column j*K + k")
      .def("logits", [](const BackpackModel& model, const std::vector<int>& ids) {
        ad::NoGradGuard guard;
        const ad::Mask mask(ids.size(), 1);
        return tensor_matrix(model.forward_lm(ids, mask).logits);
      });

  m.def("train",
        [](BackpackModel& model, const py::sequence& train_rows, const py::sequence& dev_rows,
           const Vocab& vocab, const RunConfig& cfg) {
          const auto tr = tokenize_pairs(to_pairs(train_rows), vocab, cfg.train.max_len);
          const auto dv = tokenize_pairs(to_pairs(dev_rows), vocab, cfg.train.max_len);
          TrainResult result;
          {
            py::gil_scoped_release release;
            result = train(model, tr, dv, cfg.train, cfg.schedule, vocab.pad_id());
          }
          py::list rows;
          for (const auto& r : result.rows) {
            py::dict d = metrics_dict(r.eval);
            d["step"] = r.step;
            d["phase"] = phase_name(r.phase);
            d["weights"] = weights_tuple(r.weights);
            d["l_total"] = r.l_total;
            d["lr"] = r.lr;
            rows.append(d);
          }
          return rows;
        },
        py::arg("model"), py::arg("train_pairs"), py::arg("dev_pairs"), py::arg("vocab"),
        py::arg("config"), "Train in place; returns the metrics rows");

  m.def("evaluate",
        [](const BackpackModel& model, const py::sequence& dev_rows, const Vocab& vocab,
           const RunConfig& cfg) {
          const auto dv = tokenize_pairs(to_pairs(dev_rows), vocab, cfg.train.max_len);
          return metrics_dict(evaluate(model, dv, cfg.train, cfg.schedule.tau_pool, vocab.pad_id()));
        },
        py::arg("model"), py::arg("dev_pairs"), py::arg("vocab"), py::arg("config"));

  m.def("cross_entropy",
        [](const BackpackModel& model, const py::sequence& rows, const Vocab& vocab,
           const std::string& mode, std::size_t max_len) {
          const auto pairs = tokenize_pairs(to_pairs(rows), vocab, max_len);
          return cross_entropy_eval(model, pairs, MixtureMode::parse(mode), vocab.pad_id()).ce;
        },
        py::arg("model"), py::arg("pairs"), py::arg("vocab"), py::arg("mode") = "full",
        py::arg("max_len") = 32, "Target-side cross-entropy with the sense mixture overridden");

  m.def("info_nce",
        [](const Eigen::MatrixXd& u_src, const Eigen::MatrixXd& u_tgt, double tau) {
          return info_nce_symmetric(matrix_tensor(u_src), matrix_tensor(u_tgt), tau).item();
        },
        py::arg("u_src"), py::arg("u_tgt"), py::arg("tau"));

  m.def("weights_at_progress",
        [](double p, const RunConfig& cfg) {
          const PhaseWeights w = weights_at_progress(p, cfg.schedule);
          return py::make_tuple(phase_name(w.phase), weights_tuple(w.weights));
        },
        py::arg("p"), py::arg("config") = RunConfig{});

  m.def("override_mixture",
        [](const std::vector<double>& pi, const std::string& mode) {
          return override_mixture(pi, MixtureMode::parse(mode));
        },
        py::arg("pi"), py::arg("mode"));

  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) {
    return spearman(x, y);
  });
  m.def("topology_rho", &topology_rho, py::arg("v_src"), py::arg("v_tgt"));
  m.def("procrustes",
        [](const Eigen::MatrixXd& t, const Eigen::MatrixXd& e) {
          const ProcrustesReport r = procrustes_align(t, e);
          return py::make_tuple(r.q, r.mean_cosine);
        },
        py::arg("t"), py::arg("e"), "Returns (Q, mean aligned cosine)");

  m.def("filter_pairs",
        [](const py::sequence& rows, const RunConfig& cfg, const std::string& similarity) {
          const SimilarityFn fn = similarity == "trigram" ? SimilarityFn(trigram_similarity)
                                                          : SimilarityFn(stored_similarity);
          const FilterResult r = filter_pipeline(to_pairs(rows), cfg.filter, fn);
          py::dict stats;
          stats["input"] = r.stats.input;
          stats["duplicates"] = r.stats.duplicates;
          stats["ratio_rejected"] = r.stats.ratio_rejected;
          stats["similarity_rejected"] = r.stats.similarity_rejected;
          stats["cap_removed"] = r.stats.cap_removed;
          stats["sampling_removed"] = r.stats.sampling_removed;
          stats["output"] = r.stats.output;
          return py::make_tuple(from_pairs(r.pairs), stats);
        },
        py::arg("pairs"), py::arg("config") = RunConfig{}, py::arg("similarity") = "stored");

  m.def("generate_synthetic",
        [](std::uint64_t seed, std::size_t n_pairs) {
          return from_pairs(generate_synthetic(seed, n_pairs).pairs);
        },
        py::arg("seed"), py::arg("n_pairs"));
}
