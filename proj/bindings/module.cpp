#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dsd/baseline.hpp"
#include "dsd/bias_space.hpp"
#include "dsd/cli.hpp"
#include "dsd/downstream.hpp"
#include "dsd/dsd_net.hpp"
#include "dsd/embedding.hpp"
#include "dsd/error.hpp"
#include "dsd/metrics.hpp"

namespace py = pybind11;
using namespace dsd;

namespace {

py::array_t<double> matrix_to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  auto buf = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) buf(i, j) = m(i, j);
  return out;
}

TrainConfig config_from_args(double lambda, double lr, int batch, int epochs, int blocks,
                             const std::string& optimizer, std::uint64_t seed,
                             int neutral_sample) {
  TrainConfig cfg;
  cfg.lambda = lambda;
  cfg.lr = lr;
  cfg.batch_size = batch;
  cfg.epochs = epochs;
  cfg.blocks = blocks;
  cfg.optimizer = optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
  cfg.seed = seed;
  cfg.neutral_sample = neutral_sample;
  return cfg;
}

py::dict manifest_to_dict(const RunManifest& man) {
  py::dict d;
  d["seed"] = man.seed;
  d["method"] = man.method;
  d["optimizer"] = man.optimizer;
  d["lambda"] = man.lambda;
  d["lr"] = man.lr;
  d["batch_size"] = man.batch_size;
  d["epochs"] = man.epochs;
  d["blocks"] = man.blocks;
  d["vocab"] = man.vocab;
  d["dim"] = man.dim;
  d["neutral_count"] = man.neutral_count;
  d["subspace_k"] = man.subspace_k;
  d["epoch_total"] = man.epoch_total;
  d["epoch_norm1"] = man.epoch_norm1;
  d["epoch_norm2"] = man.epoch_norm2;
  d["gram_drift"] = man.gram_drift;
  d["wall_seconds"] = man.wall_seconds;
  return d;
}

py::dict mac_to_dict(const MacReport& r) {
  py::dict d;
  d["mac"] = r.mac;
  d["n_pairs"] = r.n_pairs;
  d["excluded"] = r.excluded;
  py::list pairs;
  for (const auto& p : r.per_pair)
    pairs.append(py::make_tuple(p.target, p.attribute_set, p.distance));
  d["per_pair"] = pairs;
  return d;
}

py::dict score_to_dict(const ScoreReport& r) {
  py::dict d;
  d["score"] = r.score;
  d["counted"] = r.counted;
  d["excluded"] = r.excluded;
  d["ties"] = r.ties;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Word-embedding debiasing: linear baseline and DeepSoftDebias residual nets, "
            "plus MAC / stereotype / crows / downstream metrics";

  py::register_exception<Error>(m, "DsdError");

  py::class_<EmbeddingSet>(m, "EmbeddingSet")
      .def_property_readonly("vocab", &EmbeddingSet::vocab)
      .def_property_readonly("dim", &EmbeddingSet::dim)
      .def_property_readonly("name", &EmbeddingSet::name)
      .def("__len__", &EmbeddingSet::size)
      .def("find", [](const EmbeddingSet& s, const std::string& tok) { return s.find(tok); })
      .def("matrix", [](const EmbeddingSet& s) { return matrix_to_numpy(s.matrix()); })
      .def("row", [](const EmbeddingSet& s, const std::string& tok) {
        auto row = s.matrix().row(s.at(tok));
        return std::vector<double>(row.begin(), row.end());
      });

  py::class_<BiasSpec>(m, "BiasSpec")
      .def_readonly("category", &BiasSpec::category)
      .def_readonly("targets", &BiasSpec::targets)
      .def_property_readonly("groups", [](const BiasSpec& s) { return s.groups; })
      .def_property_readonly("attribute_sets", [](const BiasSpec& s) { return s.attribute_sets; });

  py::class_<BiasSubspace>(m, "BiasSubspace")
      .def_property_readonly("k", &BiasSubspace::k)
      .def_property_readonly("dim", &BiasSubspace::dim)
      .def_property_readonly("basis", [](const BiasSubspace& s) { return matrix_to_numpy(s.basis); })
      .def_readonly("source_tokens", &BiasSubspace::source_tokens);

  m.def("load_embeddings", &load_word2vec_text, py::arg("path"));
  m.def("save_embeddings", &save_word2vec_text, py::arg("set"), py::arg("path"));
  m.def("normalize_rows", py::overload_cast<const EmbeddingSet&>(&normalize_rows));
  m.def("tokenize",
        [](const std::string& text) { return tokenize(text, TokenizerConfig{}); });
  m.def("sentence_vector", [](const EmbeddingSet& set, const std::string& text) -> py::object {
    auto sv = sentence_vector(set, text);
    if (!sv) return py::none();
    return py::make_tuple(sv->vector, sv->used_tokens, sv->skipped_tokens);
  });
  m.def("cosine", [](const std::vector<double>& u, const std::vector<double>& v) {
    return cosine(std::span<const double>(u), std::span<const double>(v));
  });

  m.def("load_bias_spec", &load_bias_spec, py::arg("path"));
  m.def("build_subspace", &build_subspace, py::arg("set"), py::arg("spec"));
  m.def("neutral_indices", [](const EmbeddingSet& set, const BiasSpec& spec) {
    return neutral_set(set, spec).indices;
  });
  m.def("direct_bias", [](const EmbeddingSet& set, const std::string& word, const std::string& a,
                          const std::string& b) { return direct_bias(set, word, {a, b}); });
  m.def("projection_energy", [](const EmbeddingSet& set, const BiasSubspace& sub) {
    return projection_energy(set.matrix(), sub);
  });

  m.def("default_hypers", [](int dim) {
    const Hypers h = default_hypers(dim);
    return py::make_tuple(h.blocks, h.lr, h.batch, h.epochs);
  });

  m.def(
      "debias",
      [](const EmbeddingSet& set, const BiasSpec& spec, const std::string& method, double lambda,
         double lr, int batch, int epochs, int blocks, const std::string& optimizer,
         std::uint64_t seed, int neutral_sample) {
        const BiasSubspace sub = build_subspace(set, spec);
        const NeutralSet neutral = neutral_set(set, spec);
        TrainConfig cfg = config_from_args(lambda, lr, batch, epochs, blocks, optimizer, seed,
                                           neutral_sample);
        if (method == "baseline") {
          BaselineResult res = train_baseline(set, sub, neutral, cfg);
          return py::make_tuple(res.debiased, manifest_to_dict(res.manifest));
        }
        if (method != "dsd") fail_usage("method must be 'baseline' or 'dsd'");
        DsdResult res = train_dsd(set, sub, neutral, cfg);
        return py::make_tuple(res.debiased, manifest_to_dict(res.manifest));
      },
      py::arg("set"), py::arg("spec"), py::arg("method") = "dsd", py::arg("lambda_") = 0.2,
      py::arg("lr") = 0.0, py::arg("batch") = 0, py::arg("epochs") = -1, py::arg("blocks") = 0,
      py::arg("optimizer") = "adam", py::arg("seed") = 0, py::arg("neutral_sample") = 0);

  m.def("mac", [](const EmbeddingSet& set, const BiasSpec& spec) { return mac_to_dict(mac(set, spec)); });
  m.def(
      "mac_significance",
      [](const EmbeddingSet& before, const EmbeddingSet& after, const BiasSpec& spec, int n_perm,
         std::uint64_t seed) {
        return mac_significance(mac(before, spec), mac(after, spec), n_perm, seed);
      },
      py::arg("before"), py::arg("after"), py::arg("spec"), py::arg("n_perm") = 10000,
      py::arg("seed") = 1);
  m.def("stereotype_score", [](const EmbeddingSet& set, const std::string& path) {
    return score_to_dict(stereotype_score(set, load_stereo_examples(path)));
  });
  m.def("crows_score", [](const EmbeddingSet& set, const std::string& path) {
    return score_to_dict(crows_score(set, load_crows_pairs(path)));
  });

  m.def(
      "train_eval",
      [](const EmbeddingSet& set, const std::string& corpus_path, std::uint64_t seed) {
        return train_eval(set, load_corpus_tsv(corpus_path), seed);
      },
      py::arg("set"), py::arg("corpus_path"), py::arg("seed") = 0);
  m.def(
      "downstream_delta",
      [](const EmbeddingSet& biased, const EmbeddingSet& debiased, const std::string& corpus_path,
         std::uint64_t seed) {
        const DeltaReport r = downstream_delta(biased, debiased, load_corpus_tsv(corpus_path), seed);
        py::dict d;
        d["acc_biased"] = r.acc_biased;
        d["acc_debiased"] = r.acc_debiased;
        d["delta"] = r.delta;
        d["seed"] = r.seed;
        d["excluded"] = r.excluded;
        return d;
      },
      py::arg("biased"), py::arg("debiased"), py::arg("corpus_path"), py::arg("seed") = 0);

  m.def("run_cli", [](const std::vector<std::string>& args) { return cli::run(args); },
        "Run the dsd command line (debias / eval / ablate); returns the exit code");
}
