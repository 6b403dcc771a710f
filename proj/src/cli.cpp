#include "dsd/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsd/baseline.hpp"
#include "dsd/bias_space.hpp"
#include "dsd/downstream.hpp"
#include "dsd/dsd_net.hpp"
#include "dsd/embedding.hpp"
#include "dsd/error.hpp"
#include "dsd/manifest.hpp"
#include "dsd/metrics.hpp"

namespace dsd::cli {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

ordered_json file_entry(const std::string& path) {
  ordered_json j;
  j["path"] = path;
  j["digest"] = file_digest(path);
  return j;
}

ordered_json config_json(const RunManifest& man) {
  ordered_json j;
  j["lambda"] = man.lambda;
  j["lr"] = man.lr;
  j["batch_size"] = man.batch_size;
  j["epochs"] = man.epochs;
  j["blocks"] = man.blocks;
  j["optimizer"] = man.optimizer;
  j["neutral_sample"] = man.neutral_sample;
  return j;
}

void write_json(const ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write: " + path);
  out << j.dump(2) << "\n";
}

struct DebiasOpts {
  std::string embeddings, bias_spec, method, out;
  double lambda = 0.2;
  double lr = 0.0;
  int batch = 0;
  int epochs = -1;
  int blocks = 0;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";
  int neutral_sample = 0;
  std::string loss = "anchored";
  bool bias_through_transform = false;
};

TrainConfig make_config(const DebiasOpts& o) {
  TrainConfig cfg;
  cfg.lambda = o.lambda;
  cfg.lr = o.lr;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.blocks = o.blocks;
  cfg.seed = o.seed;
  cfg.neutral_sample = o.neutral_sample;
  cfg.optimizer = o.optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
  cfg.gram_loss = o.loss == "literal-orthonormal" ? GramLoss::literal_orthonormal
                  : o.loss == "gram"               ? GramLoss::batch_gram
                                                   : GramLoss::anchored;
  cfg.bias_through_transform = o.bias_through_transform;
  return cfg;
}

int requested_threads() {
  // Computation is single-threaded; the requested count is recorded in the
  // manifest for provenance.
  if (const char* env = std::getenv("DSD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

// Runs one training and writes embeddings + checkpoint. Returns the manifest.
RunManifest run_training(const EmbeddingSet& set, const BiasSubspace& subspace,
                         const NeutralSet& neutral, const std::string& method, TrainConfig cfg,
                         const std::string& out_path, const std::string& ckpt_path) {
  cfg.divergence_checkpoint_path = ckpt_path;
  RunManifest man;
  if (method == "baseline") {
    BaselineResult res = train_baseline(set, subspace, neutral, cfg);
    save_word2vec_text(res.debiased, out_path);
    save_baseline_checkpoint(res, ckpt_path);
    man = std::move(res.manifest);
  } else {
    DsdResult res = train_dsd(set, subspace, neutral, cfg);
    save_word2vec_text(res.debiased, out_path);
    save_dsd_checkpoint(res.net, nullptr, cfg.resolved(static_cast<int>(set.dim())), ckpt_path);
    man = std::move(res.manifest);
  }
  man.threads = requested_threads();
  return man;
}

ordered_json training_manifest(const RunManifest& man, const NeutralSet& neutral,
                               const std::vector<std::string>& argv, const DebiasOpts& o,
                               const std::string& out_path, const std::string& ckpt_path) {
  ordered_json j;
  j["command"] = "debias";
  j["argv"] = argv;
  j["method"] = man.method;
  j["seed"] = man.seed;
  j["config"] = config_json(man);
  j["config_digest"] = string_digest(j["config"].dump());
  j["inputs"]["embeddings"] = file_entry(o.embeddings);
  j["inputs"]["bias_spec"] = file_entry(o.bias_spec);
  j["outputs"]["embeddings"] = file_entry(out_path);
  j["outputs"]["checkpoint"] = file_entry(ckpt_path);
  j["data"]["vocab"] = man.vocab;
  j["data"]["dim"] = man.dim;
  j["data"]["neutral_count"] = man.neutral_count;
  j["data"]["subspace_k"] = man.subspace_k;
  j["data"]["neutral_policy"] =
      neutral.policy == NeutralPolicy::explicit_list ? "explicit-list" : "vocab-minus-bias-words";
  j["data"]["neutral_warnings"] = neutral.warnings;
  j["losses"]["total"] = man.epoch_total;
  j["losses"]["norm1"] = man.epoch_norm1;
  j["losses"]["norm2"] = man.epoch_norm2;
  // Monotone-smoothed view of the total (running minimum).
  std::vector<double> smoothed;
  double best = std::numeric_limits<double>::infinity();
  for (double v : man.epoch_total) smoothed.push_back(best = std::min(best, v));
  j["losses"]["total_smoothed"] = smoothed;
  j["gram_drift"] = man.gram_drift;
  j["threads"] = man.threads;
  j["wall_seconds"] = man.wall_seconds;
  return j;
}

int cmd_debias(const DebiasOpts& o, const std::vector<std::string>& argv, std::ostream& out) {
  const EmbeddingSet set = load_word2vec_text(o.embeddings);
  const BiasSpec spec = load_bias_spec(o.bias_spec);
  const BiasSubspace subspace = build_subspace(set, spec);
  const NeutralSet neutral = neutral_set(set, spec);

  const std::string ckpt_path = o.out + ".ckpt";
  RunManifest man =
      run_training(set, subspace, neutral, o.method, make_config(o), o.out, ckpt_path);
  const std::string man_path = o.out + ".manifest.json";
  write_json(training_manifest(man, neutral, argv, o, o.out, ckpt_path), man_path);

  out << "debias: method=" << man.method << " optimizer=" << man.optimizer
      << " seed=" << man.seed << "\n";
  out << "  vocab=" << man.vocab << " dim=" << man.dim << " neutral=" << man.neutral_count
      << " k=" << man.subspace_k << "\n";
  out << "  config: lambda=" << man.lambda << " lr=" << man.lr << " batch=" << man.batch_size
      << " epochs=" << man.epochs << " blocks=" << man.blocks << "\n";
  if (!man.epoch_total.empty())
    out << "  loss: first=" << fmt(man.epoch_total.front()) << " last="
        << fmt(man.epoch_total.back()) << " gram_drift=" << fmt(man.gram_drift) << "\n";
  out << "  wrote " << o.out << ", " << ckpt_path << ", " << man_path << "\n";
  return 0;
}

struct EvalOpts {
  std::vector<std::string> embeddings;
  std::string bias_spec;
  std::vector<std::string> metrics;
  std::string stereoset, crows, corpus, out;
  int n_perm = 10000;
  std::uint64_t seed = 1;
};

struct MetricColumn {
  std::optional<MacReport> mac;
  std::optional<ScoreReport> ss;
  std::optional<ScoreReport> crows;
  std::optional<double> downstream_acc;
};

MetricColumn eval_one(const EmbeddingSet& set, const BiasSpec& spec, const EvalOpts& o,
                      const std::vector<StereoExample>& stereo,
                      const std::vector<CrowsPair>& crows_pairs,
                      const std::optional<LabeledCorpus>& corpus) {
  MetricColumn col;
  for (const auto& m : o.metrics) {
    if (m == "mac") col.mac = mac(set, spec);
    else if (m == "ss") col.ss = stereotype_score(set, stereo);
    else if (m == "crows") col.crows = crows_score(set, crows_pairs);
    else if (m == "downstream") col.downstream_acc = train_eval(set, *corpus, o.seed);
  }
  return col;
}

ordered_json column_json(const MetricColumn& col) {
  ordered_json j;
  if (col.mac) {
    j["mac"] = col.mac->mac;
    j["mac_pairs"] = col.mac->n_pairs;
    j["mac_excluded"] = col.mac->excluded;
  }
  if (col.ss) {
    j["ss"] = col.ss->score;
    j["ss_counted"] = col.ss->counted;
    j["ss_excluded"] = col.ss->excluded;
    j["ss_ties"] = col.ss->ties;
  }
  if (col.crows) {
    j["crows"] = col.crows->score;
    j["crows_counted"] = col.crows->counted;
    j["crows_excluded"] = col.crows->excluded;
    j["crows_ties"] = col.crows->ties;
  }
  if (col.downstream_acc) j["downstream_acc"] = *col.downstream_acc;
  return j;
}

int cmd_eval(const EvalOpts& o, const std::vector<std::string>& argv, std::ostream& out) {
  for (const auto& m : o.metrics)
    if (m != "mac" && m != "ss" && m != "crows" && m != "downstream")
      fail_usage("unknown metric '" + m + "' (choose from mac, ss, crows, downstream)");
  if (o.metrics.empty()) fail_usage("--metrics: at least one of mac, ss, crows, downstream");
  auto wants = [&](const std::string& m) {
    for (const auto& x : o.metrics)
      if (x == m) return true;
    return false;
  };
  if (wants("ss") && o.stereoset.empty()) fail_usage("--stereoset required for the ss metric");
  if (wants("crows") && o.crows.empty()) fail_usage("--crows required for the crows metric");
  if (wants("downstream") && o.corpus.empty())
    fail_usage("--corpus required for the downstream metric");

  const BiasSpec spec = load_bias_spec(o.bias_spec);
  std::vector<StereoExample> stereo;
  if (wants("ss")) stereo = load_stereo_examples(o.stereoset);
  std::vector<CrowsPair> crows_pairs;
  if (wants("crows")) crows_pairs = load_crows_pairs(o.crows);
  std::optional<LabeledCorpus> corpus;
  if (wants("downstream")) corpus = load_corpus_tsv(o.corpus);

  const EmbeddingSet biased = load_word2vec_text(o.embeddings[0]);
  std::optional<EmbeddingSet> debiased;
  if (o.embeddings.size() == 2) debiased = load_word2vec_text(o.embeddings[1]);

  const MetricColumn base = eval_one(biased, spec, o, stereo, crows_pairs, corpus);
  std::optional<MetricColumn> other;
  std::optional<double> mac_p;
  std::optional<DeltaReport> down_delta;
  if (debiased) {
    other = eval_one(*debiased, spec, o, stereo, crows_pairs, corpus);
    if (base.mac && other->mac)
      mac_p = mac_significance(*base.mac, *other->mac, o.n_perm, o.seed);
    if (wants("downstream")) down_delta = downstream_delta(biased, *debiased, *corpus, o.seed);
  }

  ordered_json report;
  report["command"] = "eval";
  report["category"] = spec.category;
  report["embeddings"] = o.embeddings;
  report["seed"] = o.seed;
  report["biased"] = column_json(base);
  if (other) {
    report["debiased"] = column_json(*other);
    ordered_json deltas;
    if (base.mac && other->mac) deltas["mac"] = other->mac->mac - base.mac->mac;
    if (base.ss && other->ss) deltas["ss"] = other->ss->score - base.ss->score;
    if (base.crows && other->crows) deltas["crows"] = other->crows->score - base.crows->score;
    if (down_delta) deltas["downstream_acc"] = down_delta->delta;
    report["delta"] = deltas;
    if (mac_p) report["mac_p_value"] = *mac_p;
    if (down_delta) {
      report["downstream"]["acc_biased"] = down_delta->acc_biased;
      report["downstream"]["acc_debiased"] = down_delta->acc_debiased;
      report["downstream"]["excluded"] = down_delta->excluded;
    }
  }

  // Aligned table.
  auto line = [&](const std::string& name, std::optional<double> b, std::optional<double> d,
                  std::optional<double> delta) {
    char buf[160];
    std::string bs = b ? fmt(*b) : "-";
    std::string ds = d ? fmt(*d) : "-";
    std::string es = delta ? fmt(*delta) : "-";
    std::snprintf(buf, sizeof buf, "%-14s %12s %12s %12s\n", name.c_str(), bs.c_str(),
                  ds.c_str(), es.c_str());
    out << buf;
  };
  {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %12s %12s %12s\n", "metric", "biased", "debiased",
                  "delta");
    out << buf;
  }
  if (base.mac)
    line("mac", base.mac->mac, other && other->mac ? std::optional(other->mac->mac) : std::nullopt,
         other && other->mac ? std::optional(other->mac->mac - base.mac->mac) : std::nullopt);
  if (mac_p) line("mac_p_value", std::nullopt, std::nullopt, *mac_p);
  if (base.ss)
    line("ss", base.ss->score, other && other->ss ? std::optional(other->ss->score) : std::nullopt,
         other && other->ss ? std::optional(other->ss->score - base.ss->score) : std::nullopt);
  if (base.crows)
    line("crows", base.crows->score,
         other && other->crows ? std::optional(other->crows->score) : std::nullopt,
         other && other->crows ? std::optional(other->crows->score - base.crows->score)
                               : std::nullopt);
  if (base.downstream_acc)
    line("downstream", *base.downstream_acc,
         other && other->downstream_acc ? other->downstream_acc : std::nullopt,
         down_delta ? std::optional(down_delta->delta) : std::nullopt);

  if (!o.out.empty()) {
    write_json(report, o.out);
    ordered_json man;
    man["command"] = "eval";
    man["argv"] = argv;
    man["seed"] = o.seed;
    man["inputs"]["bias_spec"] = file_entry(o.bias_spec);
    for (const auto& e : o.embeddings) man["inputs"]["embeddings"].push_back(file_entry(e));
    if (!o.stereoset.empty()) man["inputs"]["stereoset"] = file_entry(o.stereoset);
    if (!o.crows.empty()) man["inputs"]["crows"] = file_entry(o.crows);
    if (!o.corpus.empty()) man["inputs"]["corpus"] = file_entry(o.corpus);
    man["outputs"]["report"] = file_entry(o.out);
    write_json(man, o.out + ".manifest.json");
  }
  return 0;
}

struct AblateOpts {
  std::string embeddings, bias_spec, out;
  std::uint64_t seed = 0;
  bool force = false;
  double lambda = 0.2;
  double lr = 0.0;
  int batch = 0;
  int epochs = -1;
  int blocks = 0;
  int neutral_sample = 0;
};

int cmd_ablate(const AblateOpts& o, const std::vector<std::string>& argv, std::ostream& out) {
  fs::path dir(o.out);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) fail_usage("--out exists and is not a directory: " + o.out);
    if (!fs::is_empty(dir) && !o.force)
      fail_usage("--out directory is not empty (use --force to proceed): " + o.out);
  } else {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail_data("cannot create output directory: " + o.out);
  }

  const EmbeddingSet set = load_word2vec_text(o.embeddings);
  const BiasSpec spec = load_bias_spec(o.bias_spec);
  const BiasSubspace subspace = build_subspace(set, spec);
  const NeutralSet neutral = neutral_set(set, spec);

  const MacReport biased_mac = mac(normalize_rows(set), spec);

  struct Variant {
    const char* name;
    const char* method;
    OptimizerKind opt;
  };
  const Variant variants[] = {
      {"baseline_sgd", "baseline", OptimizerKind::sgd},
      {"baseline_adam", "baseline", OptimizerKind::adam},
      {"dsd_sgd", "dsd", OptimizerKind::sgd},
      {"dsd_adam", "dsd", OptimizerKind::adam},
  };

  ordered_json man;
  man["command"] = "ablate";
  man["argv"] = argv;
  man["seed"] = o.seed;
  man["inputs"]["embeddings"] = file_entry(o.embeddings);
  man["inputs"]["bias_spec"] = file_entry(o.bias_spec);
  man["biased_mac"] = biased_mac.mac;

  std::vector<std::pair<std::string, double>> scores;
  for (const auto& v : variants) {
    DebiasOpts d;
    d.embeddings = o.embeddings;
    d.bias_spec = o.bias_spec;
    d.method = v.method;
    d.lambda = o.lambda;
    d.lr = o.lr;
    d.batch = o.batch;
    d.epochs = o.epochs;
    d.blocks = o.blocks;
    d.neutral_sample = o.neutral_sample;
    d.seed = o.seed;
    d.optimizer = v.opt == OptimizerKind::sgd ? "sgd" : "adam";

    const fs::path subdir = dir / v.name;
    fs::create_directories(subdir);
    const std::string out_path = (subdir / "embeddings.txt").string();
    const std::string ckpt_path = (subdir / "checkpoint.bin").string();
    RunManifest rman =
        run_training(set, subspace, neutral, v.method, make_config(d), out_path, ckpt_path);
    write_json(training_manifest(rman, neutral, argv, d, out_path, ckpt_path),
               (subdir / "manifest.json").string());

    const MacReport m = mac(load_word2vec_text(out_path), spec);
    scores.emplace_back(v.name, m.mac);
    man["runs"][v.name]["mac"] = m.mac;
    man["runs"][v.name]["seed"] = o.seed;
    man["runs"][v.name]["outputs"] = out_path;
  }

  // Table in the ablation layout: one row per direction, methods as columns.
  std::ofstream tsv((dir / "ablation.tsv").string());
  tsv << "direction\tbiased";
  for (const auto& [name, _] : scores) tsv << "\t" << name;
  tsv << "\n" << spec.category << "\t" << fmt(biased_mac.mac);
  for (const auto& [_, score] : scores) tsv << "\t" << fmt(score);
  tsv << "\n";
  tsv.close();

  char buf[240];
  std::snprintf(buf, sizeof buf, "%-10s %10s %14s %14s %10s %10s\n", "direction", "biased",
                "baseline_sgd", "baseline_adam", "dsd_sgd", "dsd_adam");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-10s %10s %14s %14s %10s %10s\n", spec.category.c_str(),
                fmt(biased_mac.mac, 4).c_str(), fmt(scores[0].second, 4).c_str(),
                fmt(scores[1].second, 4).c_str(), fmt(scores[2].second, 4).c_str(),
                fmt(scores[3].second, 4).c_str());
  out << buf;
  out << "seed=" << o.seed << " (shared across the four runs)\n";

  write_json(man, (dir / "manifest.json").string());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-class word-embedding debiasing (baseline transform + DeepSoftDebias) "
               "with MAC / stereotype / crows / downstream evaluation"};
  app.require_subcommand(1);

  DebiasOpts d;
  auto* debias = app.add_subcommand("debias", "Train a debiaser and write debiased embeddings");
  debias->add_option("--embeddings", d.embeddings, "word2vec text embeddings")->required();
  debias->add_option("--bias-spec", d.bias_spec, "bias spec JSON")->required();
  debias->add_option("--method", d.method, "baseline | dsd")
      ->required()
      ->check(CLI::IsMember({"baseline", "dsd"}));
  debias->add_option("--out", d.out, "output embeddings path")->required();
  debias->add_option("--lambda", d.lambda, "bias-projection loss weight (default 0.2)");
  debias->add_option("--lr", d.lr, "learning rate (default: schedule)");
  debias->add_option("--batch", d.batch, "batch size (default: schedule)");
  debias->add_option("--epochs", d.epochs, "epochs (default: schedule)");
  debias->add_option("--blocks", d.blocks, "residual blocks (default: schedule)");
  debias->add_option("--seed", d.seed, "run seed (default 0)");
  debias->add_option("--optimizer", d.optimizer, "adam | sgd")
      ->check(CLI::IsMember({"adam", "sgd"}));
  debias->add_option("--neutral-sample", d.neutral_sample,
                     "neutral rows per step (default min(batch, |N|))");
  debias->add_option("--loss", d.loss, "anchored | gram | literal-orthonormal")
      ->check(CLI::IsMember({"anchored", "gram", "literal-orthonormal"}));
  debias->add_flag("--bias-through-transform", d.bias_through_transform,
                   "baseline: project the transformed basis in the second term");

  EvalOpts e;
  auto* eval = app.add_subcommand("eval", "Score embeddings (biased[, debiased])");
  eval->add_option("--embeddings", e.embeddings, "one or two embedding files")
      ->required()
      ->expected(1, 2);
  eval->add_option("--bias-spec", e.bias_spec, "bias spec JSON")->required();
  eval->add_option("--metrics", e.metrics, "mac, ss, crows, downstream")
      ->required()
      ->delimiter(',');
  eval->add_option("--stereoset", e.stereoset, "stereo records (jsonl or benchmark json)");
  eval->add_option("--crows", e.crows, "crows pairs csv");
  eval->add_option("--corpus", e.corpus, "labeled corpus tsv");
  eval->add_option("--out", e.out, "write the JSON report here");
  eval->add_option("--n-perm", e.n_perm, "permutations for the MAC p-value (default 10000)");
  eval->add_option("--seed", e.seed, "seed for permutation test / downstream split");

  AblateOpts a;
  auto* ablate = app.add_subcommand(
      "ablate", "Run baseline/dsd x sgd/adam with a shared seed and tabulate MAC");
  ablate->add_option("--embeddings", a.embeddings, "word2vec text embeddings")->required();
  ablate->add_option("--bias-spec", a.bias_spec, "bias spec JSON")->required();
  ablate->add_option("--out", a.out, "output directory")->required();
  ablate->add_option("--seed", a.seed, "shared seed");
  ablate->add_flag("--force", a.force, "allow a non-empty output directory");
  ablate->add_option("--lambda", a.lambda, "bias-projection loss weight");
  ablate->add_option("--lr", a.lr, "learning rate (default: schedule per optimizer)");
  ablate->add_option("--batch", a.batch, "batch size");
  ablate->add_option("--epochs", a.epochs, "epochs");
  ablate->add_option("--blocks", a.blocks, "residual blocks");
  ablate->add_option("--neutral-sample", a.neutral_sample, "neutral rows per step");

  std::vector<const char*> argv;
  argv.push_back("dsd");
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& help) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& help) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << "\n";
    err << app.help();
    return 2;
  }

  try {
    if (debias->parsed()) return cmd_debias(d, args, out);
    if (eval->parsed()) return cmd_eval(e, args, out);
    if (ablate->parsed()) return cmd_ablate(a, args, out);
    err << app.help();
    return 2;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return ex.exit_code();
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 3;
  }
}

}  // namespace dsd::cli
