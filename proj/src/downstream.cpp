#include "dsd/downstream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "dsd/error.hpp"
#include "dsd/rng.hpp"

namespace dsd {

void LabeledCorpus::validate() const {
  bool has0 = false, has1 = false;
  for (const auto& [text, label] : records) {
    if (text.empty()) fail_data("corpus '" + name + "': empty text");
    if (label == 0) has0 = true;
    else if (label == 1) has1 = true;
    else fail_data("corpus '" + name + "': label must be 0 or 1");
  }
  if (!has0 || !has1) fail_data("corpus '" + name + "': both labels must be present");
}

LabeledCorpus load_corpus_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open corpus: " + path);
  LabeledCorpus corpus;
  corpus.name = path;
  std::string line;
  if (!std::getline(in, line)) fail_data(path + ": empty file");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.rfind('\t');
    if (tab == std::string::npos)
      fail_data(path + ":" + std::to_string(lineno) + ": expected text<TAB>label");
    const std::string text = line.substr(0, tab);
    int label = -1;
    auto [p, ec] = std::from_chars(line.data() + tab + 1, line.data() + line.size(), label);
    if (ec != std::errc() || p != line.data() + line.size() || (label != 0 && label != 1))
      fail_data(path + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    corpus.records.emplace_back(text, label);
  }
  corpus.validate();
  return corpus;
}

void save_corpus_tsv(const LabeledCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write corpus: " + path);
  out << "sentence\tlabel\n";
  for (const auto& [text, label] : corpus.records) out << text << "\t" << label << "\n";
}

namespace {

struct Features {
  Matrix x;                // n x d, unit rows
  std::vector<int> y;
  std::size_t excluded = 0;
};

Features featurize(const EmbeddingSet& set, const LabeledCorpus& corpus) {
  Features out;
  std::vector<std::vector<double>> rows;
  for (const auto& [text, label] : corpus.records) {
    auto sv = sentence_vector(set, text);
    if (!sv) {
      ++out.excluded;
      continue;
    }
    const double norm = norm2(sv->vector);
    if (norm == 0.0) {
      ++out.excluded;
      continue;
    }
    for (double& v : sv->vector) v /= norm;
    rows.push_back(std::move(sv->vector));
    out.y.push_back(label);
  }
  out.x = Matrix(rows.size(), set.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto dst = out.x.row(i);
    for (std::size_t j = 0; j < set.dim(); ++j) dst[j] = rows[i][j];
  }
  return out;
}

struct Split {
  std::vector<std::size_t> train, test;
};

// Per-class shuffle by seed, last fifth to the test side.
Split stratified_split(const std::vector<int>& y, std::uint64_t seed) {
  Split split;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) idx.push_back(i);
    if (idx.size() < 2)
      fail_data("downstream split: class " + std::to_string(cls) +
                " has fewer than 2 usable records");
    SeededRng rng(seed ^ (0x9e3779b97f4a7c15ull * (cls + 1)));
    rng.shuffle(idx);
    std::size_t n_test = std::max<std::size_t>(1, idx.size() / 5);
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < idx.size() - n_test ? split.train : split.test).push_back(idx[i]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double train_eval(const EmbeddingSet& set, const LabeledCorpus& corpus, std::uint64_t split_seed,
                  std::size_t* excluded_out) {
  corpus.validate();
  std::size_t per_class[2] = {0, 0};
  for (const auto& [_, label] : corpus.records) ++per_class[label];
  if (per_class[0] < 10 || per_class[1] < 10)
    fail_data("downstream: need at least 10 records per class");

  const Features feats = featurize(set, corpus);
  if (excluded_out) *excluded_out = feats.excluded;
  const Split split = stratified_split(feats.y, split_seed);

  const std::size_t d = set.dim();
  const std::size_t n = split.train.size();
  std::vector<double> w(d, 0.0);
  double bias = 0.0;
  const double lr = 0.1;
  const double l2 = 1e-4;
  const int epochs = 300;

  std::vector<double> gw(d);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t idx : split.train) {
      auto xi = feats.x.row(idx);
      const double err = sigmoid(dot(xi, w) + bias) - static_cast<double>(feats.y[idx]);
      for (std::size_t j = 0; j < d; ++j) gw[j] += err * xi[j];
      gb += err;
    }
    for (std::size_t j = 0; j < d; ++j)
      w[j] -= lr * (gw[j] / static_cast<double>(n) + l2 * w[j]);
    bias -= lr * gb / static_cast<double>(n);
  }

  std::size_t correct = 0;
  for (std::size_t idx : split.test) {
    const double p = sigmoid(dot(feats.x.row(idx), w) + bias);
    const int pred = p > 0.5 ? 1 : 0;
    if (pred == feats.y[idx]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.test.size());
}

DeltaReport downstream_delta(const EmbeddingSet& biased, const EmbeddingSet& debiased,
                             const LabeledCorpus& corpus, std::uint64_t seed) {
  if (biased.vocab() != debiased.vocab())
    fail_data("downstream_delta: embedding sets do not share a vocabulary");
  DeltaReport report;
  report.seed = seed;
  report.acc_biased = train_eval(biased, corpus, seed, &report.excluded);
  report.acc_debiased = train_eval(debiased, corpus, seed, nullptr);
  report.delta = report.acc_debiased - report.acc_biased;
  return report;
}

}  // namespace dsd
