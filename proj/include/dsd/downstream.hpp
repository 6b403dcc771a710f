#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsd/embedding.hpp"

namespace dsd {

struct LabeledCorpus {
  std::vector<std::pair<std::string, int>> records;  // (text, label in {0,1})
  std::string name;

  void validate() const;  // both labels present, non-empty texts
};

// Tab-separated "text<TAB>label" with a header line.
LabeledCorpus load_corpus_tsv(const std::string& path);
void save_corpus_tsv(const LabeledCorpus& corpus, const std::string& path);

struct DeltaReport {
  double acc_biased = 0.0;
  double acc_debiased = 0.0;
  double delta = 0.0;  // acc_debiased - acc_biased
  std::uint64_t seed = 0;
  std::size_t excluded = 0;  // all-OOV records dropped before the split
};

// Logistic regression on unit-normalized averaged sentence vectors with a
// fixed regime: deterministic 80/20 stratified split by seed, lr 0.1, 300
// full-batch epochs, L2 1e-4 on the weights, zero init. Returns test accuracy.
double train_eval(const EmbeddingSet& set, const LabeledCorpus& corpus, std::uint64_t split_seed,
                  std::size_t* excluded_out = nullptr);

// Same split and regime for both sets; they must share the vocabulary.
DeltaReport downstream_delta(const EmbeddingSet& biased, const EmbeddingSet& debiased,
                             const LabeledCorpus& corpus, std::uint64_t seed);

}  // namespace dsd
