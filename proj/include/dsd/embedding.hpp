#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dsd/matrix.hpp"
#include "dsd/tokenize.hpp"

namespace dsd {

// A vocabulary plus its V x d vector matrix. Immutable after construction;
// the transforming operations below return new sets.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::vector<std::string> vocab, Matrix matrix, std::string name);

  std::size_t size() const { return vocab_.size(); }
  std::size_t dim() const { return matrix_.cols(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const Matrix& matrix() const { return matrix_; }
  const std::string& name() const { return name_; }

  // Row index for a token, or nullopt when out of vocabulary.
  std::optional<std::size_t> find(std::string_view token) const;
  // Row index or a data error naming the token.
  std::size_t at(std::string_view token) const;

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> index_;
  Matrix matrix_;
  std::string name_;
};

struct SentenceVector {
  std::vector<double> vector;
  std::size_t used_tokens = 0;
  std::size_t skipped_tokens = 0;
};

// word2vec text format: header "V d", then one "token v1 ... vd" line per word.
EmbeddingSet load_word2vec_text(const std::string& path);
// Values written with 9 significant digits so that load(save(x)) reproduces x
// to <= 1e-8 relative error.
void save_word2vec_text(const EmbeddingSet& set, const std::string& path);

// Every row scaled to unit L2 norm; zero rows are a data error. Idempotent.
EmbeddingSet normalize_rows(const EmbeddingSet& set);
Matrix normalize_rows(const Matrix& m);

// Mean of the in-vocabulary token rows; nullopt when every token is OOV.
std::optional<SentenceVector> sentence_vector(const EmbeddingSet& set, std::string_view text,
                                              const TokenizerConfig& cfg = {});

// dot(u,v) / (|u||v|), clamped to [-1, 1]. Zero vectors are a data error.
double cosine(std::span<const double> u, std::span<const double> v);

inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
  return 1.0 - cosine(u, v);
}

}  // namespace dsd
