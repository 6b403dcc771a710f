#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dsd/embedding.hpp"
#include "dsd/matrix.hpp"

namespace dsd {

// A named bias category: group-defining anchor tokens, stereotype attribute
// sets, evaluation targets and an optional explicit neutral list. Loaded from
// a JSON config (see data/specs/); lists keep file order.
struct BiasSpec {
  std::string category;  // gender | race | religion | custom
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  std::vector<std::pair<std::string, std::vector<std::string>>> attribute_sets;
  std::vector<std::string> targets;
  std::vector<std::string> neutral_words;  // empty -> vocab-minus-bias-words policy

  // >= 2 groups, non-empty lists, pairwise-disjoint groups.
  void validate() const;
  std::vector<std::string> all_group_tokens() const;
  std::vector<std::string> all_attribute_tokens() const;
};

BiasSpec load_bias_spec(const std::string& path);
void save_bias_spec(const BiasSpec& spec, const std::string& path);

// k x d matrix whose rows are unit-normalized (anchor - mean of anchors),
// one row per group anchor token.
struct BiasSubspace {
  Matrix basis;
  std::vector<double> neutral_ref;
  std::vector<std::string> source_tokens;

  std::size_t k() const { return basis.rows(); }
  std::size_t dim() const { return basis.cols(); }
};

BiasSubspace build_subspace(const EmbeddingSet& set, const BiasSpec& spec);

enum class NeutralPolicy { explicit_list, vocab_minus_bias_words };

struct NeutralSet {
  std::vector<std::size_t> indices;
  NeutralPolicy policy = NeutralPolicy::vocab_minus_bias_words;
  std::vector<std::string> warnings;  // e.g. OOV neutral words that were skipped
};

// Explicit list when the bias spec provides one (OOV entries skipped with a
// warning), otherwise all vocabulary rows minus group/attribute/target tokens.
NeutralSet neutral_set(const EmbeddingSet& set, const BiasSpec& spec);

// |cos(word, a - b)| for a two-anchor axis; in [0, 1].
double direct_bias(const EmbeddingSet& set, const std::string& word,
                   const std::pair<std::string, std::string>& axis);

// ||X B^T||_F^2 / m : mean squared projection of the rows of X onto the basis.
double projection_energy(const Matrix& vectors, const BiasSubspace& subspace);

}  // namespace dsd
