#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsd/bias_space.hpp"
#include "dsd/embedding.hpp"

namespace dsd {

struct MacPair {
  std::string target;
  std::string attribute_set;
  double distance;  // mean cosine distance between target and the set
};

struct MacReport {
  std::vector<MacPair> per_pair;
  double mac = 0.0;           // mean of per_pair distances, in [0, 2]
  double p_value = 0.0;       // 0 = unset; filled by mac_significance
  std::size_t n_pairs = 0;
  std::size_t excluded = 0;   // (target, set) pairs dropped for OOV
};

// S(t, A_j) = mean over a in A_j of (1 - cos(v_t, v_a)); mac = mean over all
// (t, A_j). OOV targets and attributes are skipped and counted.
MacReport mac(const EmbeddingSet& set, const std::vector<std::string>& targets,
              const std::vector<std::pair<std::string, std::vector<std::string>>>& attribute_sets);

inline MacReport mac(const EmbeddingSet& set, const BiasSpec& spec) {
  return mac(set, spec.targets, spec.attribute_sets);
}

// Two-sided paired sign-flip permutation test on the per-pair distance deltas
// (after - before). Exhaustive enumeration when 2^n <= n_perm (then the
// p-value is exact: count / 2^n); Monte-Carlo with add-one smoothing
// otherwise: (count + 1) / (n_perm + 1).
double mac_significance(const MacReport& before, const MacReport& after, int n_perm,
                        std::uint64_t seed);

struct StereoExample {
  std::string context;
  std::string stereo_sentence;
  std::string anti_sentence;
  std::string category;
};

struct CrowsPair {
  std::string sent_more;
  std::string sent_less;
  bool antistereo = false;  // label direction
  std::string bias_type;
};

struct ScoreReport {
  double score = 0.0;  // in [0, 100]; 50 is the unbiased ideal
  std::size_t counted = 0;
  std::size_t excluded = 0;
  std::size_t ties = 0;
};

// Fraction (x100) of examples whose context vector is closer to the stereo
// continuation than the anti one; exact ties count 0.5.
ScoreReport stereotype_score(const EmbeddingSet& set, const std::vector<StereoExample>& examples,
                             const TokenizerConfig& cfg = {});

// CrowS-style score over minimally different sentence pairs. The shared
// tokens (longest common subsequence) form the context; the leftover tokens
// on each side are the continuations being compared.
ScoreReport crows_score(const EmbeddingSet& set, const std::vector<CrowsPair>& pairs,
                        const TokenizerConfig& cfg = {});

// Token diff used by crows_score, exposed for tests.
struct TokenDiff {
  std::vector<std::string> common;
  std::vector<std::string> only_more;
  std::vector<std::string> only_less;
};
TokenDiff token_diff(const std::vector<std::string>& more, const std::vector<std::string>& less);

// Importers. Stereo records: either the normalized JSONL (one object with
// context/stereo/anti/category per line) or the public benchmark JSON layout.
std::vector<StereoExample> load_stereo_examples(const std::string& path);
void save_stereo_examples(const std::vector<StereoExample>& examples, const std::string& path);
// CSV with header columns sent_more, sent_less, stereo_antistereo, bias_type
// (extra columns ignored).
std::vector<CrowsPair> load_crows_pairs(const std::string& path);
void save_crows_pairs(const std::vector<CrowsPair>& pairs, const std::string& path);

}  // namespace dsd
