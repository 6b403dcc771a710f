#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsd/bias_space.hpp"
#include "dsd/downstream.hpp"
#include "dsd/embedding.hpp"
#include "dsd/metrics.hpp"
#include "dsd/rng.hpp"

namespace dsd::testsupport {

// Synthetic biased embedding set: random unit vectors with bias components
// injected along a known axis pair. Group-A-associated words get +kBias * b,
// group-B words -kBias * b; every bias-carrying word additionally shares a
// +kShared * u component (u also spanned by the anchor differences), which is
// what gives the biased set a mean target-attribute association well below
// the orthogonal ideal. Sentiment-carrying filler words along a third axis
// stay outside the bias subspace and drive the downstream corpus.
struct FixtureParams {
  std::size_t vocab = 400;
  std::size_t dim = 64;
  double bias = 0.6;           // +/- injection along b
  double shared = 0.6;         // common u component of bias-carrying words
  double anchor_u = 0.5;       // anchor spread along u
  double anchor_noise = 0.05;  // residual randomness of anchors
  double sentiment = 0.55;     // +/- injection along s for corpus words
  std::size_t contaminated = 40;
  std::size_t targets = 20;
  std::size_t corpus_words_per_class = 60;
  std::size_t corpus_sentences_per_class = 80;
};

struct Fixture {
  EmbeddingSet set;
  BiasSpec spec;  // explicit neutral list: contaminated fillers + targets
  std::vector<double> axis_b, axis_u, axis_s;
  std::vector<std::string> clean_words;  // words outside the bias spec entirely
  LabeledCorpus corpus;
  std::vector<StereoExample> stereo;
};

Fixture make_fixture(std::uint64_t seed = 20240807, const FixtureParams& params = {});

// Uniform(-1, 1) entries, tokens w000..; no zero rows in practice.
EmbeddingSet random_set(SeededRng& rng, std::size_t vocab, std::size_t dim,
                        const std::string& name = "random");

}  // namespace dsd::testsupport
