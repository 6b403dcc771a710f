#include <doctest.h>

#include <cmath>

#include "dsd/downstream.hpp"
#include "dsd/error.hpp"
#include "dsd/rng.hpp"
#include "support/fixture.hpp"
#include "support/tmpdir.hpp"

using namespace dsd;
using namespace dsd::testsupport;

namespace {

// Two word families separated along the first embedding axis.
EmbeddingSet separable_set(SeededRng& rng, std::size_t words_per_class, std::size_t d) {
  std::vector<std::string> vocab;
  Matrix m(2 * words_per_class, d);
  for (std::size_t i = 0; i < 2 * words_per_class; ++i) {
    const bool pos = i < words_per_class;
    vocab.push_back((pos ? "p" : "n") + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j) m(i, j) = 0.4 * rng.uniform(-1, 1);
    m(i, 0) += pos ? 1.0 : -1.0;
  }
  return EmbeddingSet(std::move(vocab), std::move(m), "separable");
}

LabeledCorpus corpus_from(const EmbeddingSet& set, SeededRng& rng, std::size_t per_class) {
  LabeledCorpus corpus;
  corpus.name = "synthetic";
  const std::size_t half = set.size() / 2;
  for (int label = 0; label <= 1; ++label)
    for (std::size_t s = 0; s < per_class; ++s) {
      std::string text;
      const std::size_t len = 2 + rng.index(3);
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t base = label == 1 ? 0 : half;
        text += (t ? " " : "") + set.vocab()[base + rng.index(half)];
      }
      corpus.records.emplace_back(text, label);
    }
  return corpus;
}

}  // namespace

TEST_CASE("linearly separable classes reach accuracy 1.0") {
  SeededRng rng(71);
  const EmbeddingSet set = separable_set(rng, 25, 6);
  const LabeledCorpus corpus = corpus_from(set, rng, 40);
  CHECK(train_eval(set, corpus, 13) == doctest::Approx(1.0));
}

TEST_CASE("random labels on symmetric features hover near chance") {
  SeededRng rng(72);
  const EmbeddingSet set = random_set(rng, 40, 6, "sym");
  LabeledCorpus corpus;
  corpus.name = "random";
  for (int i = 0; i < 80; ++i) {
    std::string text = set.vocab()[rng.index(set.size())] + " " +
                       set.vocab()[rng.index(set.size())];
    corpus.records.emplace_back(text, static_cast<int>(rng.index(2)));
  }
  corpus.validate();
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) mean += train_eval(set, corpus, seed);
  mean /= 20.0;
  CHECK(mean > 0.35);
  CHECK(mean < 0.65);
}

TEST_CASE("identical runs are deterministic") {
  SeededRng rng(73);
  const EmbeddingSet set = separable_set(rng, 15, 4);
  const LabeledCorpus corpus = corpus_from(set, rng, 25);
  CHECK(train_eval(set, corpus, 3) == train_eval(set, corpus, 3));
}

TEST_CASE("delta of a set against itself is zero") {
  SeededRng rng(74);
  const EmbeddingSet set = separable_set(rng, 15, 4);
  const LabeledCorpus corpus = corpus_from(set, rng, 25);
  const DeltaReport r = downstream_delta(set, set, corpus, 11);
  CHECK(r.delta == 0.0);
  CHECK(r.acc_biased == r.acc_debiased);
}

TEST_CASE("an orthogonal rotation of the embedding leaves accuracy unchanged") {
  SeededRng rng(75);
  const std::size_t d = 6;
  const EmbeddingSet set = separable_set(rng, 20, d);
  const LabeledCorpus corpus = corpus_from(set, rng, 30);

  // Householder rotation.
  std::vector<double> v(d);
  double n = 0;
  for (auto& x : v) {
    x = rng.uniform(-1, 1);
    n += x * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  Matrix h = Matrix::identity(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) h(i, j) -= 2.0 * v[i] * v[j];
  const EmbeddingSet rotated(set.vocab(), matmul_nt(set.matrix(), h), "rotated");

  const DeltaReport r = downstream_delta(set, rotated, corpus, 17);
  CHECK(std::fabs(r.delta) <= 0.05);
}

TEST_CASE("vocab mismatch and degenerate corpora are rejected") {
  SeededRng rng(76);
  const EmbeddingSet a = separable_set(rng, 15, 4);
  const EmbeddingSet b = random_set(rng, 10, 4, "other");
  const LabeledCorpus corpus = corpus_from(a, rng, 25);
  CHECK_THROWS_AS(downstream_delta(a, b, corpus, 1), Error);

  LabeledCorpus small;
  small.name = "small";
  for (int i = 0; i < 5; ++i) small.records.emplace_back("p0 p1", i % 2);
  CHECK_THROWS_AS(train_eval(a, small, 1), Error);

  LabeledCorpus onelabel;
  onelabel.name = "one";
  for (int i = 0; i < 20; ++i) onelabel.records.emplace_back("p0", 1);
  CHECK_THROWS_AS(onelabel.validate(), Error);
}

TEST_CASE("corpus tsv round trip") {
  TmpDir tmp("corpus");
  LabeledCorpus corpus;
  corpus.name = "rt";
  corpus.records = {{"a small test", 1}, {"another line", 0}, {"third one", 1}};
  const std::string path = tmp.file("c.tsv");
  save_corpus_tsv(corpus, path);
  const LabeledCorpus back = load_corpus_tsv(path);
  REQUIRE(back.records.size() == 3);
  CHECK(back.records[0].first == "a small test");
  CHECK(back.records[0].second == 1);
  CHECK(back.records[1].second == 0);

  write_file(tmp.file("bad.tsv"), "header\nno label here\n");
  CHECK_THROWS_AS(load_corpus_tsv(tmp.file("bad.tsv")), Error);
  write_file(tmp.file("bad2.tsv"), "header\ntext\t7\n");
  CHECK_THROWS_AS(load_corpus_tsv(tmp.file("bad2.tsv")), Error);
}

TEST_CASE("accuracy is invariant to a uniform positive rescaling of the embeddings") {
  SeededRng rng(78);
  const EmbeddingSet set = separable_set(rng, 15, 4);
  const LabeledCorpus corpus = corpus_from(set, rng, 25);
  Matrix scaled = set.matrix();
  for (auto& v : scaled.flat()) v *= 7.5;
  const EmbeddingSet set2(set.vocab(), scaled, "scaled");
  CHECK(train_eval(set, corpus, 9) == doctest::Approx(train_eval(set2, corpus, 9)).epsilon(1e-12));
}

TEST_CASE("all-OOV records are excluded and counted") {
  SeededRng rng(77);
  const EmbeddingSet set = separable_set(rng, 15, 4);
  LabeledCorpus corpus = corpus_from(set, rng, 25);
  corpus.records.emplace_back("zzz qqq www", 1);
  std::size_t excluded = 0;
  train_eval(set, corpus, 5, &excluded);
  CHECK(excluded == 1);
}
