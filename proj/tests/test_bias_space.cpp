#include <doctest.h>

#include <cmath>

#include "dsd/bias_space.hpp"
#include "dsd/error.hpp"
#include "dsd/rng.hpp"
#include "support/fixture.hpp"
#include "support/tmpdir.hpp"

using namespace dsd;
using namespace dsd::testsupport;

namespace {

EmbeddingSet make_set(std::vector<std::string> vocab, std::vector<std::vector<double>> rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return EmbeddingSet(std::move(vocab), std::move(m), "test");
}

BiasSpec two_group_spec(std::vector<std::string> a, std::vector<std::string> b) {
  BiasSpec spec;
  spec.category = "custom";
  spec.groups = {{"a", std::move(a)}, {"b", std::move(b)}};
  spec.attribute_sets = {{"attrs", {"doctor"}}};
  spec.targets = {"doctor"};
  return spec;
}

}  // namespace

TEST_CASE("build_subspace: binary pair reduces to pairwise mean subtraction") {
  const EmbeddingSet set = make_set({"he", "she", "doctor"}, {{1, 0}, {0, 1}, {1, 1}});
  const BiasSubspace sub = build_subspace(set, two_group_spec({"he"}, {"she"}));
  REQUIRE(sub.k() == 2);
  CHECK(sub.neutral_ref[0] == doctest::Approx(0.5));
  CHECK(sub.neutral_ref[1] == doctest::Approx(0.5));
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(sub.basis(0, 0) == doctest::Approx(r).epsilon(1e-12));
  CHECK(sub.basis(0, 1) == doctest::Approx(-r).epsilon(1e-12));
  CHECK(sub.basis(1, 0) == doctest::Approx(-r).epsilon(1e-12));
  CHECK(sub.basis(1, 1) == doctest::Approx(r).epsilon(1e-12));
}

TEST_CASE("build_subspace: identical anchors are degenerate") {
  const EmbeddingSet set = make_set({"x", "y", "z", "doctor"},
                                    {{1, 1}, {1, 1}, {1, 1}, {0, 1}});
  BiasSpec spec;
  spec.category = "custom";
  spec.groups = {{"a", {"x"}}, {"b", {"y"}}, {"c", {"z"}}};
  spec.attribute_sets = {{"attrs", {"doctor"}}};
  spec.targets = {"doctor"};
  CHECK_THROWS_AS(build_subspace(set, spec), Error);
}

TEST_CASE("build_subspace: three orthogonal anchors") {
  const EmbeddingSet set =
      make_set({"p", "q", "r", "doctor"}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}});
  BiasSpec spec;
  spec.category = "custom";
  spec.groups = {{"a", {"p"}}, {"b", {"q"}}, {"c", {"r"}}};
  spec.attribute_sets = {{"attrs", {"doctor"}}};
  spec.targets = {"doctor"};
  const BiasSubspace sub = build_subspace(set, spec);
  REQUIRE(sub.k() == 3);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(sub.neutral_ref[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  for (std::size_t i = 0; i < 3; ++i) CHECK(norm2(sub.basis.row(i)) == doctest::Approx(1.0));
  // Symmetric anchors: even the normalized rows sum to ~0.
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += sub.basis(i, j);
    CHECK(std::fabs(s) <= 1e-10);
  }
}

TEST_CASE("build_subspace: mean subtraction zeroes the pre-normalization row sum") {
  SeededRng rng(42);
  for (int iter = 0; iter < 20; ++iter) {
    const std::size_t d = 2 + rng.index(10);
    const std::size_t k = 2 + rng.index(5);
    std::vector<std::string> vocab;
    std::vector<std::vector<double>> rows;
    BiasSpec spec;
    spec.category = "custom";
    for (std::size_t i = 0; i < k; ++i) {
      vocab.push_back("g" + std::to_string(i));
      std::vector<double> r(d);
      for (auto& x : r) x = rng.uniform(-1, 1);
      rows.push_back(r);
      spec.groups.push_back({"grp" + std::to_string(i), {vocab.back()}});
    }
    vocab.push_back("doctor");
    rows.push_back(std::vector<double>(d, 0.5));
    spec.attribute_sets = {{"attrs", {"doctor"}}};
    spec.targets = {"doctor"};
    const EmbeddingSet set = make_set(vocab, rows);
    const BiasSubspace sub = build_subspace(set, spec);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        s += set.matrix()(i, j) - sub.neutral_ref[j];  // pre-normalization rows
      CHECK(std::fabs(s) <= 1e-10);
    }
  }
}

TEST_CASE("build_subspace reports missing anchors") {
  const EmbeddingSet set = make_set({"he", "doctor"}, {{1, 0}, {0, 1}});
  CHECK_THROWS_WITH_AS(build_subspace(set, two_group_spec({"he"}, {"she"})),
                       doctest::Contains("she"), Error);
}

TEST_CASE("neutral_set policies") {
  const EmbeddingSet set =
      make_set({"he", "she", "doctor", "table"}, {{1, 0}, {0, 1}, {1, 1}, {2, 1}});
  BiasSpec spec = two_group_spec({"he"}, {"she"});

  SUBCASE("vocab minus bias words") {
    const NeutralSet n = neutral_set(set, spec);
    CHECK(n.policy == NeutralPolicy::vocab_minus_bias_words);
    REQUIRE(n.indices.size() == 1);
    CHECK(set.vocab()[n.indices[0]] == "table");
  }
  SUBCASE("explicit list with OOV skip") {
    spec.neutral_words = {"table", "chair"};
    const NeutralSet n = neutral_set(set, spec);
    CHECK(n.policy == NeutralPolicy::explicit_list);
    REQUIRE(n.indices.size() == 1);
    CHECK(set.vocab()[n.indices[0]] == "table");
    REQUIRE(n.warnings.size() == 1);
    CHECK(n.warnings[0].find("chair") != std::string::npos);
  }
  SUBCASE("empty neutral set is an error") {
    const EmbeddingSet tiny = make_set({"he", "she", "doctor"}, {{1, 0}, {0, 1}, {1, 1}});
    CHECK_THROWS_AS(neutral_set(tiny, spec), Error);
  }
  SUBCASE("explicit neutral word that is an anchor is rejected") {
    spec.neutral_words = {"he"};
    CHECK_THROWS_AS(neutral_set(set, spec), Error);
  }
}

TEST_CASE("direct_bias examples") {
  // v_word == v_he - v_she
  const EmbeddingSet set = make_set({"he", "she", "axisword", "ortho", "ex"},
                                    {{1, 0}, {0, 1}, {1, -1}, {1, 1}, {1, 0}});
  CHECK(direct_bias(set, "axisword", {"he", "she"}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(direct_bias(set, "ortho", {"he", "she"}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(direct_bias(set, "ex", {"he", "she"}) ==
        doctest::Approx(0.7071067811865475).epsilon(1e-12));
  CHECK_THROWS_AS(direct_bias(set, "missing", {"he", "she"}), Error);
  CHECK_THROWS_AS(direct_bias(set, "ex", {"he", "he"}), Error);
}

TEST_CASE("direct_bias is symmetric in the axis order") {
  SeededRng rng(9);
  const EmbeddingSet set = random_set(rng, 10, 6, "db");
  const auto& v = set.vocab();
  for (int iter = 0; iter < 25; ++iter) {
    const std::string w = v[rng.index(v.size())];
    std::string a = v[rng.index(v.size())];
    std::string b = v[rng.index(v.size())];
    if (a == b) continue;
    CHECK(direct_bias(set, w, {a, b}) == doctest::Approx(direct_bias(set, w, {b, a})).epsilon(1e-12));
  }
}

TEST_CASE("projection_energy: trivial cases and brute force") {
  BiasSubspace sub;
  sub.basis = Matrix(1, 3);
  sub.basis(0, 0) = 1.0;  // e1
  sub.neutral_ref = {0, 0, 0};
  sub.source_tokens = {"x"};

  Matrix ortho(2, 3);
  ortho(0, 1) = 1.0;
  ortho(1, 2) = 2.0;
  CHECK(projection_energy(ortho, sub) == 0.0);

  Matrix same(1, 3);
  same(0, 0) = 1.0;
  CHECK(projection_energy(same, sub) == doctest::Approx(1.0).epsilon(1e-15));

  SeededRng rng(17);
  for (int iter = 0; iter < 20; ++iter) {
    const std::size_t d = 2 + rng.index(8);
    Matrix x(2, d), basis(2, d);
    for (auto& v : x.flat()) v = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < 2; ++i) {
      double n = 0;
      for (std::size_t j = 0; j < d; ++j) {
        basis(i, j) = rng.uniform(-1, 1);
        n += basis(i, j) * basis(i, j);
      }
      n = std::sqrt(n);
      for (std::size_t j = 0; j < d; ++j) basis(i, j) /= n;
    }
    BiasSubspace s2;
    s2.basis = basis;
    s2.neutral_ref.assign(d, 0.0);
    s2.source_tokens = {"a", "b"};
    double brute = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < 2; ++k) {
        const double p = dot(x.row(i), basis.row(k));
        brute += p * p;
      }
    brute /= 2.0;
    CHECK(projection_energy(x, s2) == doctest::Approx(brute).epsilon(1e-12));
  }

  Matrix wrong(1, 4);
  CHECK_THROWS_AS(projection_energy(wrong, sub), Error);
}

TEST_CASE("projection_energy is invariant under a joint orthogonal transform") {
  SeededRng rng(23);
  const std::size_t d = 6;
  // Householder reflector H = I - 2 v v^T.
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

  Matrix x(5, d), basis(3, d);
  for (auto& val : x.flat()) val = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    double bn = 0;
    for (std::size_t j = 0; j < d; ++j) {
      basis(i, j) = rng.uniform(-1, 1);
      bn += basis(i, j) * basis(i, j);
    }
    bn = std::sqrt(bn);
    for (std::size_t j = 0; j < d; ++j) basis(i, j) /= bn;
  }
  BiasSubspace sub2;
  sub2.basis = basis;
  sub2.neutral_ref.assign(d, 0.0);
  sub2.source_tokens = {"a", "b", "c"};

  BiasSubspace rotated = sub2;
  rotated.basis = matmul_nt(basis, h);  // rows times H^T (H symmetric)
  const Matrix xr = matmul_nt(x, h);
  CHECK(projection_energy(x, sub2) == doctest::Approx(projection_energy(xr, rotated)).epsilon(1e-10));
}

TEST_CASE("bias spec json round trip and validation") {
  TmpDir tmp("spec");
  BiasSpec spec;
  spec.category = "gender";
  spec.groups = {{"male", {"he", "him"}}, {"female", {"she", "her"}}};
  spec.attribute_sets = {{"m", {"doctor"}}, {"f", {"nurse"}}};
  spec.targets = {"doctor", "nurse"};
  spec.neutral_words = {"table"};
  const std::string path = tmp.file("spec.json");
  save_bias_spec(spec, path);
  const BiasSpec back = load_bias_spec(path);
  CHECK(back.category == spec.category);
  CHECK(back.groups == spec.groups);
  CHECK(back.attribute_sets == spec.attribute_sets);
  CHECK(back.targets == spec.targets);
  CHECK(back.neutral_words == spec.neutral_words);

  BiasSpec bad = spec;
  bad.groups = {{"only", {"he"}}};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = spec;
  bad.category = "astrology";
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = spec;
  bad.groups[1].second = {"he"};  // overlap
  CHECK_THROWS_AS(bad.validate(), Error);

  // Shipped default specs parse and validate.
  CHECK(load_bias_spec(std::string(DSD_DATA_DIR) + "/specs/gender.json").category == "gender");
  CHECK(load_bias_spec(std::string(DSD_DATA_DIR) + "/specs/race.json").groups.size() == 3);
  CHECK(load_bias_spec(std::string(DSD_DATA_DIR) + "/specs/religion.json").attribute_sets.size() == 3);
}
