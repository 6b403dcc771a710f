#include "fixture.hpp"

#include <cmath>
#include <cstdio>

#include "dsd/error.hpp"

namespace dsd::testsupport {
namespace {

std::vector<double> gaussian_unit(SeededRng& rng, std::size_t d) {
  std::vector<double> v(d);
  double n = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

// Remove the projections of v onto the given unit axes, then normalize.
void orthogonalize(std::vector<double>& v, const std::vector<const std::vector<double>*>& axes) {
  for (const auto* axis : axes) {
    double proj = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) proj += v[i] * (*axis)[i];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * (*axis)[i];
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

}  // namespace

Fixture make_fixture(std::uint64_t seed, const FixtureParams& p) {
  SeededRng root(seed);
  SeededRng rng_axes = root.derive("axes");
  SeededRng rng_vecs = root.derive("vectors");
  SeededRng rng_corpus = root.derive("corpus");

  Fixture fx;
  const std::size_t d = p.dim;
  fx.axis_b = gaussian_unit(rng_axes, d);
  fx.axis_u = gaussian_unit(rng_axes, d);
  orthogonalize(fx.axis_u, {&fx.axis_b});
  fx.axis_s = gaussian_unit(rng_axes, d);
  orthogonalize(fx.axis_s, {&fx.axis_b, &fx.axis_u});

  const std::vector<std::string> male = {"he",  "him",    "his", "man",    "men",
                                         "male", "boy",   "son", "father", "brother"};
  const std::vector<std::string> female = {"she",  "her",      "hers",   "woman",  "women",
                                           "female", "girl",   "daughter", "mother", "sister"};
  const std::vector<std::string> male_attrs = {"manager",   "executive",  "doctor", "lawyer",
                                               "programmer", "scientist", "soldier", "supervisor",
                                               "rancher",   "janitor",    "firefighter", "officer"};
  const std::vector<std::string> female_attrs = {"secretary", "nurse",       "clerk",
                                                 "artist",    "homemaker",   "dancer",
                                                 "singer",    "librarian",   "maid",
                                                 "hairdresser", "stylist",   "receptionist",
                                                 "counselor"};

  std::vector<std::string> vocab;
  std::vector<std::vector<double>> rows;
  auto push = [&](const std::string& token, const std::vector<double>& direction_sum) {
    vocab.push_back(token);
    rows.push_back(direction_sum);
  };
  auto compose = [&](double cb, double cu, double cs, double noise_scale, bool clean = false) {
    std::vector<double> v = gaussian_unit(rng_vecs, d);
    // Words outside the bias spec live exactly in the complement of the
    // bias plane, so a map acting inside span{b, u} cannot disturb them.
    if (clean) orthogonalize(v, {&fx.axis_b, &fx.axis_u});
    for (std::size_t i = 0; i < d; ++i)
      v[i] = noise_scale * v[i] + cb * fx.axis_b[i] + cu * fx.axis_u[i] + cs * fx.axis_s[i];
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  };

  // Group anchors: dominated by the bias axis, spread along u so the anchor
  // differences span both directions.
  for (std::size_t i = 0; i < male.size(); ++i)
    push(male[i], compose(p.bias, (i % 2 == 0 ? 1.0 : -1.0) * p.anchor_u, 0.0, p.anchor_noise));
  for (std::size_t i = 0; i < female.size(); ++i)
    push(female[i], compose(-p.bias, (i % 2 == 0 ? 1.0 : -1.0) * p.anchor_u, 0.0, p.anchor_noise));

  // Stereotype attribute words: signed bias plus the shared component.
  for (const auto& w : male_attrs) push(w, compose(p.bias, p.shared, 0.0, 1.0));
  for (const auto& w : female_attrs) push(w, compose(-p.bias, p.shared, 0.0, 1.0));

  // Evaluation targets: carry the bias plus the shared component, so their
  // attribute associations are positive on average.
  std::vector<std::string> targets;
  std::vector<int> target_sign;
  for (std::size_t i = 0; i < p.targets; ++i) {
    const int sign = i % 2 == 0 ? 1 : -1;
    const std::string tok = numbered("job", i);
    targets.push_back(tok);
    target_sign.push_back(sign);
    push(tok, compose(sign * p.bias, p.shared, 0.0, 1.0));
  }

  // Contaminated fillers: bias-carrying words the bias spec lists as neutral.
  std::vector<std::string> contaminated;
  for (std::size_t i = 0; i < p.contaminated; ++i) {
    const int sign = i % 2 == 0 ? 1 : -1;
    const std::string tok = numbered("word", i);
    contaminated.push_back(tok);
    push(tok, compose(sign * p.bias, p.shared, 0.0, 1.0));
  }

  // Sentiment-carrying clean words for the downstream corpus.
  std::vector<std::string> pos_words, neg_words;
  for (std::size_t i = 0; i < p.corpus_words_per_class; ++i) {
    pos_words.push_back(numbered("pos", i));
    push(pos_words.back(), compose(0.0, 0.0, p.sentiment, 1.0, true));
    neg_words.push_back(numbered("neg", i));
    push(neg_words.back(), compose(0.0, 0.0, -p.sentiment, 1.0, true));
  }

  // Plain random fillers up to the requested vocabulary size.
  std::size_t filler_count = 0;
  while (vocab.size() < p.vocab)
    push(numbered("filler", filler_count++), compose(0, 0, 0, 1.0, true));

  Matrix mat(vocab.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) mat(i, j) = rows[i][j];
  fx.set = EmbeddingSet(std::move(vocab), std::move(mat), "synthetic-fixture");

  fx.spec.category = "gender";
  fx.spec.groups = {{"male", male}, {"female", female}};
  fx.spec.attribute_sets = {{"male_stereotypes", male_attrs},
                            {"female_stereotypes", female_attrs}};
  fx.spec.targets = targets;
  fx.spec.neutral_words = contaminated;
  fx.spec.neutral_words.insert(fx.spec.neutral_words.end(), targets.begin(), targets.end());
  fx.spec.validate();

  for (const auto& w : pos_words) fx.clean_words.push_back(w);
  for (const auto& w : neg_words) fx.clean_words.push_back(w);
  for (std::size_t i = 0; i < filler_count; ++i) fx.clean_words.push_back(numbered("filler", i));

  // Separable two-class corpus over the sentiment words.
  fx.corpus.name = "synthetic-sentiment";
  for (int label = 0; label <= 1; ++label) {
    const auto& pool = label == 1 ? pos_words : neg_words;
    for (std::size_t s = 0; s < p.corpus_sentences_per_class; ++s) {
      const std::size_t len = 3 + rng_corpus.index(3);
      std::string text;
      for (std::size_t t = 0; t < len; ++t) {
        if (t) text += " ";
        text += pool[rng_corpus.index(pool.size())];
      }
      fx.corpus.records.emplace_back(text, label);
    }
  }

  // Stereo records: context = target, continuations = one attribute from the
  // matching side and one from the opposite side.
  for (std::size_t i = 0; i < 3 * targets.size(); ++i) {
    const std::size_t ti = i % targets.size();
    StereoExample ex;
    ex.context = targets[ti];
    const auto& same = target_sign[ti] > 0 ? male_attrs : female_attrs;
    const auto& other = target_sign[ti] > 0 ? female_attrs : male_attrs;
    ex.stereo_sentence = same[i % same.size()];
    ex.anti_sentence = other[i % other.size()];
    ex.category = "gender";
    fx.stereo.push_back(std::move(ex));
  }
  return fx;
}

EmbeddingSet random_set(SeededRng& rng, std::size_t vocab, std::size_t dim,
                        const std::string& name) {
  std::vector<std::string> tokens;
  Matrix mat(vocab, dim);
  for (std::size_t i = 0; i < vocab; ++i) {
    tokens.push_back(numbered("w", i));
    for (std::size_t j = 0; j < dim; ++j) mat(i, j) = rng.uniform(-1.0, 1.0);
  }
  return EmbeddingSet(std::move(tokens), std::move(mat), name);
}

}  // namespace dsd::testsupport
