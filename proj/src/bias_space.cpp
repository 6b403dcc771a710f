#include "dsd/bias_space.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "dsd/error.hpp"

namespace dsd {

using ordered_json = nlohmann::ordered_json;

void BiasSpec::validate() const {
  if (category != "gender" && category != "race" && category != "religion" &&
      category != "custom")
    fail_data("bias spec: category must be gender, race, religion or custom (got '" +
              category + "')");
  if (groups.size() < 2) fail_data("bias spec '" + category + "': needs at least 2 groups");
  std::set<std::string> seen;
  for (const auto& [name, tokens] : groups) {
    if (tokens.empty()) fail_data("bias spec: group '" + name + "' is empty");
    for (const auto& t : tokens)
      if (!seen.insert(t).second)
        fail_data("bias spec: token '" + t + "' appears in more than one group");
  }
  for (const auto& [name, tokens] : attribute_sets)
    if (tokens.empty()) fail_data("bias spec: attribute set '" + name + "' is empty");
  if (attribute_sets.empty()) fail_data("bias spec: no attribute sets");
  if (targets.empty()) fail_data("bias spec: no targets");
}

std::vector<std::string> BiasSpec::all_group_tokens() const {
  std::vector<std::string> out;
  for (const auto& [_, tokens] : groups) out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

std::vector<std::string> BiasSpec::all_attribute_tokens() const {
  std::vector<std::string> out;
  for (const auto& [_, tokens] : attribute_sets)
    out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

namespace {

std::vector<std::pair<std::string, std::vector<std::string>>> parse_named_lists(
    const ordered_json& j, const std::string& what) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  if (!j.is_object()) fail_data("bias spec: '" + what + "' must be an object of name -> list");
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::vector<std::string> tokens;
    for (const auto& t : it.value()) tokens.push_back(t.get<std::string>());
    out.emplace_back(it.key(), std::move(tokens));
  }
  return out;
}

}  // namespace

BiasSpec load_bias_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open bias spec: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail_data("bias spec " + path + ": invalid JSON: " + e.what());
  }
  BiasSpec spec;
  try {
    spec.category = j.value("category", std::string("custom"));
    spec.groups = parse_named_lists(j.at("groups"), "groups");
    spec.attribute_sets = parse_named_lists(j.at("attribute_sets"), "attribute_sets");
    for (const auto& t : j.at("targets")) spec.targets.push_back(t.get<std::string>());
    if (j.contains("neutral_words"))
      for (const auto& t : j["neutral_words"]) spec.neutral_words.push_back(t.get<std::string>());
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail_data("bias spec " + path + ": " + e.what());
  }
  spec.validate();
  return spec;
}

void save_bias_spec(const BiasSpec& spec, const std::string& path) {
  ordered_json j;
  j["category"] = spec.category;
  ordered_json groups = ordered_json::object();
  for (const auto& [name, tokens] : spec.groups) groups[name] = tokens;
  j["groups"] = groups;
  ordered_json attrs = ordered_json::object();
  for (const auto& [name, tokens] : spec.attribute_sets) attrs[name] = tokens;
  j["attribute_sets"] = attrs;
  j["targets"] = spec.targets;
  if (!spec.neutral_words.empty()) j["neutral_words"] = spec.neutral_words;
  std::ofstream out(path);
  if (!out) fail_data("cannot write bias spec: " + path);
  out << j.dump(2) << "\n";
}

BiasSubspace build_subspace(const EmbeddingSet& set, const BiasSpec& spec) {
  spec.validate();
  const auto anchors = spec.all_group_tokens();
  std::vector<std::size_t> rows;
  std::string missing;
  for (const auto& tok : anchors) {
    if (auto idx = set.find(tok))
      rows.push_back(*idx);
    else
      missing += missing.empty() ? tok : ", " + tok;
  }
  if (!missing.empty()) fail_data("bias spec anchors missing from vocabulary: " + missing);

  const std::size_t d = set.dim();
  std::vector<double> mean(d, 0.0);
  for (auto r : rows) {
    auto row = set.matrix().row(r);
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (double& x : mean) x /= static_cast<double>(rows.size());

  BiasSubspace sub;
  sub.neutral_ref = mean;
  sub.source_tokens = anchors;
  sub.basis = Matrix(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = set.matrix().row(rows[i]);
    auto dst = sub.basis.row(i);
    double n = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dst[j] = src[j] - mean[j];
      n += dst[j] * dst[j];
    }
    n = std::sqrt(n);
    if (n <= 1e-12)
      fail_data("bias subspace: anchor '" + anchors[i] +
                "' coincides with the neutral reference (degenerate row)");
    for (std::size_t j = 0; j < d; ++j) dst[j] /= n;
  }
  return sub;
}

NeutralSet neutral_set(const EmbeddingSet& set, const BiasSpec& spec) {
  spec.validate();
  NeutralSet out;
  if (!spec.neutral_words.empty()) {
    out.policy = NeutralPolicy::explicit_list;
    std::unordered_set<std::string> forbidden;
    for (const auto& t : spec.all_group_tokens()) forbidden.insert(t);
    for (const auto& t : spec.all_attribute_tokens()) forbidden.insert(t);
    for (const auto& tok : spec.neutral_words) {
      if (forbidden.count(tok))
        fail_data("neutral word '" + tok + "' is a group or attribute token");
      if (auto idx = set.find(tok))
        out.indices.push_back(*idx);
      else
        out.warnings.push_back("neutral word not in vocabulary, skipped: " + tok);
    }
  } else {
    out.policy = NeutralPolicy::vocab_minus_bias_words;
    std::unordered_set<std::string> excluded;
    for (const auto& t : spec.all_group_tokens()) excluded.insert(t);
    for (const auto& t : spec.all_attribute_tokens()) excluded.insert(t);
    for (const auto& t : spec.targets) excluded.insert(t);
    for (std::size_t i = 0; i < set.size(); ++i)
      if (!excluded.count(set.vocab()[i])) out.indices.push_back(i);
  }
  if (out.indices.empty()) fail_data("neutral set is empty");
  return out;
}

double direct_bias(const EmbeddingSet& set, const std::string& word,
                   const std::pair<std::string, std::string>& axis) {
  auto w = set.matrix().row(set.at(word));
  auto a = set.matrix().row(set.at(axis.first));
  auto b = set.matrix().row(set.at(axis.second));
  std::vector<double> diff(set.dim());
  for (std::size_t j = 0; j < set.dim(); ++j) diff[j] = a[j] - b[j];
  if (norm2(diff) == 0.0)
    fail_data("direct_bias: axis (" + axis.first + ", " + axis.second + ") is zero");
  return std::fabs(cosine(w, diff));
}

double projection_energy(const Matrix& vectors, const BiasSubspace& subspace) {
  if (vectors.cols() != subspace.dim())
    fail_data("projection_energy: dimension mismatch (" + std::to_string(vectors.cols()) +
              " vs " + std::to_string(subspace.dim()) + ")");
  if (vectors.rows() == 0) return 0.0;
  const Matrix proj = matmul_nt(vectors, subspace.basis);  // m x k
  const double f = frobenius(proj);
  return f * f / static_cast<double>(vectors.rows());
}

}  // namespace dsd
