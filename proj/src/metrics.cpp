#include "dsd/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dsd/error.hpp"
#include "dsd/rng.hpp"

namespace dsd {

using ordered_json = nlohmann::ordered_json;

MacReport mac(const EmbeddingSet& set, const std::vector<std::string>& targets,
              const std::vector<std::pair<std::string, std::vector<std::string>>>& attribute_sets) {
  if (targets.empty()) fail_data("mac: no targets");
  if (attribute_sets.empty()) fail_data("mac: no attribute sets");

  MacReport report;
  std::size_t in_vocab_targets = 0;
  for (const auto& target : targets) {
    auto t_idx = set.find(target);
    if (!t_idx) {
      report.excluded += attribute_sets.size();
      continue;
    }
    ++in_vocab_targets;
    auto t_row = set.matrix().row(*t_idx);
    for (const auto& [set_name, attrs] : attribute_sets) {
      double sum = 0.0;
      std::size_t used = 0;
      for (const auto& attr : attrs) {
        if (auto a_idx = set.find(attr)) {
          sum += cosine_distance(t_row, set.matrix().row(*a_idx));
          ++used;
        }
      }
      if (used == 0) {
        ++report.excluded;
        continue;
      }
      report.per_pair.push_back({target, set_name, sum / static_cast<double>(used)});
    }
  }
  if (in_vocab_targets == 0) fail_data("mac: every target is out of vocabulary");
  if (report.per_pair.empty()) fail_data("mac: no (target, attribute-set) pair is in vocabulary");
  double total = 0.0;
  for (const auto& p : report.per_pair) total += p.distance;
  report.n_pairs = report.per_pair.size();
  report.mac = total / static_cast<double>(report.n_pairs);
  return report;
}

double mac_significance(const MacReport& before, const MacReport& after, int n_perm,
                        std::uint64_t seed) {
  if (n_perm < 1) fail_usage("mac_significance: n_perm must be >= 1");
  if (before.per_pair.size() != after.per_pair.size())
    fail_data("mac_significance: pair lists differ in size");
  const std::size_t n = before.per_pair.size();
  std::vector<double> delta(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (before.per_pair[i].target != after.per_pair[i].target ||
        before.per_pair[i].attribute_set != after.per_pair[i].attribute_set)
      fail_data("mac_significance: pair lists do not line up at index " + std::to_string(i));
    delta[i] = after.per_pair[i].distance - before.per_pair[i].distance;
  }
  double obs = 0.0;
  for (double d : delta) obs += d;
  obs = std::fabs(obs / static_cast<double>(n));

  // Exhaustive when the sign patterns fit in the permutation budget.
  if (n <= 62 && (1ull << n) <= static_cast<std::uint64_t>(n_perm)) {
    const std::uint64_t patterns = 1ull << n;
    std::uint64_t count = 0;
    for (std::uint64_t bits = 0; bits < patterns; ++bits) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        sum += (bits >> i) & 1 ? -delta[i] : delta[i];
      if (std::fabs(sum / static_cast<double>(n)) >= obs) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(patterns);
  }

  SeededRng rng(seed);
  std::uint64_t count = 0;
  for (int p = 0; p < n_perm; ++p) {
    double sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
      std::uint64_t bits = rng.next_u64();
      for (int b = 0; b < 64 && i < n; ++b, ++i) sum += (bits >> b) & 1 ? -delta[i] : delta[i];
    }
    if (std::fabs(sum / static_cast<double>(n)) >= obs) ++count;
  }
  return static_cast<double>(count + 1) / static_cast<double>(n_perm + 1);
}

namespace {

// 1 / 0.5 / 0 for closer / tie / farther.
double agreement(double cos_preferred, double cos_other) {
  if (cos_preferred > cos_other) return 1.0;
  if (cos_preferred == cos_other) return 0.5;
  return 0.0;
}

}  // namespace

ScoreReport stereotype_score(const EmbeddingSet& set, const std::vector<StereoExample>& examples,
                             const TokenizerConfig& cfg) {
  ScoreReport report;
  double agree_sum = 0.0;
  for (const auto& ex : examples) {
    auto c = sentence_vector(set, ex.context, cfg);
    auto s = sentence_vector(set, ex.stereo_sentence, cfg);
    auto a = sentence_vector(set, ex.anti_sentence, cfg);
    if (!c || !s || !a) {
      ++report.excluded;
      continue;
    }
    const double cs = cosine(c->vector, s->vector);
    const double ca = cosine(c->vector, a->vector);
    const double g = agreement(cs, ca);
    if (g == 0.5) ++report.ties;
    agree_sum += g;
    ++report.counted;
  }
  if (report.counted == 0) fail_data("stereotype_score: no scorable examples");
  report.score = 100.0 * agree_sum / static_cast<double>(report.counted);
  return report;
}

TokenDiff token_diff(const std::vector<std::string>& more, const std::vector<std::string>& less) {
  const std::size_t n = more.size(), m = less.size();
  // Longest common subsequence over the token lists; robust to multi-word
  // substitutions anywhere in the sentence.
  std::vector<std::vector<std::uint32_t>> lcs(n + 1, std::vector<std::uint32_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      lcs[i][j] = more[i] == less[j] ? lcs[i + 1][j + 1] + 1
                                     : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  TokenDiff diff;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (more[i] == less[j]) {
      diff.common.push_back(more[i]);
      ++i;
      ++j;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      diff.only_more.push_back(more[i]);
      ++i;
    } else {
      diff.only_less.push_back(less[j]);
      ++j;
    }
  }
  for (; i < n; ++i) diff.only_more.push_back(more[i]);
  for (; j < m; ++j) diff.only_less.push_back(less[j]);
  return diff;
}

ScoreReport crows_score(const EmbeddingSet& set, const std::vector<CrowsPair>& pairs,
                        const TokenizerConfig& cfg) {
  ScoreReport report;
  double agree_sum = 0.0;
  for (const auto& pair : pairs) {
    const TokenDiff diff = token_diff(tokenize(pair.sent_more, cfg), tokenize(pair.sent_less, cfg));
    if (diff.common.empty() || diff.only_more.empty() || diff.only_less.empty()) {
      ++report.excluded;
      continue;
    }
    auto mean_of = [&](const std::vector<std::string>& tokens) -> std::optional<std::vector<double>> {
      std::vector<double> acc(set.dim(), 0.0);
      std::size_t used = 0;
      for (const auto& tok : tokens) {
        if (auto idx = set.find(tok)) {
          auto row = set.matrix().row(*idx);
          for (std::size_t k = 0; k < set.dim(); ++k) acc[k] += row[k];
          ++used;
        }
      }
      if (used == 0) return std::nullopt;
      for (double& x : acc) x /= static_cast<double>(used);
      return acc;
    };
    auto context = mean_of(diff.common);
    auto u_more = mean_of(diff.only_more);
    auto u_less = mean_of(diff.only_less);
    if (!context || !u_more || !u_less) {
      ++report.excluded;
      continue;
    }
    const double cm = cosine(*context, *u_more);
    const double cl = cosine(*context, *u_less);
    // Stereo-labeled pairs agree when the context sits closer to the
    // sent_more continuation; antistereo-labeled pairs the other way around.
    const double g = pair.antistereo ? agreement(cl, cm) : agreement(cm, cl);
    if (g == 0.5) ++report.ties;
    agree_sum += g;
    ++report.counted;
  }
  if (report.counted == 0) fail_data("crows_score: no scorable pairs");
  report.score = 100.0 * agree_sum / static_cast<double>(report.counted);
  return report;
}

namespace {

std::string json_str(const ordered_json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    fail_data(std::string("stereo record: missing string field '") + key + "'");
  return j[key].get<std::string>();
}

std::vector<StereoExample> parse_public_stereoset(const ordered_json& root) {
  std::vector<StereoExample> out;
  if (!root.contains("data")) fail_data("stereoset file: no 'data' object");
  for (const char* section : {"intrasentence", "intersentence"}) {
    if (!root["data"].contains(section)) continue;
    for (const auto& entry : root["data"][section]) {
      StereoExample ex;
      ex.context = json_str(entry, "context");
      ex.category = entry.value("bias_type", std::string());
      std::string stereo, anti;
      for (const auto& sent : entry.at("sentences")) {
        const std::string label = sent.value("gold_label", std::string());
        if (label == "stereotype")
          stereo = json_str(sent, "sentence");
        else if (label == "anti-stereotype")
          anti = json_str(sent, "sentence");
      }
      if (stereo.empty() || anti.empty()) continue;
      ex.stereo_sentence = stereo;
      ex.anti_sentence = anti;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace

std::vector<StereoExample> load_stereo_examples(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open stereo records: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (content.empty()) fail_data(path + ": empty file");

  // The public benchmark layout is one big JSON object with a "data" key; the
  // normalized format is one record per line.
  std::size_t pos = content.find_first_not_of(" \t\r\n");
  if (pos != std::string::npos && content[pos] == '{' &&
      content.find("\"data\"") != std::string::npos) {
    try {
      return parse_public_stereoset(ordered_json::parse(content));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      fail_data(path + ": invalid benchmark JSON: " + e.what());
    }
  }

  std::vector<StereoExample> out;
  std::istringstream lines(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      fail_data(path + ":" + std::to_string(lineno) + ": invalid JSON record: " + e.what());
    }
    StereoExample ex;
    ex.context = json_str(j, "context");
    ex.stereo_sentence = json_str(j, "stereo");
    ex.anti_sentence = json_str(j, "anti");
    ex.category = j.value("category", std::string());
    if (ex.context.empty() || ex.stereo_sentence.empty() || ex.anti_sentence.empty())
      fail_data(path + ":" + std::to_string(lineno) + ": empty sentence field");
    out.push_back(std::move(ex));
  }
  if (out.empty()) fail_data(path + ": no stereo records");
  return out;
}

void save_stereo_examples(const std::vector<StereoExample>& examples, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write stereo records: " + path);
  for (const auto& ex : examples) {
    ordered_json j;
    j["context"] = ex.context;
    j["stereo"] = ex.stereo_sentence;
    j["anti"] = ex.anti_sentence;
    j["category"] = ex.category;
    out << j.dump() << "\n";
  }
}

namespace {

// Minimal RFC-4180 CSV reader (quoted fields, "" escapes, embedded newlines).
std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open csv: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < content.size()) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() || !row.empty()) end_row();
    } else if (c != '\r') {
      field.push_back(c);
    }
    ++i;
  }
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

}  // namespace

std::vector<CrowsPair> load_crows_pairs(const std::string& path) {
  auto rows = read_csv(path);
  if (rows.size() < 2) fail_data(path + ": need a header row and at least one pair");
  const auto& header = rows.front();
  auto col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail_data(path + ": missing column '" + name + "'");
  };
  const std::size_t c_more = col("sent_more");
  const std::size_t c_less = col("sent_less");
  const std::size_t c_dir = col("stereo_antistereo");
  const std::size_t c_type = col("bias_type");

  std::vector<CrowsPair> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    const std::size_t needed = std::max({c_more, c_less, c_dir, c_type}) + 1;
    if (fields.size() < needed)
      fail_data(path + ": row " + std::to_string(r + 1) + " has too few columns");
    CrowsPair pair;
    pair.sent_more = fields[c_more];
    pair.sent_less = fields[c_less];
    pair.bias_type = fields[c_type];
    const std::string& dir = fields[c_dir];
    if (dir == "stereo")
      pair.antistereo = false;
    else if (dir == "antistereo")
      pair.antistereo = true;
    else
      fail_data(path + ": row " + std::to_string(r + 1) + ": bad stereo_antistereo label '" +
                dir + "'");
    if (pair.sent_more == pair.sent_less)
      fail_data(path + ": row " + std::to_string(r + 1) + ": sentences are identical");
    out.push_back(std::move(pair));
  }
  return out;
}

void save_crows_pairs(const std::vector<CrowsPair>& pairs, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write crows pairs: " + path);
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += "\"\"";
      else q.push_back(c);
    }
    return q + "\"";
  };
  out << "sent_more,sent_less,stereo_antistereo,bias_type\n";
  for (const auto& p : pairs)
    out << quote(p.sent_more) << "," << quote(p.sent_less) << ","
        << (p.antistereo ? "antistereo" : "stereo") << "," << quote(p.bias_type) << "\n";
}

}  // namespace dsd
