#include "dsd/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dsd/error.hpp"

namespace dsd {
namespace {

bool parse_u64(std::string_view s, std::uint64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

// Split on spaces/tabs, tolerating a trailing \r.
std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

EmbeddingSet::EmbeddingSet(std::vector<std::string> vocab, Matrix matrix, std::string name)
    : vocab_(std::move(vocab)), matrix_(std::move(matrix)), name_(std::move(name)) {
  if (vocab_.size() != matrix_.rows())
    fail_data("embedding set: vocab size " + std::to_string(vocab_.size()) +
              " != matrix rows " + std::to_string(matrix_.rows()));
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    auto [it, inserted] = index_.emplace(vocab_[i], i);
    if (!inserted) fail_data("duplicate token in vocabulary: '" + vocab_[i] + "'");
  }
}

std::optional<std::size_t> EmbeddingSet::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingSet::at(std::string_view token) const {
  auto idx = find(token);
  if (!idx) fail_data("token not in vocabulary: '" + std::string(token) + "'");
  return *idx;
}

EmbeddingSet load_word2vec_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open embeddings file: " + path);

  std::string line;
  if (!std::getline(in, line)) fail_data(path + ": empty file");
  auto header = split_fields(line);
  std::uint64_t v = 0, d = 0;
  if (header.size() != 2 || !parse_u64(header[0], v) || !parse_u64(header[1], d) || v == 0 ||
      d == 0)
    fail_data(path + ": malformed header '" + line + "' (expected 'V d' with V,d >= 1)");

  std::vector<std::string> vocab;
  vocab.reserve(v);
  Matrix mat(v, d);
  for (std::uint64_t r = 0; r < v; ++r) {
    if (!std::getline(in, line))
      fail_data(path + ": expected " + std::to_string(v) + " rows, found " + std::to_string(r));
    auto fields = split_fields(line);
    if (fields.size() != d + 1)
      fail_data(path + ": row " + std::to_string(r + 1) + " has " +
                std::to_string(fields.size() ? fields.size() - 1 : 0) + " values, expected " +
                std::to_string(d));
    vocab.emplace_back(fields[0]);
    double norm_sq = 0.0;
    auto row = mat.row(r);
    for (std::uint64_t j = 0; j < d; ++j) {
      double x;
      if (!parse_double(fields[j + 1], x) || !std::isfinite(x))
        fail_data(path + ": row " + std::to_string(r + 1) + " ('" + vocab.back() +
                  "'): non-finite or unparsable value '" + std::string(fields[j + 1]) + "'");
      row[j] = x;
      norm_sq += x * x;
    }
    if (norm_sq == 0.0)
      fail_data(path + ": row " + std::to_string(r + 1) + " ('" + vocab.back() +
                "') has zero norm");
  }
  // Trailing content beyond V rows means the header lied.
  while (std::getline(in, line)) {
    if (!split_fields(line).empty())
      fail_data(path + ": extra data after " + std::to_string(v) + " rows");
  }
  return EmbeddingSet(std::move(vocab), std::move(mat), path);
}

void save_word2vec_text(const EmbeddingSet& set, const std::string& path) {
  if (set.size() == 0) fail_data("refusing to write empty embedding set to " + path);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail_data("cannot open for writing: " + path);
  std::fprintf(f, "%zu %zu\n", set.size(), set.dim());
  char buf[64];
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::fputs(set.vocab()[i].c_str(), f);
    auto row = set.matrix().row(i);
    for (double x : row) {
      int n = std::snprintf(buf, sizeof buf, " %.9g", x);
      std::fwrite(buf, 1, static_cast<std::size_t>(n), f);
    }
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) fail_data("write failed: " + path);
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    double n = norm2(row);
    if (n == 0.0) fail_data("normalize_rows: row " + std::to_string(i) + " has zero norm");
    for (double& x : row) x /= n;
  }
  return out;
}

EmbeddingSet normalize_rows(const EmbeddingSet& set) {
  return EmbeddingSet(set.vocab(), normalize_rows(set.matrix()), set.name());
}

std::optional<SentenceVector> sentence_vector(const EmbeddingSet& set, std::string_view text,
                                              const TokenizerConfig& cfg) {
  SentenceVector sv;
  sv.vector.assign(set.dim(), 0.0);
  for (const auto& tok : tokenize(text, cfg)) {
    auto idx = set.find(tok);
    if (!idx) {
      ++sv.skipped_tokens;
      continue;
    }
    auto row = set.matrix().row(*idx);
    for (std::size_t j = 0; j < set.dim(); ++j) sv.vector[j] += row[j];
    ++sv.used_tokens;
  }
  if (sv.used_tokens == 0) return std::nullopt;
  for (double& x : sv.vector) x /= static_cast<double>(sv.used_tokens);
  return sv;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail_data("cosine: dimension mismatch");
  const double nu = norm2(u), nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) fail_data("cosine: zero vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

}  // namespace dsd
