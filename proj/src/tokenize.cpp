#include "dsd/tokenize.hpp"

#include <cstdint>

namespace dsd {
namespace {

struct Cp {
  char32_t value;
  int bytes;
};

// Minimal UTF-8 decode; invalid bytes are passed through as Latin-1.
Cp decode(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  auto cont = [&](std::size_t i) {
    return i < s.size() && (static_cast<unsigned char>(s[i]) & 0xC0) == 0x80;
  };
  if ((b0 & 0xE0) == 0xC0 && cont(pos + 1)) {
    char32_t v = (static_cast<char32_t>(b0 & 0x1F) << 6) |
                 (static_cast<unsigned char>(s[pos + 1]) & 0x3F);
    return {v, 2};
  }
  if ((b0 & 0xF0) == 0xE0 && cont(pos + 1) && cont(pos + 2)) {
    char32_t v = (static_cast<char32_t>(b0 & 0x0F) << 12) |
                 ((static_cast<char32_t>(static_cast<unsigned char>(s[pos + 1]) & 0x3F)) << 6) |
                 (static_cast<unsigned char>(s[pos + 2]) & 0x3F);
    return {v, 3};
  }
  if ((b0 & 0xF8) == 0xF0 && cont(pos + 1) && cont(pos + 2) && cont(pos + 3)) {
    char32_t v = (static_cast<char32_t>(b0 & 0x07) << 18) |
                 ((static_cast<char32_t>(static_cast<unsigned char>(s[pos + 1]) & 0x3F)) << 12) |
                 ((static_cast<char32_t>(static_cast<unsigned char>(s[pos + 2]) & 0x3F)) << 6) |
                 (static_cast<unsigned char>(s[pos + 3]) & 0x3F);
    return {v, 4};
  }
  return {b0, 1};
}

bool is_space_cp(char32_t c) {
  if (c == ' ' || (c >= 0x09 && c <= 0x0D)) return true;
  switch (c) {
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_punct_cp(char32_t c) {
  if (c < 0x80) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
  }
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
      return true;
    default:
      // General Punctuation block: dashes, quotes, ellipsis, daggers, permille.
      return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E);
  }
}

void append_cp(std::string& out, char32_t c, bool lower) {
  if (c < 0x80) {
    if (lower && c >= 'A' && c <= 'Z') c += 0x20;
    out.push_back(static_cast<char>(c));
    return;
  }
  if (lower && c >= 0xC0 && c <= 0xDE && c != 0xD7) c += 0x20;  // Latin-1 uppercase letters
  // Re-encode as UTF-8.
  if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg) {
  std::vector<std::string> tokens;
  std::vector<char32_t> cps;
  std::size_t pos = 0;
  auto flush = [&] {
    if (cps.empty()) return;
    std::size_t lo = 0, hi = cps.size();
    if (cfg.strip_punctuation) {
      while (lo < hi && is_punct_cp(cps[lo])) ++lo;
      while (hi > lo && is_punct_cp(cps[hi - 1])) --hi;
    }
    if (lo < hi) {
      std::string tok;
      for (std::size_t i = lo; i < hi; ++i) append_cp(tok, cps[i], cfg.lowercase);
      tokens.push_back(std::move(tok));
    }
    cps.clear();
  };
  while (pos < text.size()) {
    Cp cp = decode(text, pos);
    pos += cp.bytes;
    if (is_space_cp(cp.value)) {
      flush();
    } else {
      cps.push_back(cp.value);
    }
  }
  flush();
  return tokens;
}

}  // namespace dsd
