#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dsd {

// Tokenization rule used by every sentence-level metric: lowercase, split on
// whitespace, strip leading/trailing punctuation. No stemming. Pluggable so
// alternative rules can be swapped in without touching the metrics.
struct TokenizerConfig {
  bool lowercase = true;
  bool strip_punctuation = true;
};

// UTF-8 aware for the ranges that actually occur in the benchmark files:
// ASCII plus Latin-1 supplement and the General Punctuation block.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg = {});

}  // namespace dsd
