// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace xattn::text {

// Sentence-boundary marker token emitted for '.', '!', '?' and blank lines.
inline constexpr const char* kSentenceMark = ".";

struct Report {
  std::string id;
  std::string text;
  std::optional<double> severity;  // 0..8 expert score when present
};

struct AttributeVocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, std::size_t> index;

  bool contains(const std::string& w) const { return index.count(w) != 0; }
  std::size_t at(const std::string& w) const { return index.at(w); }
  std::size_t size() const { return words.size(); }
};

// The fixed attribute vocabulary (22 words, fixed order), compiled in.
const AttributeVocabulary& vocabulary();

const std::vector<std::string>& default_disease_terms();
const std::vector<std::string>& negation_cues();

// Lowercases, strips punctuation, splits hyphenated words, and inserts
// kSentenceMark at sentence boundaries. Re-tokenizing the space-joined
// output is stable.
std::vector<std::string> tokenize(const std::string& text);

// Vocabulary indices (ascending) of attribute words co-occurring in a
// sentence that mentions a disease term and carries no negation cue before
// that mention.
std::vector<std::size_t> extract_attributes(const std::string& report_text,
                                            const AttributeVocabulary& vocab,
                                            const std::vector<std::string>& disease_terms);

inline std::vector<std::size_t> extract_attributes(const std::string& report_text) {
  return extract_attributes(report_text, vocabulary(), default_disease_terms());
}

}  // namespace xattn::text
