// SPDX-License-Identifier: Apache-2.0

#include "xattn/text.hpp"

#include <algorithm>
#include <cctype>

namespace xattn::text {

const AttributeVocabulary& vocabulary() {
  static const AttributeVocabulary vocab = [] {
    AttributeVocabulary v;
    v.words = {"left",    "right",      "lower",     "middle",      "upper",
               "lateral", "bilateral",  "basal",     "apical",      "aspiration",
               "small",   "large",      "diffuse",   "multifocal",  "focal",
               "effusion", "atelectasis", "severe",  "acute",       "moderate",
               "positive", "uncertain"};
    for (std::size_t i = 0; i < v.words.size(); ++i) v.index[v.words[i]] = i;
    return v;
  }();
  return vocab;
}

const std::vector<std::string>& default_disease_terms() {
  static const std::vector<std::string> terms = {"pneumonia", "consolidation",
                                                 "infiltrate", "opacity"};
  return terms;
}

const std::vector<std::string>& negation_cues() {
  static const std::vector<std::string> cues = {"no",   "not",      "without",
                                                "free", "negative", "clear"};
  return cues;
}

std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  const auto mark_sentence = [&] {
    flush();
    if (!out.empty() && out.back() != kSentenceMark) out.push_back(kSentenceMark);
  };
  std::size_t newlines = 0;
  for (unsigned char c : s) {
    if (c == '\n') {
      if (++newlines == 2) mark_sentence();
      flush();
      continue;
    }
    newlines = 0;
    if (std::isalnum(c)) {
      cur.push_back(char(std::tolower(c)));
    } else if (c == '.' || c == '!' || c == '?') {
      mark_sentence();
    } else {
      // Whitespace, hyphens and remaining punctuation all end the token.
      flush();
    }
  }
  flush();
  return out;
}

namespace {
bool contains_word(const std::vector<std::string>& list, const std::string& w) {
  return std::find(list.begin(), list.end(), w) != list.end();
}
}  // namespace

std::vector<std::size_t> extract_attributes(const std::string& report_text,
                                            const AttributeVocabulary& vocab,
                                            const std::vector<std::string>& disease_terms) {
  const std::vector<std::string> tokens = tokenize(report_text);
  std::vector<bool> present(vocab.size(), false);
  std::size_t start = 0;
  for (std::size_t end = 0; end <= tokens.size(); ++end) {
    if (end != tokens.size() && tokens[end] != kSentenceMark) continue;
    // Sentence [start, end). It qualifies when some disease mention has no
    // negation cue anywhere before it.
    std::size_t first_cue = end;
    std::size_t first_disease = end;
    for (std::size_t i = start; i < end; ++i) {
      if (first_cue == end && contains_word(negation_cues(), tokens[i])) first_cue = i;
      if (first_disease == end && contains_word(disease_terms, tokens[i]))
        first_disease = i;
    }
    if (first_disease < end && first_disease < first_cue) {
      for (std::size_t i = start; i < end; ++i) {
        auto it = vocab.index.find(tokens[i]);
        if (it != vocab.index.end()) present[it->second] = true;
      }
    }
    start = end + 1;
  }
  std::vector<std::size_t> attrs;
  for (std::size_t j = 0; j < present.size(); ++j)
    if (present[j]) attrs.push_back(j);
  return attrs;
}

}  // namespace xattn::text
