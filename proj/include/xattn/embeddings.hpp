// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xattn/tensor.hpp"
#include "xattn/text.hpp"

namespace xattn {

struct SkipGramConfig {
  std::size_t dim = 256;
  int window = 5;
  int negatives_per_target = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  double subsample_threshold = 1e-3;  // 0 disables subsampling
  std::uint64_t seed = 1;
};

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t dim, std::vector<std::string> words);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool contains(const std::string& w) const { return index_.count(w) != 0; }

  // Throws MissingWord.
  const double* vector(const std::string& w) const;
  double* vector_mut(const std::string& w);
  const double* vector(std::size_t i) const { return vecs_.row_ptr(i); }
  double* vector_mut(std::size_t i) { return vecs_.row_ptr(i); }

  std::uint64_t count(const std::string& w) const;
  void set_count(const std::string& w, std::uint64_t c);

  bool all_finite() const { return vecs_.all_finite(); }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  Tensor vecs_;  // size() x dim()
  std::unordered_map<std::string, std::uint64_t> counts_;
};

// Skip-gram with negative sampling over the tokenized corpus. Deterministic
// for a fixed config. Throws EmptyCorpus when the corpus has no tokens; warns
// on stderr for attribute words missing from the corpus.
EmbeddingTable train_embeddings(const std::vector<std::vector<std::string>>& corpus,
                                const SkipGramConfig& cfg);

// Rows are the vectors of `attrs` in ascending vocabulary order. Throws
// MissingWord.
Tensor embed_attributes(const std::vector<std::size_t>& attrs,
                        const text::AttributeVocabulary& vocab,
                        const EmbeddingTable& table);

// Nearest word to attr by cosine similarity, excluding attr itself; ties go
// to the lexicographically smaller word. Throws MissingWord.
std::string negative_attribute(const std::string& attr, const EmbeddingTable& table);

// Text format: header "<size> <dim>", then "word v1 ... vdim" per line with
// 9 significant digits.
void save_embeddings(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_embeddings(const std::string& path);

}  // namespace xattn
