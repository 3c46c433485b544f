// SPDX-License-Identifier: Apache-2.0

#include "xattn/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "xattn/errors.hpp"
#include "xattn/kernels.hpp"
#include "xattn/rng.hpp"

namespace xattn {

EmbeddingTable::EmbeddingTable(std::size_t dim, std::vector<std::string> words)
    : dim_(dim), words_(std::move(words)), vecs_(words_.size(), dim) {
  for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = i;
}

const double* EmbeddingTable::vector(const std::string& w) const {
  auto it = index_.find(w);
  if (it == index_.end()) throw MissingWord(w);
  return vecs_.row_ptr(it->second);
}

double* EmbeddingTable::vector_mut(const std::string& w) {
  auto it = index_.find(w);
  if (it == index_.end()) throw MissingWord(w);
  return vecs_.row_ptr(it->second);
}

std::uint64_t EmbeddingTable::count(const std::string& w) const {
  auto it = counts_.find(w);
  return it == counts_.end() ? 0 : it->second;
}

void EmbeddingTable::set_count(const std::string& w, std::uint64_t c) { counts_[w] = c; }

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

EmbeddingTable train_embeddings(const std::vector<std::vector<std::string>>& corpus,
                                const SkipGramConfig& cfg) {
  // Count words; vocabulary ordered by frequency (desc), then lexicographic,
  // so the table layout is independent of sentence order.
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total_tokens = 0;
  for (const auto& sent : corpus)
    for (const auto& w : sent) {
      ++counts[w];
      ++total_tokens;
    }
  if (total_tokens == 0) throw EmptyCorpus();

  std::vector<std::pair<std::string, std::uint64_t>> by_freq(counts.begin(), counts.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(by_freq.size());
  for (const auto& [w, c] : by_freq) words.push_back(w);

  for (const auto& w : text::vocabulary().words)
    if (!counts.count(w))
      std::cerr << "warning: attribute word '" << w << "' absent from corpus\n";

  EmbeddingTable table(cfg.dim, words);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < words.size(); ++i) {
    table.set_count(words[i], counts[words[i]]);
    index[words[i]] = i;
  }

  const std::size_t vocab_n = words.size();
  Rng rng(cfg.seed);
  for (std::size_t i = 0; i < vocab_n; ++i) {
    double* v = table.vector_mut(i);
    for (std::size_t d = 0; d < cfg.dim; ++d)
      v[d] = (rng.uniform() - 0.5) / double(cfg.dim);
  }
  Tensor ctx(vocab_n, cfg.dim);  // output-side vectors, zero-initialized

  // Negative-sampling table over unigram^0.75.
  std::vector<double> cum(vocab_n);
  double z = 0.0;
  for (std::size_t i = 0; i < vocab_n; ++i) {
    z += std::pow(double(counts[words[i]]), 0.75);
    cum[i] = z;
  }
  const auto sample_negative = [&](Rng& r) -> std::size_t {
    const double u = r.uniform() * z;
    return std::size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
  };

  // Sentences as index sequences.
  std::vector<std::vector<std::size_t>> sents;
  sents.reserve(corpus.size());
  for (const auto& sent : corpus) {
    std::vector<std::size_t> s;
    s.reserve(sent.size());
    for (const auto& w : sent) s.push_back(index[w]);
    sents.push_back(std::move(s));
  }

  const std::uint64_t planned = total_tokens * std::uint64_t(cfg.epochs);
  std::uint64_t processed = 0;
  std::vector<double> acc(cfg.dim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& sent : sents) {
      // Subsample frequent words, then train on the surviving sequence.
      std::vector<std::size_t> kept;
      kept.reserve(sent.size());
      for (std::size_t wi : sent) {
        ++processed;
        if (cfg.subsample_threshold > 0.0) {
          const double f = double(counts[words[wi]]) / double(total_tokens);
          if (f > cfg.subsample_threshold) {
            const double keep =
                (std::sqrt(f / cfg.subsample_threshold) + 1.0) * cfg.subsample_threshold / f;
            if (rng.uniform() >= keep) continue;
          }
        }
        kept.push_back(wi);
      }
      for (std::size_t pos = 0; pos < kept.size(); ++pos) {
        const double frac = double(processed) / double(planned);
        const double lr = cfg.learning_rate * std::max(0.1, 1.0 - 0.9 * frac);
        const std::size_t center = kept[pos];
        const int span = 1 + int(rng.uniform_int(std::uint64_t(cfg.window)));
        const std::size_t lo = pos >= std::size_t(span) ? pos - std::size_t(span) : 0;
        const std::size_t hi = std::min(kept.size(), pos + std::size_t(span) + 1);
        for (std::size_t cpos = lo; cpos < hi; ++cpos) {
          if (cpos == pos) continue;
          const std::size_t target = kept[cpos];
          double* vin = table.vector_mut(center);
          std::fill(acc.begin(), acc.end(), 0.0);
          for (int neg = -1; neg < cfg.negatives_per_target; ++neg) {
            std::size_t out;
            double label;
            if (neg < 0) {
              out = target;
              label = 1.0;
            } else {
              out = sample_negative(rng);
              if (out == target) continue;
              label = 0.0;
            }
            double* vout = ctx.row_ptr(out);
            const double g = (label - sigmoid(kern::dot(vin, vout, cfg.dim))) * lr;
            kern::axpy(g, vout, acc.data(), cfg.dim);
            kern::axpy(g, vin, vout, cfg.dim);
          }
          kern::axpy(1.0, acc.data(), vin, cfg.dim);
        }
      }
    }
    if (!table.all_finite())
      throw NonFinite("train_embeddings: vectors diverged at epoch " +
                      std::to_string(epoch));
  }
  return table;
}

Tensor embed_attributes(const std::vector<std::size_t>& attrs,
                        const text::AttributeVocabulary& vocab,
                        const EmbeddingTable& table) {
  std::vector<std::size_t> sorted = attrs;
  std::sort(sorted.begin(), sorted.end());
  Tensor m(sorted.size(), table.dim());
  for (std::size_t r = 0; r < sorted.size(); ++r) {
    const double* v = table.vector(vocab.words.at(sorted[r]));
    std::copy(v, v + table.dim(), m.row_ptr(r));
  }
  return m;
}

std::string negative_attribute(const std::string& attr, const EmbeddingTable& table) {
  const double* va = table.vector(attr);
  const std::size_t d = table.dim();
  const double na = std::sqrt(kern::sumsq(va, d));
  bool found = false;
  double best_cos = 0.0;
  std::string best;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string& w = table.words()[i];
    if (w == attr) continue;
    const double* vw = table.vector(i);
    const double denom = std::max(na * std::sqrt(kern::sumsq(vw, d)), 1e-12);
    const double c = kern::dot(va, vw, d) / denom;
    if (!found || c > best_cos || (c == best_cos && w < best)) {
      found = true;
      best_cos = c;
      best = w;
    }
  }
  if (!found) throw MissingWord("negative_attribute: no candidate word besides " + attr);
  return best;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + tmp + " for writing");
    out << table.size() << " " << table.dim() << "\n";
    char buf[64];
    for (std::size_t i = 0; i < table.size(); ++i) {
      out << table.words()[i];
      const double* v = table.vector(i);
      for (std::size_t dcol = 0; dcol < table.dim(); ++dcol) {
        std::snprintf(buf, sizeof buf, " %.9g", v[dcol]);
        out << buf;
      }
      out << "\n";
    }
    if (!out) throw IoFailure("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoFailure("rename failed: " + path);
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  std::size_t n = 0, dim = 0;
  std::string header;
  if (!std::getline(in, header)) throw ParseError(path + ": empty file");
  {
    std::istringstream hs(header);
    if (!(hs >> n >> dim) || dim == 0) throw ParseError(path + ": bad header");
  }
  std::vector<std::string> words(n);
  std::vector<std::vector<double>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string line;
    if (!std::getline(in, line))
      throw ParseError(path + ": truncated at word " + std::to_string(i));
    std::istringstream ls(line);
    if (!(ls >> words[i])) throw ParseError(path + ": bad line " + std::to_string(i + 2));
    rows[i].resize(dim);
    for (std::size_t dcol = 0; dcol < dim; ++dcol)
      if (!(ls >> rows[i][dcol]))
        throw ParseError(path + ": bad vector on line " + std::to_string(i + 2));
  }
  EmbeddingTable table(dim, words);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(rows[i].begin(), rows[i].end(), table.vector_mut(i));
  return table;
}

}  // namespace xattn
