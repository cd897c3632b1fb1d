#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "skg/tensor.hpp"

namespace skg {

// Lowercase, trim, collapse inner whitespace runs to a single space.
std::string normalize_token(std::string_view token);

// Splits a phrase into normalized words on whitespace and underscores.
std::vector<std::string> phrase_words(std::string_view phrase);

// Word-vector table in the common "token f1 f2 ... fdim" text layout.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 300) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }

  // Returns false (and keeps the existing row) when the normalized token is
  // already present.
  bool insert(std::string_view token, std::span<const double> vec);
  std::optional<std::size_t> find(std::string_view token) const;
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  const std::string& token(std::size_t i) const { return tokens_[i]; }
  // Row-major [size x dim] storage.
  std::span<const double> data() const { return data_; }

  // All rows as a [size x dim] tensor.
  Tensor as_matrix() const;
  void write(std::ostream& out) const;

 private:
  std::size_t dim_;
  std::vector<std::string> tokens_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

EmbeddingTable parse_embeddings(std::istream& in, std::size_t dim, const std::string& source = "<stream>");
EmbeddingTable load_embeddings(const std::string& path, std::size_t dim);
void save_embeddings(const EmbeddingTable& table, const std::string& path);

// Row ids of the phrase's words found in the table, ascending. Unknown words
// are dropped.
std::vector<std::size_t> phrase_rows(const EmbeddingTable& table, std::string_view phrase);

// Mean of the found word vectors; the zero vector when no word is known.
Tensor embed_phrase(const EmbeddingTable& table, std::string_view phrase);

}  // namespace skg
