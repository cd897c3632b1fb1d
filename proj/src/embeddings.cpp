#include "skg/embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "skg/errors.hpp"

namespace skg {

std::string normalize_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  bool pending_space = false;
  for (char ch : token) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> phrase_words(std::string_view phrase) {
  std::string spaced(phrase);
  std::replace(spaced.begin(), spaced.end(), '_', ' ');
  std::vector<std::string> words;
  std::istringstream ss(normalize_token(spaced));
  for (std::string w; ss >> w;) words.push_back(std::move(w));
  return words;
}

bool EmbeddingTable::insert(std::string_view token, std::span<const double> vec) {
  if (vec.size() != dim_)
    throw DimensionError("embedding for '" + std::string(token) + "' has " + std::to_string(vec.size()) +
                         " values, expected " + std::to_string(dim_));
  std::string key = normalize_token(token);
  if (key.empty() || index_.count(key)) return false;
  index_.emplace(key, tokens_.size());
  tokens_.push_back(std::move(key));
  data_.insert(data_.end(), vec.begin(), vec.end());
  return true;
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view token) const {
  auto it = index_.find(normalize_token(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Tensor EmbeddingTable::as_matrix() const { return Tensor({size(), dim_}, data_); }

void EmbeddingTable::write(std::ostream& out) const {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < size(); ++i) {
    out << tokens_[i];
    for (double v : row(i)) out << ' ' << v;
    out << '\n';
  }
}

EmbeddingTable parse_embeddings(std::istream& in, std::size_t dim, const std::string& source) {
  EmbeddingTable table(dim);
  std::vector<double> vec;
  std::size_t lineno = 0;
  std::size_t nonempty = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    ++nonempty;
    const auto tok_end = line.find_first_of(" \t", first);
    if (tok_end == std::string::npos) throw ParseError(source, lineno, "token without a vector");
    const std::string token = line.substr(first, tok_end - first);

    vec.clear();
    const char* p = line.data() + tok_end;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t'))
        throw ParseError(source, lineno, "malformed number in vector for '" + token + "'");
      if (!std::isfinite(v)) throw ParseError(source, lineno, "non-finite value in vector for '" + token + "'");
      vec.push_back(v);
      p = next;
    }
    if (vec.size() != dim)
      throw ParseError(source, lineno,
                       "expected " + std::to_string(dim) + " floats for '" + token + "', found " +
                           std::to_string(vec.size()));
    table.insert(token, vec);
  }
  if (nonempty == 0) throw ParseError(source, lineno, "embedding file is empty");
  return table;
}

EmbeddingTable load_embeddings(const std::string& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file '" + path + "'");
  return parse_embeddings(in, dim, path);
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write embedding file '" + path + "'");
  table.write(out);
}

std::vector<std::size_t> phrase_rows(const EmbeddingTable& table, std::string_view phrase) {
  std::vector<std::size_t> rows;
  for (const auto& w : phrase_words(phrase))
    if (auto r = table.find(w)) rows.push_back(*r);
  std::sort(rows.begin(), rows.end());
  return rows;
}

Tensor embed_phrase(const EmbeddingTable& table, std::string_view phrase) {
  Tensor out({table.dim()});
  const auto rows = phrase_rows(table, phrase);
  if (rows.empty()) return out;
  for (std::size_t r : rows) {
    const auto v = table.row(r);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
  }
  const double n = static_cast<double>(rows.size());
  for (double& v : out.values()) v /= n;
  return out;
}

}  // namespace skg
