#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gbn/distributions.hpp"
#include "gbn/errors.hpp"
#include "gbn/rng.hpp"

namespace gbn {

struct Vocabulary {
  std::vector<std::string> terms;

  int size() const { return static_cast<int>(terms.size()); }

  static Vocabulary placeholder(int v_count) {
    Vocabulary vocab;
    vocab.terms.reserve(v_count);
    for (int v = 1; v <= v_count; ++v) vocab.terms.push_back("w" + std::to_string(v));
    return vocab;
  }
};

struct SparseEntry {
  int term;            // 0-based row index
  std::int64_t count;  // strictly positive
};

// Observed or latent integer counts, stored document-major: one sorted entry
// list per column. Entries are unique per (term, doc) and strictly positive.
class SparseCountMatrix {
 public:
  SparseCountMatrix() : v_count_(0) {}
  SparseCountMatrix(int v_count, int j_count)
      : v_count_(v_count), columns_(j_count) {}

  // Builds from (term, doc, count) triples (0-based); validates invariants.
  // line_of, when given, maps a triple index to its source line for errors.
  static SparseCountMatrix from_triples(
      int v_count, int j_count,
      const std::vector<std::tuple<int, int, std::int64_t>>& triples,
      const std::vector<std::size_t>* line_of = nullptr) {
    SparseCountMatrix m(v_count, j_count);
    std::vector<std::vector<std::pair<int, std::size_t>>> seen(j_count);
    for (std::size_t i = 0; i < triples.size(); ++i) {
      auto [v, j, c] = triples[i];
      const std::size_t line = line_of ? (*line_of)[i] : i + 1;
      if (v < 0 || v >= v_count || j < 0 || j >= j_count) {
        throw ParseError("line " + std::to_string(line) + ": index out of range");
      }
      if (c <= 0) {
        throw ParseError("line " + std::to_string(line) + ": count must be positive");
      }
      m.columns_[j].push_back({v, c});
      seen[j].push_back({v, line});
    }
    for (int j = 0; j < j_count; ++j) {
      auto& col = m.columns_[j];
      std::sort(col.begin(), col.end(),
                [](const SparseEntry& a, const SparseEntry& b) { return a.term < b.term; });
      for (std::size_t i = 1; i < col.size(); ++i) {
        if (col[i].term == col[i - 1].term) {
          auto& lines = seen[j];
          std::sort(lines.begin(), lines.end());
          std::size_t line = 0;
          for (std::size_t s = 1; s < lines.size(); ++s) {
            if (lines[s].first == lines[s - 1].first) {
              line = std::max(lines[s].second, lines[s - 1].second);
              break;
            }
          }
          throw ParseError("line " + std::to_string(line) + ": duplicate (term, doc) entry");
        }
      }
    }
    return m;
  }

  int rows() const { return v_count_; }
  int cols() const { return static_cast<int>(columns_.size()); }

  const std::vector<SparseEntry>& column(int j) const { return columns_[j]; }

  std::int64_t at(int v, int j) const {
    for (const auto& e : columns_[j]) {
      if (e.term == v) return e.count;
      if (e.term > v) break;
    }
    return 0;
  }

  std::int64_t nnz() const {
    std::int64_t n = 0;
    for (const auto& col : columns_) n += static_cast<std::int64_t>(col.size());
    return n;
  }

  std::int64_t column_total(int j) const {
    std::int64_t n = 0;
    for (const auto& e : columns_[j]) n += e.count;
    return n;
  }

  std::int64_t total() const {
    std::int64_t n = 0;
    for (int j = 0; j < cols(); ++j) n += column_total(j);
    return n;
  }

  void set_column(int j, std::vector<SparseEntry> entries) {
    columns_[j] = std::move(entries);
  }

  bool operator==(const SparseCountMatrix& other) const {
    if (v_count_ != other.v_count_ || columns_.size() != other.columns_.size()) return false;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].size() != other.columns_[j].size()) return false;
      for (std::size_t i = 0; i < columns_[j].size(); ++i) {
        if (columns_[j][i].term != other.columns_[j][i].term ||
            columns_[j][i].count != other.columns_[j][i].count) {
          return false;
        }
      }
    }
    return true;
  }

 private:
  int v_count_;
  std::vector<std::vector<SparseEntry>> columns_;
};

// V x J nonnegative reals (feature-major rows, sample columns).
struct DenseNonnegMatrix {
  Matrix values;  // V x J

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
};

struct HeldoutSplit {
  SparseCountMatrix train;
  SparseCountMatrix heldout;
  double fraction = 0.0;  // fraction of tokens assigned to train
};

// ---------------------------------------------------------------------------
// UCI bag-of-words text format: three header lines D (docs), W (vocab), NNZ,
// then NNZ lines "docID termID count" with 1-based indices.
// ---------------------------------------------------------------------------

namespace detail {

inline std::int64_t parse_int_field(const std::string& s, std::size_t line,
                                    const char* what) {
  std::size_t pos = 0;
  std::int64_t value = 0;
  try {
    value = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": expected integer " + what);
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos != s.size()) {
    throw ParseError("line " + std::to_string(line) + ": trailing junk after " + what);
  }
  return value;
}

}  // namespace detail

inline std::pair<Vocabulary, SparseCountMatrix> load_uci_bow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::int64_t header[3];
  const char* names[3] = {"document count", "vocabulary size", "entry count"};
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(in, line)) {
      throw ParseError("line " + std::to_string(i + 1) + ": missing header");
    }
    header[i] = detail::parse_int_field(line, i + 1, names[i]);
    if (header[i] < 0) {
      throw ParseError("line " + std::to_string(i + 1) + ": negative header value");
    }
  }
  const std::int64_t doc_count = header[0], vocab_size = header[1], nnz = header[2];

  std::vector<std::tuple<int, int, std::int64_t>> triples;
  std::vector<std::size_t> line_of;
  triples.reserve(nnz);
  std::size_t lineno = 3;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::int64_t doc = 0, term = 0, count = 0;
    if (!(ls >> doc >> term >> count)) {
      throw ParseError("line " + std::to_string(lineno) + ": expected 'docID termID count'");
    }
    std::string rest;
    if (ls >> rest) {
      throw ParseError("line " + std::to_string(lineno) + ": trailing junk after entry");
    }
    if (doc < 1 || doc > doc_count || term < 1 || term > vocab_size) {
      throw ParseError("line " + std::to_string(lineno) + ": index out of range");
    }
    triples.emplace_back(static_cast<int>(term - 1), static_cast<int>(doc - 1), count);
    line_of.push_back(lineno);
  }
  if (static_cast<std::int64_t>(triples.size()) != nnz) {
    throw ParseError("line " + std::to_string(lineno) + ": entry count " +
                     std::to_string(triples.size()) + " does not match header NNZ " +
                     std::to_string(nnz));
  }
  auto matrix = SparseCountMatrix::from_triples(static_cast<int>(vocab_size),
                                                static_cast<int>(doc_count), triples,
                                                &line_of);
  return {Vocabulary::placeholder(static_cast<int>(vocab_size)), std::move(matrix)};
}

inline void save_uci_bow(const SparseCountMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << m.cols() << "\n" << m.rows() << "\n" << m.nnz() << "\n";
  for (int j = 0; j < m.cols(); ++j) {
    for (const auto& e : m.column(j)) {
      out << (j + 1) << " " << (e.term + 1) << " " << e.count << "\n";
    }
  }
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.terms.push_back(line);
  }
  for (std::size_t i = 0; i < vocab.terms.size(); ++i) {
    for (std::size_t k = i + 1; k < vocab.terms.size(); ++k) {
      if (vocab.terms[i] == vocab.terms[k]) {
        throw ParseError("line " + std::to_string(k + 1) + ": duplicate term '" +
                         vocab.terms[k] + "'");
      }
    }
  }
  return vocab;
}

// Dense nonnegative matrices: header line "V J", then V rows of J
// comma-separated values.
inline DenseNonnegMatrix load_dense_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing 'V J' header");
  std::istringstream hs(line);
  int v_count = 0, j_count = 0;
  if (!(hs >> v_count >> j_count) || v_count < 1 || j_count < 1) {
    throw ParseError("line 1: expected positive 'V J' header");
  }
  DenseNonnegMatrix m;
  m.values.resize(v_count, j_count);
  for (int v = 0; v < v_count; ++v) {
    if (!std::getline(in, line)) {
      throw ParseError("line " + std::to_string(v + 2) + ": missing data row");
    }
    std::istringstream ls(line);
    std::string field;
    for (int j = 0; j < j_count; ++j) {
      if (!std::getline(ls, field, ',')) {
        throw ParseError("line " + std::to_string(v + 2) + ": expected " +
                         std::to_string(j_count) + " values");
      }
      double value = 0.0;
      try {
        value = std::stod(field);
      } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(v + 2) + ": bad number '" + field + "'");
      }
      if (value < 0.0 || !std::isfinite(value)) {
        throw ParseError("line " + std::to_string(v + 2) + ": negative or non-finite value");
      }
      m.values(v, j) = value;
    }
  }
  return m;
}

inline void save_dense_csv(const DenseNonnegMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << m.rows() << " " << m.cols() << "\n";
  out.precision(17);
  for (int v = 0; v < m.rows(); ++v) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out << ",";
      out << m.values(v, j);
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

inline SparseCountMatrix binarize(const SparseCountMatrix& m) {
  SparseCountMatrix out(m.rows(), m.cols());
  for (int j = 0; j < m.cols(); ++j) {
    std::vector<SparseEntry> col = m.column(j);
    for (auto& e : col) e.count = 1;
    out.set_column(j, std::move(col));
  }
  return out;
}

// Per-document token-level split: round-half-up(fraction * tokens) tokens of
// each document are chosen uniformly without replacement for the train side;
// the remainder is held out. train + heldout = input, entrywise.
inline HeldoutSplit split_tokens(const SparseCountMatrix& m, double fraction,
                                 RngStream& rng) {
  if (!(fraction > 0.0) || !(fraction < 1.0)) {
    throw ParameterError("split_tokens: fraction must lie in (0,1)");
  }
  HeldoutSplit split;
  split.fraction = fraction;
  split.train = SparseCountMatrix(m.rows(), m.cols());
  split.heldout = SparseCountMatrix(m.rows(), m.cols());
  for (int j = 0; j < m.cols(); ++j) {
    const auto& col = m.column(j);
    const std::int64_t total = m.column_total(j);
    if (total == 0) continue;
    std::int64_t take = static_cast<std::int64_t>(
        std::floor(fraction * static_cast<double>(total) + 0.5));
    take = std::clamp<std::int64_t>(take, 0, total);

    // One slot per token, tagged by its entry index; partial Fisher-Yates
    // draws the without-replacement subset.
    std::vector<int> slot;
    slot.reserve(total);
    for (std::size_t e = 0; e < col.size(); ++e) {
      for (std::int64_t c = 0; c < col[e].count; ++c) slot.push_back(static_cast<int>(e));
    }
    std::vector<std::int64_t> taken(col.size(), 0);
    for (std::int64_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::int64_t> pick(i, total - 1);
      std::swap(slot[i], slot[pick(rng)]);
      taken[slot[i]] += 1;
    }

    std::vector<SparseEntry> train_col, heldout_col;
    for (std::size_t e = 0; e < col.size(); ++e) {
      if (taken[e] > 0) train_col.push_back({col[e].term, taken[e]});
      const std::int64_t rest = col[e].count - taken[e];
      if (rest > 0) heldout_col.push_back({col[e].term, rest});
    }
    split.train.set_column(j, std::move(train_col));
    split.heldout.set_column(j, std::move(heldout_col));
  }
  return split;
}

}  // namespace gbn
