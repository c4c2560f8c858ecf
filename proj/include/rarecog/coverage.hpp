#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rarecog/corpus.hpp"
#include "rarecog/featurize.hpp"

namespace rarecog {

/// Dense row-major 0/1 matrix.
class BinaryMatrix {
 public:
  BinaryMatrix() = default;
  BinaryMatrix(int rows, int cols) : rows_(rows), cols_(cols), bits_(static_cast<std::size_t>(rows) * cols, 0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool at(int r, int c) const { return bits_[index(r, c)] != 0; }
  void set(int r, int c, bool v = true) { bits_[index(r, c)] = v ? 1 : 0; }
  /// True if row r has a 1 in any of the listed columns.
  bool row_hits(int r, const std::vector<int>& cols) const;

 private:
  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + c; }
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Word-occurrence matrices of the constrained word-cover program: one block
/// per rare subclass plus one for the majority documents.
struct CoverProgram {
  std::vector<BinaryMatrix> subclass_docs;  // R_k, index k - 1
  BinaryMatrix majority_docs;               // N
  std::vector<std::string> words;
  std::vector<std::string> subclass_names;

  int d() const { return majority_docs.cols(); }
  int K() const { return static_cast<int>(subclass_docs.size()); }
  int rare_docs() const;
  int total_docs() const { return rare_docs() + majority_docs.rows(); }
  void validate() const;
};

/// Word sets, exonerations and slack values of one feasible cover.
/// Rare documents are numbered globally (R_1 first, then R_2, ...) in z[0];
/// z[k] holds row indices within R_k.
struct CoverSolution {
  std::vector<std::vector<int>> v;  // v[0] general, v[k] subclass k
  std::vector<std::vector<int>> z;
  long o = 0;
  long alpha = 0;
  long beta = 0;
  long objective = 0;
  bool optimal = false;

  nlohmann::json to_json(const CoverProgram& p) const;
};

CoverProgram build_program(const LabeledCorpus& corpus, const Vocabulary& vocab);

/// Tight solution for a word assignment: assignment[w] is -1 (unused),
/// 0 (general set) or k (subclass k).
CoverSolution evaluate_assignment(const CoverProgram& p, const std::vector<int>& assignment);

/// Throws DataError if any constraint of the program is violated.
void check_feasible(const CoverProgram& p, const CoverSolution& sol);

struct ExactLimits {
  int max_words = 20;
  int max_docs = 40;
  double time_cap_seconds = 60.0;
};

/// Depth-first branch and bound over word assignments. Among optimal
/// solutions returns the first in the order (word 0 first; general set, then
/// subclasses 1..K, then unused). On time-out returns the incumbent with
/// optimal = false.
CoverSolution solve_exact(const CoverProgram& p, const ExactLimits& limits = {});

/// Per subclass, then for the general set, repeatedly takes the unused word
/// with the largest (newly covered target docs - cross-coverage) until that
/// gain is no longer positive.
CoverSolution solve_greedy(const CoverProgram& p);

struct WordCoverage {
  std::string word;
  int within = 0;
  int cross = 0;
  double ratio = 0.0;  // within / (cross + 1)
};

struct SetCoverage {
  std::string name;
  int targets = 0;
  int covered = 0;
  int exonerated = 0;
  int non_targets = 0;
  int cross_matched = 0;
  double within_pct = 0.0;
  double cross_pct = 0.0;
  std::vector<WordCoverage> words;  // by descending ratio
};

struct CoverageReport {
  std::vector<SetCoverage> sets;  // [0] general, [k] subclass k
  /// Share of rare documents covered by their own subclass word set.
  double overall_subclass_pct = 0.0;
  long objective = 0;
  bool optimal = false;

  nlohmann::json to_json() const;
  std::string to_text() const;
  /// set,word,within,cross,ratio
  std::string words_csv() const;
};

CoverageReport coverage_report(const CoverSolution& sol, const CoverProgram& p);

}  // namespace rarecog
