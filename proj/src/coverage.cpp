#include "rarecog/coverage.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "rarecog/errors.hpp"

namespace rarecog {

using json = nlohmann::json;

bool BinaryMatrix::row_hits(int r, const std::vector<int>& cols) const {
  return std::any_of(cols.begin(), cols.end(), [&](int c) { return at(r, c); });
}

int CoverProgram::rare_docs() const {
  int n = 0;
  for (const auto& m : subclass_docs) n += m.rows();
  return n;
}

void CoverProgram::validate() const {
  if (subclass_docs.empty()) throw DataError("cover program has no subclass");
  for (std::size_t k = 0; k < subclass_docs.size(); ++k) {
    if (subclass_docs[k].rows() == 0) throw DataError("cover program: subclass " + std::to_string(k + 1) + " is empty");
    if (subclass_docs[k].cols() != d()) throw DataError("cover program: inconsistent vocabulary size");
  }
  if (!words.empty() && static_cast<int>(words.size()) != d())
    throw DataError("cover program: word list does not match matrix width");
}

CoverProgram build_program(const LabeledCorpus& corpus, const Vocabulary& vocab) {
  corpus.validate();
  CoverProgram p;
  p.words = vocab.terms();
  p.subclass_names = corpus.subclass_names;
  const int d = static_cast<int>(vocab.size());
  auto fill = [&](const std::vector<std::size_t>& ids) {
    BinaryMatrix m(static_cast<int>(ids.size()), d);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (const auto& t : tokenize(corpus.docs[ids[r]].text))
        if (auto idx = vocab.index_of(t)) m.set(static_cast<int>(r), static_cast<int>(*idx));
    return m;
  };
  for (int k = 1; k <= corpus.num_subclasses(); ++k) {
    const auto ids = corpus.members(k);
    if (ids.empty()) throw DataError("cover program: subclass " + std::to_string(k) + " is empty");
    p.subclass_docs.push_back(fill(ids));
  }
  p.majority_docs = fill(corpus.majority_members());
  return p;
}

CoverSolution evaluate_assignment(const CoverProgram& p, const std::vector<int>& assignment) {
  const int K = p.K();
  if (static_cast<int>(assignment.size()) != p.d()) throw UsageError("assignment length differs from vocabulary size");
  CoverSolution sol;
  sol.v.assign(static_cast<std::size_t>(K) + 1, {});
  sol.z.assign(static_cast<std::size_t>(K) + 1, {});
  for (int w = 0; w < p.d(); ++w) {
    const int s = assignment[static_cast<std::size_t>(w)];
    if (s < -1 || s > K) throw UsageError("assignment entry out of range");
    if (s >= 0) sol.v[static_cast<std::size_t>(s)].push_back(w);
  }
  int global = 0;
  for (int k = 1; k <= K; ++k) {
    const auto& Rk = p.subclass_docs[static_cast<std::size_t>(k - 1)];
    for (int i = 0; i < Rk.rows(); ++i, ++global) {
      if (!Rk.row_hits(i, sol.v[static_cast<std::size_t>(k)])) sol.z[static_cast<std::size_t>(k)].push_back(i);
      if (!Rk.row_hits(i, sol.v[0])) sol.z[0].push_back(global);
      for (int k2 = 1; k2 <= K; ++k2) {
        if (k2 == k) continue;
        for (int w : sol.v[static_cast<std::size_t>(k2)]) sol.beta += Rk.at(i, w) ? 1 : 0;
      }
    }
  }
  for (int i = 0; i < p.majority_docs.rows(); ++i)
    for (int w : sol.v[0]) sol.alpha += p.majority_docs.at(i, w) ? 1 : 0;
  long words = 0;
  for (const auto& z : sol.z) sol.o += static_cast<long>(z.size());
  for (const auto& v : sol.v) words += static_cast<long>(v.size());
  sol.objective = words + sol.o + sol.alpha + sol.beta;
  return sol;
}

void check_feasible(const CoverProgram& p, const CoverSolution& sol) {
  const int K = p.K();
  auto fail = [](const std::string& m) { throw DataError("infeasible cover: " + m); };
  if (static_cast<int>(sol.v.size()) != K + 1 || static_cast<int>(sol.z.size()) != K + 1)
    fail("expected " + std::to_string(K + 1) + " word and exoneration sets");
  std::vector<int> owner(static_cast<std::size_t>(p.d()), -1);
  for (int s = 0; s <= K; ++s)
    for (int w : sol.v[static_cast<std::size_t>(s)]) {
      if (w < 0 || w >= p.d()) fail("word index out of range");
      if (owner[static_cast<std::size_t>(w)] != -1) fail("word " + std::to_string(w) + " used by two sets");
      owner[static_cast<std::size_t>(w)] = s;
    }
  auto contains = [](const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); };
  long exonerated = 0;
  for (const auto& z : sol.z) exonerated += static_cast<long>(z.size());
  if (exonerated > sol.o) fail("o=" + std::to_string(sol.o) + " below the exoneration count");
  long beta = 0;
  int global = 0;
  for (int k = 1; k <= K; ++k) {
    const auto& Rk = p.subclass_docs[static_cast<std::size_t>(k - 1)];
    for (int i = 0; i < Rk.rows(); ++i, ++global) {
      if (!contains(sol.z[static_cast<std::size_t>(k)], i) && !Rk.row_hits(i, sol.v[static_cast<std::size_t>(k)]))
        fail("document " + std::to_string(i) + " of subclass " + std::to_string(k) + " is uncovered");
      if (!contains(sol.z[0], global) && !Rk.row_hits(i, sol.v[0]))
        fail("rare document " + std::to_string(global) + " is not covered by the general set");
      for (int k2 = 1; k2 <= K; ++k2)
        if (k2 != k)
          for (int w : sol.v[static_cast<std::size_t>(k2)]) beta += Rk.at(i, w) ? 1 : 0;
    }
  }
  long alpha = 0;
  for (int i = 0; i < p.majority_docs.rows(); ++i)
    for (int w : sol.v[0]) alpha += p.majority_docs.at(i, w) ? 1 : 0;
  if (alpha > sol.alpha) fail("alpha=" + std::to_string(sol.alpha) + " below majority matches " + std::to_string(alpha));
  if (beta > sol.beta) fail("beta=" + std::to_string(sol.beta) + " below cross-subclass matches " + std::to_string(beta));
}

CoverSolution solve_greedy(const CoverProgram& p) {
  p.validate();
  const int K = p.K();
  const int d = p.d();
  std::vector<int> assignment(static_cast<std::size_t>(d), -1);

  // covered[k - 1][i]: document i of R_k already covered by v_k.
  std::vector<std::vector<bool>> covered(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k)
    covered[static_cast<std::size_t>(k - 1)].assign(static_cast<std::size_t>(p.subclass_docs[static_cast<std::size_t>(k - 1)].rows()), false);

  auto cross_for_subclass = [&](int k, int w) {
    int c = 0;
    for (int k2 = 1; k2 <= K; ++k2) {
      if (k2 == k) continue;
      const auto& M = p.subclass_docs[static_cast<std::size_t>(k2 - 1)];
      for (int i = 0; i < M.rows(); ++i) c += M.at(i, w) ? 1 : 0;
    }
    return c;
  };

  for (int k = 1; k <= K; ++k) {
    const auto& Rk = p.subclass_docs[static_cast<std::size_t>(k - 1)];
    auto& cov = covered[static_cast<std::size_t>(k - 1)];
    while (true) {
      int best_word = -1;
      int best_gain = 0;
      for (int w = 0; w < d; ++w) {
        if (assignment[static_cast<std::size_t>(w)] != -1) continue;
        int fresh = 0;
        for (int i = 0; i < Rk.rows(); ++i) fresh += (!cov[static_cast<std::size_t>(i)] && Rk.at(i, w)) ? 1 : 0;
        const int gain = fresh - cross_for_subclass(k, w);
        if (gain > best_gain) {
          best_gain = gain;
          best_word = w;
        }
      }
      if (best_word < 0) break;
      assignment[static_cast<std::size_t>(best_word)] = k;
      for (int i = 0; i < Rk.rows(); ++i)
        if (Rk.at(i, best_word)) cov[static_cast<std::size_t>(i)] = true;
    }
  }

  std::vector<std::vector<bool>> general(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) general[static_cast<std::size_t>(k)].assign(covered[static_cast<std::size_t>(k)].size(), false);
  while (true) {
    int best_word = -1;
    int best_gain = 0;
    for (int w = 0; w < d; ++w) {
      if (assignment[static_cast<std::size_t>(w)] != -1) continue;
      int fresh = 0;
      for (int k = 0; k < K; ++k) {
        const auto& M = p.subclass_docs[static_cast<std::size_t>(k)];
        for (int i = 0; i < M.rows(); ++i)
          fresh += (!general[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] && M.at(i, w)) ? 1 : 0;
      }
      int cross = 0;
      for (int i = 0; i < p.majority_docs.rows(); ++i) cross += p.majority_docs.at(i, w) ? 1 : 0;
      const int gain = fresh - cross;
      if (gain > best_gain) {
        best_gain = gain;
        best_word = w;
      }
    }
    if (best_word < 0) break;
    assignment[static_cast<std::size_t>(best_word)] = 0;
    for (int k = 0; k < K; ++k) {
      const auto& M = p.subclass_docs[static_cast<std::size_t>(k)];
      for (int i = 0; i < M.rows(); ++i)
        if (M.at(i, best_word)) general[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = true;
    }
  }
  CoverSolution sol = evaluate_assignment(p, assignment);
  sol.optimal = false;
  return sol;
}

namespace {

using Mask = std::uint64_t;

class BranchAndBound {
 public:
  BranchAndBound(const CoverProgram& p, double time_cap)
      : p_(p), K_(p.K()), d_(p.d()), deadline_(std::chrono::steady_clock::now() +
                                               std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                   std::chrono::duration<double>(time_cap))) {
    // Documents: rare by subclass, then majority.
    targets_.assign(static_cast<std::size_t>(K_) + 1, 0);
    word_mask_.assign(static_cast<std::size_t>(d_), 0);
    int bit = 0;
    for (int k = 1; k <= K_; ++k) {
      const auto& M = p.subclass_docs[static_cast<std::size_t>(k - 1)];
      for (int i = 0; i < M.rows(); ++i, ++bit) {
        targets_[static_cast<std::size_t>(k)] |= Mask{1} << bit;
        for (int w = 0; w < d_; ++w)
          if (M.at(i, w)) word_mask_[static_cast<std::size_t>(w)] |= Mask{1} << bit;
      }
    }
    targets_[0] = bit == 64 ? ~Mask{0} : (Mask{1} << bit) - 1;
    for (int i = 0; i < p.majority_docs.rows(); ++i, ++bit) {
      majority_ |= Mask{1} << bit;
      for (int w = 0; w < d_; ++w)
        if (p.majority_docs.at(i, w)) word_mask_[static_cast<std::size_t>(w)] |= Mask{1} << bit;
    }
    cost_.assign(static_cast<std::size_t>(d_), std::vector<long>(static_cast<std::size_t>(K_) + 1, 0));
    for (int w = 0; w < d_; ++w) {
      const Mask m = word_mask_[static_cast<std::size_t>(w)];
      cost_[static_cast<std::size_t>(w)][0] = 1 + std::popcount(m & majority_);
      for (int k = 1; k <= K_; ++k)
        cost_[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)] =
            1 + std::popcount(m & targets_[0] & ~targets_[static_cast<std::size_t>(k)]);
    }
    suffix_.assign(static_cast<std::size_t>(d_) + 1, 0);
    for (int w = d_ - 1; w >= 0; --w)
      suffix_[static_cast<std::size_t>(w)] = suffix_[static_cast<std::size_t>(w) + 1] | word_mask_[static_cast<std::size_t>(w)];
  }

  /// Returns true if the search finished.
  bool run(long upper_bound, std::vector<int>& best_assignment) {
    best_ = upper_bound;
    found_ = false;
    current_.assign(static_cast<std::size_t>(d_), -1);
    std::vector<Mask> covered(static_cast<std::size_t>(K_) + 1, 0);
    search(0, covered, 0);
    if (found_) best_assignment = best_assignment_;
    return !timed_out_;
  }

  bool found() const { return found_; }

 private:
  long uncovered_cost(const std::vector<Mask>& covered) const {
    long c = 0;
    for (int s = 0; s <= K_; ++s) c += std::popcount(targets_[static_cast<std::size_t>(s)] & ~covered[static_cast<std::size_t>(s)]);
    return c;
  }

  long lower_bound(int word, const std::vector<Mask>& covered, long cost) const {
    const Mask reachable = suffix_[static_cast<std::size_t>(word)];
    long lb = cost;
    for (int s = 0; s <= K_; ++s) {
      const Mask open = targets_[static_cast<std::size_t>(s)] & ~covered[static_cast<std::size_t>(s)];
      lb += std::popcount(open & ~reachable);
      if (open & reachable) lb += 1;
    }
    return lb;
  }

  void search(int word, std::vector<Mask>& covered, long cost) {
    if (timed_out_) return;
    if ((++nodes_ & 0x3FF) == 0 && std::chrono::steady_clock::now() > deadline_) {
      timed_out_ = true;
      return;
    }
    if (word == d_) {
      const long total = cost + uncovered_cost(covered);
      if (total < best_) {
        best_ = total;
        best_assignment_ = current_;
        found_ = true;
      }
      return;
    }
    if (lower_bound(word, covered, cost) >= best_) return;
    const Mask m = word_mask_[static_cast<std::size_t>(word)];
    for (int s = 0; s <= K_; ++s) {
      const Mask saved = covered[static_cast<std::size_t>(s)];
      covered[static_cast<std::size_t>(s)] |= m & targets_[static_cast<std::size_t>(s)];
      current_[static_cast<std::size_t>(word)] = s;
      search(word + 1, covered, cost + cost_[static_cast<std::size_t>(word)][static_cast<std::size_t>(s)]);
      covered[static_cast<std::size_t>(s)] = saved;
    }
    current_[static_cast<std::size_t>(word)] = -1;
    search(word + 1, covered, cost);
  }

  const CoverProgram& p_;
  int K_;
  int d_;
  std::chrono::steady_clock::time_point deadline_;
  std::vector<Mask> targets_;
  Mask majority_ = 0;
  std::vector<Mask> word_mask_;
  std::vector<Mask> suffix_;
  std::vector<std::vector<long>> cost_;
  std::vector<int> current_;
  std::vector<int> best_assignment_;
  long best_ = 0;
  bool found_ = false;
  bool timed_out_ = false;
  std::uint64_t nodes_ = 0;
};

}  // namespace

CoverSolution solve_exact(const CoverProgram& p, const ExactLimits& limits) {
  p.validate();
  if (p.d() > limits.max_words || p.d() > 64)
    throw UsageError("solve_exact: " + std::to_string(p.d()) + " words exceed the cap of " +
                     std::to_string(limits.max_words));
  if (p.total_docs() > limits.max_docs || p.total_docs() > 64)
    throw UsageError("solve_exact: " + std::to_string(p.total_docs()) + " documents exceed the cap of " +
                     std::to_string(limits.max_docs));

  CoverSolution incumbent = solve_greedy(p);
  BranchAndBound bb(p, limits.time_cap_seconds);
  std::vector<int> assignment;
  const bool finished = bb.run(incumbent.objective + 1, assignment);
  if (bb.found()) incumbent = evaluate_assignment(p, assignment);
  incumbent.optimal = finished;
  return incumbent;
}

json CoverSolution::to_json(const CoverProgram& p) const {
  auto named = [&](const std::vector<int>& ws) {
    json out = json::array();
    for (int w : ws) out.push_back(p.words.empty() ? json(w) : json(p.words[static_cast<std::size_t>(w)]));
    return out;
  };
  json sets = json::array();
  for (const auto& v : this->v) sets.push_back(named(v));
  return json{{"word_sets", sets}, {"exonerated", z},  {"o", o},       {"alpha", alpha},
              {"beta", beta},      {"objective", objective}, {"optimal", optimal}};
}

CoverageReport coverage_report(const CoverSolution& sol, const CoverProgram& p) {
  check_feasible(p, sol);
  const int K = p.K();
  CoverageReport rep;
  rep.objective = sol.objective;
  rep.optimal = sol.optimal;
  auto word_name = [&](int w) { return p.words.empty() ? "w" + std::to_string(w) : p.words[static_cast<std::size_t>(w)]; };
  auto pct = [](int num, int den) { return den > 0 ? 100.0 * num / den : 0.0; };
  auto rank = [](std::vector<WordCoverage>& ws) {
    std::sort(ws.begin(), ws.end(), [](const WordCoverage& a, const WordCoverage& b) {
      return a.ratio != b.ratio ? a.ratio > b.ratio : a.word < b.word;
    });
  };

  SetCoverage general;
  general.name = "general";
  general.targets = p.rare_docs();
  general.non_targets = p.majority_docs.rows();
  for (int k = 0; k < K; ++k) {
    const auto& M = p.subclass_docs[static_cast<std::size_t>(k)];
    for (int i = 0; i < M.rows(); ++i) general.covered += M.row_hits(i, sol.v[0]) ? 1 : 0;
  }
  for (int i = 0; i < p.majority_docs.rows(); ++i) general.cross_matched += p.majority_docs.row_hits(i, sol.v[0]) ? 1 : 0;
  general.exonerated = static_cast<int>(sol.z[0].size());
  for (int w : sol.v[0]) {
    WordCoverage wc{word_name(w), 0, 0, 0.0};
    for (const auto& M : p.subclass_docs)
      for (int i = 0; i < M.rows(); ++i) wc.within += M.at(i, w) ? 1 : 0;
    for (int i = 0; i < p.majority_docs.rows(); ++i) wc.cross += p.majority_docs.at(i, w) ? 1 : 0;
    wc.ratio = wc.within / (wc.cross + 1.0);
    general.words.push_back(wc);
  }
  rank(general.words);
  general.within_pct = pct(general.covered, general.targets);
  general.cross_pct = pct(general.cross_matched, general.non_targets);
  rep.sets.push_back(std::move(general));

  int own_covered = 0;
  for (int k = 1; k <= K; ++k) {
    const auto& Rk = p.subclass_docs[static_cast<std::size_t>(k - 1)];
    const auto& vk = sol.v[static_cast<std::size_t>(k)];
    SetCoverage s;
    s.name = static_cast<int>(p.subclass_names.size()) >= k ? p.subclass_names[static_cast<std::size_t>(k - 1)]
                                                           : "subclass " + std::to_string(k);
    s.targets = Rk.rows();
    s.non_targets = p.rare_docs() - Rk.rows();
    for (int i = 0; i < Rk.rows(); ++i) s.covered += Rk.row_hits(i, vk) ? 1 : 0;
    for (int k2 = 1; k2 <= K; ++k2) {
      if (k2 == k) continue;
      const auto& M = p.subclass_docs[static_cast<std::size_t>(k2 - 1)];
      for (int i = 0; i < M.rows(); ++i) s.cross_matched += M.row_hits(i, vk) ? 1 : 0;
    }
    s.exonerated = static_cast<int>(sol.z[static_cast<std::size_t>(k)].size());
    for (int w : vk) {
      WordCoverage wc{word_name(w), 0, 0, 0.0};
      for (int i = 0; i < Rk.rows(); ++i) wc.within += Rk.at(i, w) ? 1 : 0;
      for (int k2 = 1; k2 <= K; ++k2) {
        if (k2 == k) continue;
        const auto& M = p.subclass_docs[static_cast<std::size_t>(k2 - 1)];
        for (int i = 0; i < M.rows(); ++i) wc.cross += M.at(i, w) ? 1 : 0;
      }
      wc.ratio = wc.within / (wc.cross + 1.0);
      s.words.push_back(wc);
    }
    rank(s.words);
    s.within_pct = pct(s.covered, s.targets);
    s.cross_pct = pct(s.cross_matched, s.non_targets);
    own_covered += s.covered;
    rep.sets.push_back(std::move(s));
  }
  rep.overall_subclass_pct = pct(own_covered, p.rare_docs());
  return rep;
}

json CoverageReport::to_json() const {
  json sets_json = json::array();
  for (const auto& s : sets) {
    json words = json::array();
    for (const auto& w : s.words)
      words.push_back({{"word", w.word}, {"within", w.within}, {"cross", w.cross}, {"ratio", w.ratio}});
    sets_json.push_back({{"name", s.name},
                         {"targets", s.targets},
                         {"covered", s.covered},
                         {"exonerated", s.exonerated},
                         {"non_targets", s.non_targets},
                         {"cross_matched", s.cross_matched},
                         {"within_pct", s.within_pct},
                         {"cross_pct", s.cross_pct},
                         {"words", words}});
  }
  return json{{"sets", sets_json},
              {"overall_subclass_pct", overall_subclass_pct},
              {"objective", objective},
              {"optimal", optimal}};
}

std::string CoverageReport::to_text() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %8s %8s %9s %8s %7s\n", "set", "targets", "covered", "within%", "cross%",
                "words");
  out << line;
  for (const auto& s : sets) {
    std::snprintf(line, sizeof line, "%-24.24s %8d %8d %8.1f%% %7.1f%% %7zu\n", s.name.c_str(), s.targets, s.covered,
                  s.within_pct, s.cross_pct, s.words.size());
    out << line;
  }
  std::snprintf(line, sizeof line, "overall subclass coverage %.1f%%, objective %ld%s\n", overall_subclass_pct,
                objective, optimal ? " (optimal)" : "");
  out << line;
  return out.str();
}

std::string CoverageReport::words_csv() const {
  std::ostringstream out;
  out << "set,word,within,cross,ratio\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  for (const auto& s : sets)
    for (const auto& w : s.words) out << quote(s.name) << ',' << quote(w.word) << ',' << w.within << ',' << w.cross << ',' << w.ratio << '\n';
  return out.str();
}

}  // namespace rarecog
