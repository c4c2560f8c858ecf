#include "rarecog/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rarecog/errors.hpp"
#include "rarecog/io.hpp"

namespace rarecog {

using json = nlohmann::json;

std::size_t LabeledCorpus::rare_count() const {
  return static_cast<std::size_t>(
      std::count_if(docs.begin(), docs.end(), [](const Document& d) { return d.label == Label::rare; }));
}

std::vector<std::size_t> LabeledCorpus::members(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (docs[i].label == Label::rare && docs[i].subclass == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> LabeledCorpus::majority_members() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (docs[i].label == Label::majority) out.push_back(i);
  return out;
}

void LabeledCorpus::validate() const {
  if (docs.empty()) throw DataError("corpus '" + id + "' is empty");
  const int K = num_subclasses();
  if (K < 1) throw DataError("corpus '" + id + "' has no rare subclass");
  std::vector<std::size_t> sizes(static_cast<std::size_t>(K) + 1, 0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i];
    if (d.label == Label::rare) {
      if (d.subclass < 1 || d.subclass > K)
        throw DataError("document " + std::to_string(i) + ": rare doc has subclass " +
                        std::to_string(d.subclass) + " outside 1.." + std::to_string(K));
      ++sizes[static_cast<std::size_t>(d.subclass)];
    } else if (d.subclass != 0) {
      throw DataError("document " + std::to_string(i) + ": majority doc carries subclass");
    }
  }
  for (int k = 1; k <= K; ++k)
    if (sizes[static_cast<std::size_t>(k)] == 0)
      throw DataError("subclass '" + subclass_names[static_cast<std::size_t>(k - 1)] + "' has no documents");
  if (features) {
    if (static_cast<std::size_t>(features->rows()) != docs.size())
      throw DataError("feature matrix has " + std::to_string(features->rows()) + " rows for " +
                      std::to_string(docs.size()) + " documents");
    if (!features->allFinite()) throw DataError("feature matrix has non-finite entries");
  }
}

namespace {

// Maps subclass names to contiguous ids in first-appearance order.
class SubclassRegistry {
 public:
  int intern(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<int>(names_.size()) + 1);
    if (inserted) names_.push_back(name);
    return it->second;
  }
  std::vector<std::string> take() { return std::move(names_); }

 private:
  std::map<std::string, int> ids_;
  std::vector<std::string> names_;
};

Label parse_label(const std::string& s, std::size_t line) {
  if (s == "rare") return Label::rare;
  if (s == "majority") return Label::majority;
  throw DataError("line " + std::to_string(line) + ": label must be \"rare\" or \"majority\", got \"" + s + "\"");
}

Document make_document(std::string text, Label label, const std::string& subclass, std::size_t line,
                       SubclassRegistry& registry) {
  Document doc{std::move(text), label, 0};
  if (label == Label::rare) {
    if (subclass.empty()) throw DataError("line " + std::to_string(line) + ": rare doc missing subclass");
    doc.subclass = registry.intern(subclass);
  } else if (!subclass.empty()) {
    throw DataError("line " + std::to_string(line) + ": majority doc carries subclass");
  }
  return doc;
}

// RFC 4180 style: fields may be quoted, quotes inside are doubled, quoted
// fields may span lines. Returns false at end of input.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) throw DataError("line " + std::to_string(line) + ": unterminated quoted field");
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

LabeledCorpus parse_jsonl(std::istream& in, std::string id) {
  LabeledCorpus corpus;
  corpus.id = std::move(id);
  SubclassRegistry registry;
  std::vector<std::vector<double>> rows;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line) + ": " + e.what());
    }
    if (!rec.is_object()) throw DataError("line " + std::to_string(line) + ": record is not an object");
    auto field = [&](const char* name) -> std::string {
      auto it = rec.find(name);
      if (it == rec.end() || it->is_null()) return {};
      if (!it->is_string())
        throw DataError("line " + std::to_string(line) + ": field '" + name + "' must be a string");
      return it->get<std::string>();
    };
    if (!rec.contains("text")) throw DataError("line " + std::to_string(line) + ": missing field 'text'");
    if (!rec.contains("label")) throw DataError("line " + std::to_string(line) + ": missing field 'label'");
    corpus.docs.push_back(
        make_document(field("text"), parse_label(field("label"), line), field("subclass"), line, registry));
    if (auto it = rec.find("features"); it != rec.end()) {
      if (!it->is_array()) throw DataError("line " + std::to_string(line) + ": 'features' must be an array");
      std::vector<double> row;
      row.reserve(it->size());
      for (const auto& v : *it) {
        if (!v.is_number()) throw DataError("line " + std::to_string(line) + ": non-numeric feature");
        row.push_back(v.get<double>());
      }
      if (!rows.empty() && rows.front().size() != row.size())
        throw DataError("line " + std::to_string(line) + ": feature length " + std::to_string(row.size()) +
                        " differs from " + std::to_string(rows.front().size()));
      rows.push_back(std::move(row));
    }
    if (!rows.empty() && rows.size() != corpus.docs.size())
      throw DataError("line " + std::to_string(line) + ": 'features' must be present on all records or none");
  }
  corpus.subclass_names = registry.take();
  if (!rows.empty()) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    corpus.features = std::move(X);
  }
  corpus.validate();
  return corpus;
}

LabeledCorpus parse_csv(std::istream& in, std::string id) {
  LabeledCorpus corpus;
  corpus.id = std::move(id);
  SubclassRegistry registry;
  std::vector<std::string> fields;
  std::size_t line = 1;
  if (!read_csv_record(in, fields, line)) throw DataError("corpus '" + corpus.id + "' is empty");
  if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
  if (fields != std::vector<std::string>{"text", "label", "subclass"})
    throw DataError("line 1: expected header text,label,subclass");
  while (true) {
    const std::size_t start = line;
    if (!read_csv_record(in, fields, line)) break;
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 3)
      throw DataError("line " + std::to_string(start) + ": expected 3 fields, got " + std::to_string(fields.size()));
    corpus.docs.push_back(
        make_document(std::move(fields[0]), parse_label(fields[1], start), fields[2], start, registry));
  }
  corpus.subclass_names = registry.take();
  corpus.validate();
  return corpus;
}

LabeledCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::istringstream in(read_text_file(path));
  return format == CorpusFormat::csv ? parse_csv(in, path.filename().string())
                                     : parse_jsonl(in, path.filename().string());
}

LabeledCorpus load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, path.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl);
}

void write_jsonl(const LabeledCorpus& corpus, std::ostream& out) {
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    const auto& d = corpus.docs[i];
    json rec;
    rec["text"] = d.text;
    rec["label"] = d.label == Label::rare ? "rare" : "majority";
    if (d.label == Label::rare) rec["subclass"] = corpus.subclass_names[static_cast<std::size_t>(d.subclass - 1)];
    if (corpus.features) {
      const auto row = corpus.features->row(static_cast<Eigen::Index>(i));
      rec["features"] = std::vector<double>(row.begin(), row.end());
    }
    out << rec.dump() << '\n';
  }
}

SplitResult split_protocol(const LabeledCorpus& corpus, std::uint64_t seed, double seen_fraction,
                           double train_fraction) {
  if (!(seen_fraction > 0.0 && seen_fraction < 1.0)) throw UsageError("seen_fraction must lie in (0, 1)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train_fraction must lie in (0, 1)");
  const int K = corpus.num_subclasses();
  if (K < 2) throw DataError("split needs at least 2 subclasses to hold one out as unseen");

  std::mt19937_64 rng(seed);
  SplitResult split;
  split.seed = seed;

  std::vector<int> ids(static_cast<std::size_t>(K));
  std::iota(ids.begin(), ids.end(), 1);
  std::shuffle(ids.begin(), ids.end(), rng);
  const int n_seen = std::clamp(static_cast<int>(std::floor(seen_fraction * K)), 1, K - 1);
  split.seen_subclasses.assign(ids.begin(), ids.begin() + n_seen);
  split.unseen_subclasses.assign(ids.begin() + n_seen, ids.end());
  std::sort(split.seen_subclasses.begin(), split.seen_subclasses.end());
  std::sort(split.unseen_subclasses.begin(), split.unseen_subclasses.end());

  auto divide = [&](std::vector<std::size_t> members, std::vector<std::size_t>& test) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(members.size())));
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  };
  for (int k : split.seen_subclasses) divide(corpus.members(k), split.test_seen);
  divide(corpus.majority_members(), split.test_majority);
  for (int k : split.unseen_subclasses) {
    auto m = corpus.members(k);
    split.test_unseen.insert(split.test_unseen.end(), m.begin(), m.end());
  }
  for (auto* set : {&split.train, &split.test_seen, &split.test_unseen, &split.test_majority})
    std::sort(set->begin(), set->end());
  return split;
}

LabeledCorpus gen_synthetic(const SyntheticConfig& cfg) {
  if (cfg.d < 2) throw UsageError("synthetic d must be >= 2");
  if (cfg.k_total < 2) throw UsageError("synthetic k_total must be >= 2");
  if (cfg.docs_per_subclass < 4) throw UsageError("synthetic docs_per_subclass must be >= 4");
  if (cfg.majority_docs < 0) throw UsageError("synthetic majority_docs must be >= 0");
  if (!(cfg.subclass_separation >= 0.0)) throw UsageError("synthetic separation must be >= 0");
  if (!(cfg.noise_scale > 0.0)) throw UsageError("synthetic noise_scale must be > 0");
  if (cfg.k_total > 2 * (cfg.d - 1)) throw UsageError("synthetic k_total must be <= 2 (d - 1)");
  for (const auto& group : cfg.collinearity_groups)
    for (int c : group)
      if (c < 0 || c >= cfg.d) throw UsageError("collinearity group index out of range");

  const int n_rare = cfg.k_total * cfg.docs_per_subclass;
  const int n = n_rare + cfg.majority_docs;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  LabeledCorpus corpus;
  corpus.id = "synthetic-" + std::to_string(cfg.seed);
  Eigen::MatrixXd X(n, cfg.d);
  const double axis = cfg.subclass_separation / std::sqrt(2.0);
  int row = 0;
  for (int k = 1; k <= cfg.k_total; ++k) {
    corpus.subclass_names.push_back("s" + std::to_string(k));
    const int specific = 1 + (k - 1) % (cfg.d - 1);
    const double sign = ((k - 1) / (cfg.d - 1)) % 2 == 0 ? 1.0 : -1.0;
    for (int i = 0; i < cfg.docs_per_subclass; ++i, ++row) {
      for (int j = 0; j < cfg.d; ++j) X(row, j) = cfg.noise_scale * gauss(rng);
      X(row, 0) += axis;
      X(row, specific) += sign * axis;
      corpus.docs.push_back({"", Label::rare, k});
    }
  }
  for (int i = 0; i < cfg.majority_docs; ++i, ++row) {
    for (int j = 0; j < cfg.d; ++j) X(row, j) = cfg.noise_scale * gauss(rng);
    corpus.docs.push_back({"", Label::majority, 0});
  }
  const double dup_noise = 0.05 * cfg.noise_scale;
  for (const auto& group : cfg.collinearity_groups) {
    if (group.size() < 2) continue;
    for (std::size_t g = 1; g < group.size(); ++g)
      for (int i = 0; i < n; ++i) X(i, group[g]) = X(i, group[0]) + dup_noise * gauss(rng);
  }
  corpus.features = std::move(X);
  return corpus;
}

}  // namespace rarecog
