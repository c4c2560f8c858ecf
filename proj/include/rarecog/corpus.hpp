#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rarecog {

enum class Label { rare, majority };

struct Document {
  std::string text;
  Label label = Label::majority;
  /// Rare-subclass id in 1..K; 0 for majority documents.
  int subclass = 0;
};

/// Documents labelled rare/majority, with rare documents further split into
/// K known subclasses. Synthetic corpora additionally carry a dense feature
/// matrix with one row per document.
struct LabeledCorpus {
  std::string id;
  std::vector<Document> docs;
  /// subclass_names[k - 1] names subclass k.
  std::vector<std::string> subclass_names;
  std::optional<Eigen::MatrixXd> features;

  std::size_t size() const { return docs.size(); }
  int num_subclasses() const { return static_cast<int>(subclass_names.size()); }
  std::size_t rare_count() const;
  /// Document indices of subclass k, in corpus order.
  std::vector<std::size_t> members(int k) const;
  std::vector<std::size_t> majority_members() const;

  /// Throws DataError if any structural invariant is violated.
  void validate() const;
};

enum class CorpusFormat { jsonl, csv };

LabeledCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
/// Picks the format from the file extension (".csv" or anything else as jsonl).
LabeledCorpus load_corpus(const std::filesystem::path& path);

LabeledCorpus parse_jsonl(std::istream& in, std::string id = "stdin");
LabeledCorpus parse_csv(std::istream& in, std::string id = "stdin");
/// One record per line; includes a `features` array when the corpus has one.
void write_jsonl(const LabeledCorpus& corpus, std::ostream& out);

struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test_seen;
  std::vector<std::size_t> test_unseen;
  std::vector<std::size_t> test_majority;
  std::vector<int> seen_subclasses;
  std::vector<int> unseen_subclasses;
  std::uint64_t seed = 0;

  bool operator==(const SplitResult&) const = default;
};

/// Holds out a random subset of subclasses as unseen, then splits every seen
/// subclass and the majority class into train/test parts. All fractional
/// counts are floored; at least one subclass is always seen and one unseen.
SplitResult split_protocol(const LabeledCorpus& corpus, std::uint64_t seed,
                           double seen_fraction = 2.0 / 3.0, double train_fraction = 0.8);

struct SyntheticConfig {
  int d = 16;
  int k_total = 6;
  int docs_per_subclass = 200;
  int majority_docs = 1200;
  double subclass_separation = 6.0;
  double noise_scale = 1.0;
  /// Within each group, every column after the first is overwritten with a
  /// copy of the first column plus small noise.
  std::vector<std::vector<int>> collinearity_groups;
  std::uint64_t seed = 0;
};

/// Gaussian blobs: subclass k sits at distance `subclass_separation` from the
/// origin along (e_0 + s_k)/sqrt(2), where e_0 is a direction shared by every
/// rare subclass and s_k = +/-e_j is specific to k. Majority documents are
/// centred at the origin. Requires k_total <= 2 (d - 1) so centres are distinct.
LabeledCorpus gen_synthetic(const SyntheticConfig& cfg);

}  // namespace rarecog
