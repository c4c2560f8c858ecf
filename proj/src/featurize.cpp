#include "rarecog/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rarecog/errors.hpp"
#include "rarecog/io.hpp"

namespace rarecog {

using json = nlohmann::json;

std::string to_string(Representation rep) {
  switch (rep) {
    case Representation::raw: return "raw";
    case Representation::tfidf: return "tfidf";
    case Representation::pca: return "pca";
  }
  return "raw";
}

namespace {

// Decodes one code point; malformed bytes decode as U+FFFD and advance by one.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_letter(char32_t c) {
  if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z')) return true;
  if (c >= 0xC0 && c <= 0x24F) return c != 0xD7 && c != 0xF7;  // Latin-1 letters, Latin Extended-A/B
  if (c >= 0x386 && c <= 0x3FF) return c != 0x387;              // Greek
  if (c >= 0x400 && c <= 0x4FF) return true;                    // Cyrillic
  return false;
}

char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c == 0x178) return 0xFF;
  if (c >= 0x100 && c <= 0x17F && c != 0x130 && c != 0x131 && c != 0x138 && c != 0x149 && c != 0x17F) {
    // Latin Extended-A alternates upper/lower, with the parity flipping at 0x139 and 0x179.
    const bool odd_upper = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
    const bool upper = odd_upper ? (c % 2 == 1) : (c % 2 == 0);
    return upper ? c + 1 : c;
  }
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t current_len = 0;
  auto flush = [&] {
    if (current_len >= 2) tokens.push_back(current);
    current.clear();
    current_len = 0;
  };
  for (std::size_t i = 0; i < text.size();) {
    const char32_t cp = next_code_point(text, i);
    if (is_letter(cp)) {
      append_utf8(current, to_lower(cp));
      ++current_len;
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<int> df, std::size_t n_docs_fitted)
    : terms_(std::move(terms)), df_(std::move(df)), n_docs_fitted_(n_docs_fitted) {
  if (terms_.size() != df_.size()) throw DataError("vocabulary: terms and df lengths differ");
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], i).second) throw DataError("vocabulary: duplicate term '" + terms_[i] + "'");
    if (df_[i] < 1 || static_cast<std::size_t>(df_[i]) > n_docs_fitted_)
      throw DataError("vocabulary: df of '" + terms_[i] + "' outside [1, n_docs_fitted]");
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a(std::to_string(n_docs_fitted_));
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    h = fnv1a(terms_[i], h);
    h = fnv1a(std::string_view("\x1f") , h);
    h = fnv1a(std::to_string(df_[i]), h);
  }
  return h;
}

json Vocabulary::to_json() const {
  return json{{"version", 1}, {"terms", terms_}, {"df", df_}, {"n_docs_fitted", n_docs_fitted_}};
}

Vocabulary Vocabulary::from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw DataError("vocabulary: unsupported version");
    return Vocabulary(j.at("terms").get<std::vector<std::string>>(), j.at("df").get<std::vector<int>>(),
                      j.at("n_docs_fitted").get<std::size_t>());
  } catch (const json::exception& e) {
    throw DataError(std::string("vocabulary: ") + e.what());
  }
}

Vocabulary build_vocab(const LabeledCorpus& corpus, std::span<const std::size_t> doc_ids, std::size_t top_n) {
  if (doc_ids.empty()) throw UsageError("build_vocab: no training documents");
  if (top_n < 1) throw UsageError("build_vocab: top_n must be >= 1");
  std::map<std::string, std::pair<long, int>> stats;  // term -> (count, df)
  for (std::size_t id : doc_ids) {
    if (id >= corpus.size()) throw UsageError("build_vocab: document index out of range");
    auto tokens = tokenize(corpus.docs[id].text);
    for (const auto& t : tokens) ++stats[t].first;
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (const auto& t : tokens) ++stats[t].second;
  }
  if (stats.empty()) throw DataError("build_vocab: empty effective vocabulary");
  std::vector<std::pair<std::string, std::pair<long, int>>> ranked(stats.begin(), stats.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second.first > b.second.first; });
  if (ranked.size() > top_n) ranked.resize(top_n);
  std::vector<std::string> terms;
  std::vector<int> df;
  for (auto& [term, s] : ranked) {
    terms.push_back(term);
    df.push_back(s.second);
  }
  return Vocabulary(std::move(terms), std::move(df), doc_ids.size());
}

Eigen::RowVectorXd tfidf_row(std::string_view text, const Vocabulary& vocab) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
  for (const auto& t : tokenize(text))
    if (auto idx = vocab.index_of(t)) row(static_cast<Eigen::Index>(*idx)) += 1.0;
  const double n = static_cast<double>(vocab.n_docs_fitted());
  for (Eigen::Index j = 0; j < row.size(); ++j)
    if (row(j) != 0.0) row(j) *= std::log((1.0 + n) / (1.0 + vocab.df()[static_cast<std::size_t>(j)]));
  const double norm = row.norm();
  if (norm > 0.0) row /= norm;
  return row;
}

FeatureMatrix tfidf_transform(const LabeledCorpus& corpus, std::span<const std::size_t> doc_ids,
                              const Vocabulary& vocab) {
  FeatureMatrix out;
  out.representation = Representation::tfidf;
  out.values.resize(static_cast<Eigen::Index>(doc_ids.size()), static_cast<Eigen::Index>(vocab.size()));
  out.row_ids.assign(doc_ids.begin(), doc_ids.end());
  for (std::size_t r = 0; r < doc_ids.size(); ++r) {
    if (doc_ids[r] >= corpus.size()) throw UsageError("tfidf_transform: document index out of range");
    out.values.row(static_cast<Eigen::Index>(r)) = tfidf_row(corpus.docs[doc_ids[r]].text, vocab);
  }
  return out;
}

PcaProjection pca_fit(const Eigen::MatrixXd& X, int rank) {
  const auto n = X.rows();
  const auto d = X.cols();
  if (n < 2) throw UsageError("pca_fit: need at least 2 rows");
  if (rank < 1 || rank > std::min<Eigen::Index>(n, d))
    throw UsageError("pca_fit: rank must lie in [1, min(n, d)]");
  if (!X.allFinite()) throw DataError("pca_fit: non-finite input");

  PcaProjection proj;
  proj.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - proj.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalAbort("pca_fit: eigendecomposition failed");

  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double top = std::max(values(d - 1), 0.0);
  const double cutoff = top * 1e-12 * static_cast<double>(d);
  int kept = 0;
  while (kept < rank && values(d - 1 - kept) > cutoff) ++kept;
  proj.truncated = kept < rank;
  proj.components.resize(kept, d);
  proj.explained_variance.resize(kept);
  for (int r = 0; r < kept; ++r) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - r);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    proj.components.row(r) = v.transpose();
    proj.explained_variance(r) = values(d - 1 - r);
  }
  return proj;
}

Eigen::MatrixXd pca_transform(const Eigen::MatrixXd& X, const PcaProjection& proj) {
  if (X.cols() != proj.input_dim()) throw UsageError("pca_transform: dimension mismatch");
  return (X.rowwise() - proj.mean.transpose()) * proj.components.transpose();
}

Eigen::MatrixXd pca_inverse_transform(const Eigen::MatrixXd& Z, const PcaProjection& proj) {
  if (Z.cols() != proj.rank()) throw UsageError("pca_inverse_transform: dimension mismatch");
  return (Z * proj.components).rowwise() + proj.mean.transpose();
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Eigen::RowVectorXd r = m.row(i);
    rows.push_back(std::vector<double>(r.data(), r.data() + r.size()));
  }
  return rows;
}

}  // namespace

json PcaProjection::to_json() const {
  return json{{"version", 1},
              {"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
              {"components", matrix_to_json(components)},
              {"explained_variance",
               std::vector<double>(explained_variance.data(), explained_variance.data() + explained_variance.size())},
              {"truncated", truncated}};
}

PcaProjection PcaProjection::from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw DataError("pca projection: unsupported version");
    PcaProjection p;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto comps = j.at("components").get<std::vector<std::vector<double>>>();
    const auto ev = j.at("explained_variance").get<std::vector<double>>();
    p.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    if (comps.size() != ev.size()) throw DataError("pca projection: components and explained_variance differ in length");
    p.components.resize(static_cast<Eigen::Index>(comps.size()), static_cast<Eigen::Index>(mean.size()));
    for (std::size_t r = 0; r < comps.size(); ++r) {
      if (comps[r].size() != mean.size()) throw DataError("pca projection: component length differs from mean");
      for (std::size_t c = 0; c < mean.size(); ++c)
        p.components(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = comps[r][c];
    }
    p.explained_variance = Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(ev.size()));
    p.truncated = j.value("truncated", false);
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("pca projection: ") + e.what());
  }
}

}  // namespace rarecog
