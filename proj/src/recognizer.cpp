#include "rarecog/recognizer.hpp"

#include <cmath>

#include "rarecog/errors.hpp"
#include "rarecog/io.hpp"

namespace rarecog {

using json = nlohmann::json;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::majority: return "Majority";
    case Verdict::known: return "Known";
    case Verdict::emerging: return "Emerging";
  }
  return "Majority";
}

bool Decision::operator==(const Decision& o) const {
  if (verdict != o.verdict || subclass != o.subclass || gc_score != o.gc_score) return false;
  if (sc_scores.has_value() != o.sc_scores.has_value()) return false;
  return !sc_scores || (sc_scores->size() == o.sc_scores->size() && *sc_scores == *o.sc_scores);
}

int FeatureSpace::output_dim() const {
  if (projection) return projection->rank();
  return vocab ? static_cast<int>(vocab->size()) : raw_dim;
}

Eigen::VectorXd FeatureSpace::embed_text(std::string_view text) const {
  if (!vocab) throw UsageError("this model takes numeric features, not text");
  Eigen::RowVectorXd row = tfidf_row(text, *vocab);
  if (projection) return pca_transform(Eigen::MatrixXd(row), *projection).row(0).transpose();
  return row.transpose();
}

Eigen::VectorXd FeatureSpace::embed_features(std::span<const double> raw) const {
  if (vocab) throw UsageError("this model takes text, not numeric features");
  if (static_cast<int>(raw.size()) != raw_dim)
    throw UsageError("expected " + std::to_string(raw_dim) + " features, got " + std::to_string(raw.size()));
  Eigen::Map<const Eigen::RowVectorXd> row(raw.data(), static_cast<Eigen::Index>(raw.size()));
  if (projection) return pca_transform(Eigen::MatrixXd(row), *projection).row(0).transpose();
  return row.transpose();
}

json FeatureSpace::to_json() const {
  json j{{"kind", to_string(kind)}, {"raw_dim", raw_dim}};
  if (vocab) j["vocabulary"] = vocab->to_json();
  if (projection) j["projection"] = projection->to_json();
  return j;
}

FeatureSpace FeatureSpace::from_json(const json& j) {
  FeatureSpace fs;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "raw")
    fs.kind = Representation::raw;
  else if (kind == "tfidf")
    fs.kind = Representation::tfidf;
  else if (kind == "pca")
    fs.kind = Representation::pca;
  else
    throw DataError("model: unknown representation '" + kind + "'");
  fs.raw_dim = j.value("raw_dim", 0);
  if (j.contains("vocabulary")) fs.vocab = Vocabulary::from_json(j.at("vocabulary"));
  if (j.contains("projection")) fs.projection = PcaProjection::from_json(j.at("projection"));
  return fs;
}

namespace {

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string dims(const char* field, long have) { return std::string(field) + " has " + std::to_string(have); }

}  // namespace

void ModelDocument::validate() const {
  auto fail = [](const std::string& msg) { throw DataError("inconsistent model: " + msg); };
  if (version != kModelVersion) fail("version " + std::to_string(version) + " is not " + std::to_string(kModelVersion));
  const int d = params.dim();
  const int K = params.num_subclasses();
  if (K < 1) fail("K=" + std::to_string(K) + " but at least one subclass is required");
  if (params.W.cols() != d) fail("W has " + std::to_string(params.W.cols()) + " columns but d=" + std::to_string(d));
  if (params.b.size() != K) fail("K=" + std::to_string(K) + " but " + dims("b", params.b.size()) + " entries");
  if (thresholds.num_subclasses() != K)
    fail("K=" + std::to_string(K) + " but thresholds has " + std::to_string(thresholds.num_subclasses()) + " entries");
  if (static_cast<int>(subclass_names.size()) != K)
    fail("K=" + std::to_string(K) + " but subclass_names has " + std::to_string(subclass_names.size()) + " entries");
  if (features.output_dim() != d)
    fail("d=" + std::to_string(d) + " but representation produces " + std::to_string(features.output_dim()) +
         " features");
  if (features.projection) {
    const int base = features.vocab ? static_cast<int>(features.vocab->size()) : features.raw_dim;
    if (features.projection->input_dim() != base)
      fail("projection expects " + std::to_string(features.projection->input_dim()) + " inputs but representation has " +
           std::to_string(base));
  }
  if (!params.all_finite()) fail("non-finite parameters");
}

json ModelDocument::to_json() const {
  json W = json::array();
  for (Eigen::Index k = 0; k < params.W.rows(); ++k) W.push_back(vector_json(params.W.row(k).transpose()));
  return json{{"version", version},
              {"d", d()},
              {"K", K()},
              {"subclass_names", subclass_names},
              {"params", {{"w0", vector_json(params.w0)}, {"b0", params.b0}, {"W", W}, {"b", vector_json(params.b)}}},
              {"thresholds", thresholds.to_json()},
              {"representation", features.to_json()},
              {"provenance", provenance}};
}

ModelDocument ModelDocument::from_json(const json& j) {
  ModelDocument m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kModelVersion)
      throw DataError("model version " + std::to_string(m.version) + " is not supported (expected " +
                      std::to_string(kModelVersion) + ")");
    const int d = j.at("d").get<int>();
    const int K = j.at("K").get<int>();
    const auto& p = j.at("params");
    m.params.w0 = vector_from(p.at("w0"));
    m.params.b0 = p.at("b0").get<double>();
    m.params.b = vector_from(p.at("b"));
    const auto& W = p.at("W");
    m.params.W.resize(static_cast<Eigen::Index>(W.size()), m.params.w0.size());
    for (std::size_t k = 0; k < W.size(); ++k) {
      const Eigen::VectorXd row = vector_from(W[k]);
      if (row.size() != m.params.w0.size()) throw DataError("inconsistent model: W row length differs from w0");
      m.params.W.row(static_cast<Eigen::Index>(k)) = row.transpose();
    }
    m.thresholds = RejectionThresholds::from_json(j.at("thresholds"));
    m.features = FeatureSpace::from_json(j.at("representation"));
    m.subclass_names = j.at("subclass_names").get<std::vector<std::string>>();
    m.provenance = j.value("provenance", json::object());
    if (m.d() != d) throw DataError("inconsistent model: d=" + std::to_string(d) + " but w0 has " + std::to_string(m.d()) + " entries");
    if (m.K() != K) throw DataError("inconsistent model: K=" + std::to_string(K) + " but W has " + std::to_string(m.K()) + " rows");
    if (static_cast<int>(m.thresholds.thresholds.size()) != K)
      throw DataError("inconsistent model: K=" + std::to_string(K) + " but thresholds has " +
                      std::to_string(m.thresholds.thresholds.size()) + " entries");
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt model document: ") + e.what());
  }
  m.validate();
  return m;
}

Decision predict(const ModelDocument& model, std::span<const double> x, std::uint64_t* sc_evaluations) {
  if (static_cast<int>(x.size()) != model.d())
    throw UsageError("predict: expected " + std::to_string(model.d()) + " features, got " + std::to_string(x.size()));
  Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  Decision out;
  out.gc_score = model.params.w0.dot(v) + model.params.b0;
  if (!(out.gc_score > 0.0)) return out;

  if (sc_evaluations) ++*sc_evaluations;
  Eigen::VectorXd scores = model.params.W * v + model.params.b;
  int best = 0;
  for (int k = 1; k <= model.K(); ++k) {
    if (!accepts(model.thresholds, k, scores(k - 1))) continue;
    if (best == 0 || scores(k - 1) > scores(best - 1)) best = k;
  }
  out.verdict = best == 0 ? Verdict::emerging : Verdict::known;
  out.subclass = best;
  out.sc_scores = std::move(scores);
  return out;
}

Decision predict(const ModelDocument& model, const Eigen::VectorXd& x, std::uint64_t* sc_evaluations) {
  return predict(model, std::span(x.data(), static_cast<std::size_t>(x.size())), sc_evaluations);
}

std::size_t StreamStats::total() const {
  std::size_t t = majority + emerging;
  for (auto c : known) t += c;
  return t;
}

json StreamStats::to_json() const {
  return json{{"majority", majority}, {"emerging", emerging}, {"known", known}, {"sc_evaluations", sc_evaluations}};
}

StreamResult predict_stream(const ModelDocument& model, std::span<const Eigen::VectorXd> source) {
  StreamResult out;
  out.stats.known.assign(static_cast<std::size_t>(model.K()), 0);
  out.decisions.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    Decision dec;
    try {
      dec = predict(model, source[i], &out.stats.sc_evaluations);
    } catch (const UsageError& e) {
      throw UsageError("stream item " + std::to_string(i) + ": " + e.what());
    }
    switch (dec.verdict) {
      case Verdict::majority: ++out.stats.majority; break;
      case Verdict::emerging: ++out.stats.emerging; break;
      case Verdict::known: ++out.stats.known[static_cast<std::size_t>(dec.subclass - 1)]; break;
    }
    out.decisions.push_back(std::move(dec));
  }
  return out;
}

std::string serialize_model(const ModelDocument& model) {
  model.validate();
  return model.to_json().dump(1) + "\n";
}

ModelDocument parse_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("corrupt model document: ") + e.what());
  }
  return ModelDocument::from_json(j);
}

void save_model(const ModelDocument& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

ModelDocument load_model(const std::filesystem::path& path) { return parse_model(read_text_file(path)); }

}  // namespace rarecog
