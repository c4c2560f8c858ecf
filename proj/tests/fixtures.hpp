#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rarecog/corpus.hpp"
#include "rarecog/objective.hpp"

namespace fixture {

/// n rows, K subclasses; every subclass gets at least one rare row and at
/// least one row stays majority.
struct Instance {
  Eigen::MatrixXd X;
  std::vector<int> subclass;
  int K = 0;
};

inline Instance random_instance(std::mt19937_64& rng, int n, int d, int K) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, K);
  Instance inst;
  inst.K = K;
  inst.X.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) inst.X(i, j) = g(rng);
  for (int i = 0; i < n; ++i) inst.subclass.push_back(i < K ? i + 1 : (i == K ? 0 : label(rng)));
  return inst;
}

inline rarecog::ModelParams random_params(std::mt19937_64& rng, int d, int K, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  rarecog::ModelParams m = rarecog::ModelParams::zeros(d, K);
  for (int j = 0; j < d; ++j) m.w0(j) = g(rng);
  m.b0 = g(rng);
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < d; ++j) m.W(k, j) = g(rng);
    m.b(k) = g(rng);
  }
  return m;
}

/// Corpus with the given subclass sizes and majority count; texts are
/// distinct per document so TF-IDF rows differ.
inline rarecog::LabeledCorpus sized_corpus(const std::vector<int>& sizes, int majority) {
  rarecog::LabeledCorpus c;
  c.id = "fixture";
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    c.subclass_names.push_back("sub" + std::to_string(k + 1));
    for (int i = 0; i < sizes[k]; ++i)
      c.docs.push_back({"topic" + std::string(1, static_cast<char>('a' + k)) + " doc", rarecog::Label::rare,
                        static_cast<int>(k) + 1});
  }
  for (int i = 0; i < majority; ++i) c.docs.push_back({"everyday news", rarecog::Label::majority, 0});
  return c;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("rarecog-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
