#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xtra/common.hpp"
#include "xtra/corpus.hpp"
#include "xtra/model.hpp"

namespace xtra {

struct TopicSet {
  int topics = 0;  // K
  int top_l = 15;
  std::array<std::vector<std::vector<std::string>>, 2> words;  // [lang][topic]

  void validate() const;
};

// Aligned document pairs for co-occurrence estimation.
struct ReferencePairs {
  std::vector<std::vector<std::string>> l1_tokens;
  std::vector<std::vector<std::string>> l2_tokens;

  std::size_t size() const { return l1_tokens.size(); }
};

struct MetricReport {
  double cnpmi = 0.0;
  double tu = 0.0;       // mean of the per-language values
  double tu_l1 = 0.0;
  double tu_l2 = 0.0;
  double tq = 0.0;       // max(0, cnpmi) * tu
  std::vector<double> cnpmi_per_topic;
  std::array<std::vector<double>, 2> tu_per_topic;
  std::uint64_t checkpoint_hash = 0;
  std::uint64_t reference_hash = 0;
};

// Deterministic (eval-mode) document-topic rows for every BoW row.
// Errors if the matrix was built against a different vocabulary than the
// model was trained on.
Eigen::MatrixXd infer_theta(const ModelState& state, const BowMatrix& bows);

// Mean over topics of mean over top words of 1/cnt(w), where cnt(w) counts
// same-language topics whose top list contains w.
double compute_tu(const TopicSet& topics, Lang lang);
std::vector<double> tu_per_topic(const TopicSet& topics, Lang lang);

// Mean over topics of mean NPMI over all LxL cross-lingual word pairs,
// with document-level set semantics on the reference pairs. A pair that
// never co-occurs scores -1; a pair present in every document scores +1.
double compute_cnpmi(const TopicSet& topics, const ReferencePairs& ref,
                     std::vector<double>* per_topic = nullptr);

double compute_tq(double cnpmi, double tu);

MetricReport evaluate_topics(const TopicSet& topics, const ReferencePairs& ref);

enum class ClassifierMode { Intra, Cross };

// Linear one-vs-rest max-margin classifier on theta features; returns test
// accuracy. Deterministic given the seed.
double eval_classification(const Eigen::MatrixXd& theta_train,
                           const std::vector<int>& labels_train,
                           const Eigen::MatrixXd& theta_test,
                           const std::vector<int>& labels_test,
                           ClassifierMode mode, std::uint64_t seed = 1);

ReferencePairs load_reference_pairs(const std::filesystem::path& path);
void save_reference_pairs(const ReferencePairs& ref,
                          const std::filesystem::path& path);

TopicSet load_topics(const std::filesystem::path& path);
void save_topics(const TopicSet& topics, const std::filesystem::path& path);

void save_metric_report(const MetricReport& report,
                        const std::filesystem::path& path);

}  // namespace xtra
