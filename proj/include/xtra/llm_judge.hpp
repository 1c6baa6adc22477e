#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xtra/evaluation.hpp"

namespace xtra {

enum class JudgeTask { IntraCoherence, CrossSimilarity };

enum class JudgeDataset { EcNews, AmazonReview, RakutenAmazon };

JudgeDataset parse_judge_dataset(const std::string& name);

// Built-in judging prompt for a dataset/task combination.
const std::string& judge_prompt(JudgeDataset dataset, JudgeTask task);

struct LlmProvider {
  std::string url;   // from XTRA_LLM_URL
  std::string key;   // from XTRA_LLM_KEY, sent as a bearer token
  JudgeDataset dataset = JudgeDataset::EcNews;
  int repeats = 3;         // independent assessments averaged per topic
  int parse_retries = 2;   // extra attempts when a reply has no usable score
  int max_concurrency = 4;
};

// Raised when the endpoint cannot be reached at all; callers treat the
// metric as skipped rather than failing the run.
class ProviderUnreachable : public std::runtime_error {
 public:
  explicit ProviderUnreachable(const std::string& msg)
      : std::runtime_error(msg) {}
};

struct LlmScores {
  // Per-topic means on the 1..3 scale; nullopt when every reply for the
  // topic was unparseable.
  std::vector<std::optional<double>> lang1, lang2;  // intra-coherence
  std::vector<std::optional<double>> cross;         // cross-lingual similarity
};

// Reads XTRA_LLM_URL / XTRA_LLM_KEY; throws ValidationError when unset.
LlmProvider provider_from_env(JudgeDataset dataset);

LlmScores llm_rate_topics(const TopicSet& topics, JudgeTask task,
                          const LlmProvider& provider);

// First integer found in a reply, if it is a valid 1..3 score.
std::optional<int> parse_judge_reply(const std::string& reply);

}  // namespace xtra
