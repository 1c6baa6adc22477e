#include "xtra/llm_judge.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace xtra {

using nlohmann::json;

JudgeDataset parse_judge_dataset(const std::string& name) {
  std::string n;
  for (char c : name)
    if (c != '-' && c != '_' && c != ' ')
      n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (n == "ecnews") return JudgeDataset::EcNews;
  if (n == "amazonreview" || n == "amazon") return JudgeDataset::AmazonReview;
  if (n == "rakutenamazon" || n == "rakuten") return JudgeDataset::RakutenAmazon;
  throw ValidationError("unknown judge dataset \"" + name +
                        "\"; expected ec-news, amazon-review, or rakuten-amazon");
}

const std::string& judge_prompt(JudgeDataset dataset, JudgeTask task) {
  static const std::string intra_ec =
      "You are a helpful assistant evaluating the top words of a topic model "
      "output for a given topic. The dataset is EC News, a collection of English "
      "and Chinese news with 6 categories: business, education, entertainment, "
      "sports, tech, and fashion. Please rate how related the following words are "
      "to each other on a scale from 1 to 3 (\"1\"=not very related, "
      "\"2\"=moderately related, \"3\"=very related). Reply with a single number, "
      "indicating the overall appropriateness of the topic.";
  static const std::string intra_amazon =
      "You are a helpful assistant evaluating the top words of a topic model "
      "output for a given topic. The dataset is Amazon Review, which includes "
      "English and Chinese reviews from the Amazon website. Please rate how "
      "related the following words are to each other on a scale from 1 to 3 "
      "(\"1\"=not very related, \"2\"=moderately related, \"3\"=very related). "
      "Reply with a single number, indicating the overall appropriateness of the "
      "topic.";
  static const std::string intra_rakuten =
      "You are a helpful assistant evaluating the top words of a topic model "
      "output for a given topic. The dataset is Rakuten Amazon, which contains "
      "Japanese reviews from Rakuten, and English reviews from Amazon. Please "
      "rate how related the following words are to each other on a scale from 1 "
      "to 3 (\"1\"=not very related, \"2\"=moderately related, \"3\"=very "
      "related). Reply with a single number, indicating the overall "
      "appropriateness of the topic.";
  static const std::string cross_ec =
      "You are a helpful assistant evaluating the similarity of topics derived "
      "from topic modeling on parallel news corpora. The dataset is EC News, "
      "with English and Chinese news. You will be given two sets of top words, "
      "one for an English topic (Language 1) and one for a Chinese topic "
      "(Language 2). Please rate how similar the underlying topics represented "
      "by these two sets of words are, on a scale from 1 to 3 (\"1\"=not very "
      "similar, \"2\"=moderately similar, \"3\"=very similar). Reply with a "
      "single number.";
  static const std::string cross_amazon =
      "You are a helpful assistant evaluating the similarity of topics derived "
      "from topic modeling on parallel review corpora. The dataset is Amazon "
      "Review, with English and Chinese reviews. You will be given two sets of "
      "top words, one for an English topic (Language 1) and one for a Chinese "
      "topic (Language 2). Please rate how similar the underlying topics "
      "represented by these two sets of words are, on a scale from 1 to 3 "
      "(\"1\"=not very similar, \"2\"=moderately similar, \"3\"=very similar). "
      "Reply with a single number.";
  static const std::string cross_rakuten =
      "You are a helpful assistant evaluating the similarity of topics derived "
      "from topic modeling on parallel review corpora. The dataset is Rakuten "
      "Amazon, with Japanese reviews (Rakuten - Language 2) and English reviews "
      "(Amazon - Language 1). You will be given two sets of top words, one for "
      "an English topic and one for a Japanese topic. Please rate how similar "
      "the underlying topics represented by these two sets of words are, on a "
      "scale from 1 to 3 (\"1\"=not very similar, \"2\"=moderately similar, "
      "\"3\"=very similar). Reply with a single number.";

  if (task == JudgeTask::IntraCoherence) {
    switch (dataset) {
      case JudgeDataset::EcNews: return intra_ec;
      case JudgeDataset::AmazonReview: return intra_amazon;
      case JudgeDataset::RakutenAmazon: return intra_rakuten;
    }
  }
  switch (dataset) {
    case JudgeDataset::EcNews: return cross_ec;
    case JudgeDataset::AmazonReview: return cross_amazon;
    case JudgeDataset::RakutenAmazon: return cross_rakuten;
  }
  throw ValidationError("unknown dataset/task combination");
}

LlmProvider provider_from_env(JudgeDataset dataset) {
  const char* url = std::getenv("XTRA_LLM_URL");
  if (!url || !*url)
    throw ValidationError("XTRA_LLM_URL is not set; the LLM judge needs an endpoint");
  LlmProvider provider;
  provider.url = url;
  if (const char* key = std::getenv("XTRA_LLM_KEY"); key) provider.key = key;
  provider.dataset = dataset;
  return provider;
}

std::optional<int> parse_judge_reply(const std::string& reply) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j - i > 9) return std::nullopt;
    const int v = std::stoi(reply.substr(i, j - i));
    if (v >= 1 && v <= 3) return v;
    return std::nullopt;  // first integer is the verdict; out of range = unusable
  }
  return std::nullopt;
}

namespace {

struct Endpoint {
  bool https = false;
  std::string host;
  int port = 0;
  std::string path = "/";
};

Endpoint parse_endpoint(const std::string& url) {
  Endpoint ep;
  std::string rest;
  if (url.rfind("http://", 0) == 0) {
    ep.https = false;
    ep.port = 80;
    rest = url.substr(7);
  } else if (url.rfind("https://", 0) == 0) {
    ep.https = true;
    ep.port = 443;
    rest = url.substr(8);
  } else {
    throw ValidationError("XTRA_LLM_URL must start with http:// or https://");
  }
  const auto slash = rest.find('/');
  std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
  if (slash != std::string::npos) ep.path = rest.substr(slash);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    try {
      ep.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("bad port in XTRA_LLM_URL");
    }
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw ValidationError("XTRA_LLM_URL has no host");
  ep.host = authority;
  return ep;
}

std::string post_once(const Endpoint& ep, const LlmProvider& provider,
                      const std::string& body) {
  httplib::Headers headers;
  if (!provider.key.empty())
    headers.emplace("Authorization", "Bearer " + provider.key);

  auto do_post = [&](auto& client) -> httplib::Result {
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(30, 0);
    return client.Post(ep.path, headers, body, "application/json");
  };

  httplib::Result res;
  for (int attempt = 0; attempt < 4; ++attempt) {
    if (ep.https) {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
      httplib::SSLClient client(ep.host, ep.port);
      res = do_post(client);
#else
      throw ValidationError("https endpoint requires an OpenSSL-enabled build");
#endif
    } else {
      httplib::Client client(ep.host, ep.port);
      res = do_post(client);
    }
    if (!res)
      throw ProviderUnreachable("cannot reach " + provider.url + ": " +
                                httplib::to_string(res.error()));
    if (res->status == 429) {  // back off and retry on rate limiting
      std::this_thread::sleep_for(std::chrono::milliseconds(250 * (attempt + 1)));
      continue;
    }
    break;
  }
  if (res->status < 200 || res->status >= 300)
    throw ProviderUnreachable("provider returned HTTP " + std::to_string(res->status));

  // accept either {"reply": "..."} or a raw text body
  try {
    const json doc = json::parse(res->body);
    if (doc.is_object() && doc.contains("reply") && doc["reply"].is_string())
      return doc["reply"].get<std::string>();
  } catch (const json::exception&) {
  }
  return res->body;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ", ";
    out += words[i];
  }
  return out;
}

}  // namespace

LlmScores llm_rate_topics(const TopicSet& topics, JudgeTask task,
                          const LlmProvider& provider) {
  topics.validate();
  if (provider.repeats < 1) throw ValidationError("repeats must be >= 1");
  const Endpoint ep = parse_endpoint(provider.url);
  const std::string& prompt = judge_prompt(provider.dataset, task);
  const auto k = static_cast<std::size_t>(topics.topics);

  struct Slot {
    std::string user_text;
    std::optional<double>* target;
  };
  LlmScores scores;
  std::vector<Slot> slots;
  if (task == JudgeTask::IntraCoherence) {
    scores.lang1.assign(k, std::nullopt);
    scores.lang2.assign(k, std::nullopt);
    for (int l = 0; l < 2; ++l)
      for (std::size_t t = 0; t < k; ++t)
        slots.push_back({"Words: " + join_words(topics.words[static_cast<std::size_t>(l)][t]),
                         l == 0 ? &scores.lang1[t] : &scores.lang2[t]});
  } else {
    scores.cross.assign(k, std::nullopt);
    for (std::size_t t = 0; t < k; ++t)
      slots.push_back({"Language 1 words: " + join_words(topics.words[0][t]) +
                           "\nLanguage 2 words: " + join_words(topics.words[1][t]),
                       &scores.cross[t]});
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::atomic<bool> stop{false};

  auto worker = [&]() {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= slots.size()) return;
      try {
        json body;
        body["system"] = prompt;
        body["user"] = slots[i].user_text;
        const std::string payload = body.dump();

        double sum = 0.0;
        int parsed = 0;
        for (int r = 0; r < provider.repeats; ++r) {
          std::optional<int> score;
          for (int attempt = 0; attempt <= provider.parse_retries && !score; ++attempt)
            score = parse_judge_reply(post_once(ep, provider, payload));
          if (score) {
            sum += *score;
            ++parsed;
          }
        }
        if (parsed > 0) *slots[i].target = sum / parsed;
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(provider.max_concurrency, 1)),
                            slots.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return scores;
}

}  // namespace xtra
