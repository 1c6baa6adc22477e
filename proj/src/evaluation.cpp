#include "xtra/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "xtra/io_util.hpp"

namespace xtra {

using nlohmann::json;

void TopicSet::validate() const {
  if (topics < 1) throw ValidationError("topic set needs at least one topic");
  if (top_l < 1) throw ValidationError("top_l must be >= 1");
  for (int l = 0; l < 2; ++l) {
    const auto& lists = words[static_cast<std::size_t>(l)];
    if (lists.size() != static_cast<std::size_t>(topics))
      throw ValidationError(std::string("language ") + lang_tag(static_cast<Lang>(l)) +
                            " has " + std::to_string(lists.size()) + " topics, expected " +
                            std::to_string(topics));
    for (const auto& list : lists)
      if (list.size() != static_cast<std::size_t>(top_l))
        throw ValidationError("every top-word list must have exactly " +
                              std::to_string(top_l) + " words");
  }
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

}  // namespace

Eigen::MatrixXd infer_theta(const ModelState& state, const BowMatrix& bows) {
  const int l = lang_index(bows.lang);
  if (bows.counts.cols() != state.vocab_size[static_cast<std::size_t>(l)])
    throw ValidationError("bow width " + std::to_string(bows.counts.cols()) +
                          " does not match the model vocabulary size " +
                          std::to_string(state.vocab_size[static_cast<std::size_t>(l)]));
  const std::uint64_t model_hash = state.vocab_hash[static_cast<std::size_t>(l)];
  if (model_hash != 0 && bows.vocab_hash != 0 && bows.vocab_hash != model_hash)
    throw ValidationError("vocabulary hash mismatch: model " + hex64(model_hash) +
                          " vs bow " + hex64(bows.vocab_hash));

  Eigen::MatrixXd theta(bows.counts.rows(), state.config.topics);
  for (Eigen::Index i = 0; i < bows.counts.rows(); ++i) {
    const EncoderOutput out =
        encode(state, bows.counts.row(i).transpose(), bows.lang, /*train_mode=*/false);
    theta.row(i) = out.theta.transpose();
  }
  return theta;
}

std::vector<double> tu_per_topic(const TopicSet& topics, Lang lang) {
  topics.validate();
  const auto& lists = topics.words[static_cast<std::size_t>(lang_index(lang))];

  std::map<std::string, int> cnt;
  for (const auto& list : lists) {
    const std::set<std::string> uniq(list.begin(), list.end());
    for (const auto& w : uniq) ++cnt[w];
  }

  std::vector<double> out;
  out.reserve(lists.size());
  for (const auto& list : lists) {
    double acc = 0.0;
    for (const auto& w : list) acc += 1.0 / static_cast<double>(cnt.at(w));
    out.push_back(acc / static_cast<double>(list.size()));
  }
  return out;
}

double compute_tu(const TopicSet& topics, Lang lang) {
  const auto per_topic = tu_per_topic(topics, lang);
  double acc = 0.0;
  for (double v : per_topic) acc += v;
  return acc / static_cast<double>(per_topic.size());
}

namespace {

// per-word presence bitmask over reference pairs
class PresenceIndex {
 public:
  PresenceIndex(const std::vector<std::vector<std::string>>& sides,
                const std::vector<std::vector<std::string>>& lists) {
    blocks_ = (sides.size() + 63) / 64;
    std::set<std::string> wanted;
    for (const auto& list : lists) wanted.insert(list.begin(), list.end());
    for (const auto& w : wanted) masks_[w].assign(blocks_, 0);
    for (std::size_t p = 0; p < sides.size(); ++p)
      for (const auto& tok : sides[p]) {
        auto it = masks_.find(tok);
        if (it != masks_.end()) it->second[p / 64] |= (std::uint64_t{1} << (p % 64));
      }
  }

  const std::vector<std::uint64_t>& mask(const std::string& w) const {
    return masks_.at(w);
  }

  static std::size_t count(const std::vector<std::uint64_t>& m) {
    std::size_t n = 0;
    for (std::uint64_t b : m) n += static_cast<std::size_t>(std::popcount(b));
    return n;
  }

  static std::size_t count_and(const std::vector<std::uint64_t>& a,
                               const std::vector<std::uint64_t>& b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      n += static_cast<std::size_t>(std::popcount(a[i] & b[i]));
    return n;
  }

 private:
  std::size_t blocks_ = 0;
  std::map<std::string, std::vector<std::uint64_t>> masks_;
};

}  // namespace

double compute_cnpmi(const TopicSet& topics, const ReferencePairs& ref,
                     std::vector<double>* per_topic) {
  topics.validate();
  if (ref.size() == 0) throw ValidationError("reference has no pairs");
  if (ref.l1_tokens.size() != ref.l2_tokens.size())
    throw ValidationError("reference sides differ in length");

  const PresenceIndex idx1(ref.l1_tokens, topics.words[0]);
  const PresenceIndex idx2(ref.l2_tokens, topics.words[1]);
  const double total = static_cast<double>(ref.size());

  bool warned = false;
  if (per_topic) per_topic->clear();
  double sum = 0.0;
  for (int k = 0; k < topics.topics; ++k) {
    double topic_sum = 0.0;
    std::size_t pairs = 0;
    for (const auto& w1 : topics.words[0][static_cast<std::size_t>(k)]) {
      const auto& m1 = idx1.mask(w1);
      const double p1 = static_cast<double>(PresenceIndex::count(m1)) / total;
      for (const auto& w2 : topics.words[1][static_cast<std::size_t>(k)]) {
        const auto& m2 = idx2.mask(w2);
        const double p2 = static_cast<double>(PresenceIndex::count(m2)) / total;
        const double p12 =
            static_cast<double>(PresenceIndex::count_and(m1, m2)) / total;
        double npmi;
        if (p12 <= 0.0) {
          npmi = -1.0;
          if (!warned && (p1 <= 0.0 || p2 <= 0.0)) {
            std::cerr << "warning: topic word absent from the reference corpus "
                         "(e.g. \""
                      << (p1 <= 0.0 ? w1 : w2) << "\"); such pairs score -1\n";
            warned = true;
          }
        } else if (p12 >= 1.0) {
          npmi = 1.0;
        } else {
          npmi = std::log(p12 / (p1 * p2)) / (-std::log(p12));
        }
        topic_sum += npmi;
        ++pairs;
      }
    }
    const double topic_mean = topic_sum / static_cast<double>(pairs);
    if (per_topic) per_topic->push_back(topic_mean);
    sum += topic_mean;
  }
  return sum / static_cast<double>(topics.topics);
}

double compute_tq(double cnpmi, double tu) {
  if (!(tu >= 0.0 && tu <= 1.0))
    throw ValidationError("tu must lie in [0, 1]");
  return std::max(0.0, cnpmi) * tu;
}

MetricReport evaluate_topics(const TopicSet& topics, const ReferencePairs& ref) {
  MetricReport report;
  report.tu_per_topic[0] = tu_per_topic(topics, Lang::L1);
  report.tu_per_topic[1] = tu_per_topic(topics, Lang::L2);
  report.tu_l1 = compute_tu(topics, Lang::L1);
  report.tu_l2 = compute_tu(topics, Lang::L2);
  report.tu = 0.5 * (report.tu_l1 + report.tu_l2);
  report.cnpmi = compute_cnpmi(topics, ref, &report.cnpmi_per_topic);
  report.tq = compute_tq(report.cnpmi, report.tu);
  return report;
}

namespace {

// deterministic Pegasos-style hinge-loss trainer, one weight vector
Eigen::VectorXd train_binary_svm(const Eigen::MatrixXd& x,
                                 const std::vector<int>& y, std::mt19937_64 rng) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const double reg = 1e-3;
  const int epochs = 60;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  long long t = 0;
  for (int e = 0; e < epochs; ++e) {
    shuffle_det(order, rng);
    for (int i : order) {
      ++t;
      const double eta = 1.0 / (reg * static_cast<double>(t));
      const double margin = static_cast<double>(y[static_cast<std::size_t>(i)]) *
                            w.dot(x.row(i).transpose());
      w *= (1.0 - eta * reg);
      if (margin < 1.0)
        w += eta * static_cast<double>(y[static_cast<std::size_t>(i)]) *
             x.row(i).transpose();
    }
  }
  return w;
}

}  // namespace

double eval_classification(const Eigen::MatrixXd& theta_train,
                           const std::vector<int>& labels_train,
                           const Eigen::MatrixXd& theta_test,
                           const std::vector<int>& labels_test,
                           ClassifierMode mode, std::uint64_t seed) {
  (void)mode;  // both settings share the trainer; the caller picks the data
  if (theta_train.rows() != static_cast<Eigen::Index>(labels_train.size()))
    throw ValidationError("training features/labels length mismatch");
  if (theta_test.rows() != static_cast<Eigen::Index>(labels_test.size()))
    throw ValidationError("test features/labels length mismatch");
  if (theta_train.cols() != theta_test.cols())
    throw ValidationError("train and test feature widths differ");
  if (theta_test.rows() == 0) throw ValidationError("empty test set");

  std::set<int> class_set(labels_train.begin(), labels_train.end());
  if (class_set.size() < 2)
    throw ValidationError("training set has a single class");
  const std::vector<int> classes(class_set.begin(), class_set.end());

  // bias feature appended so the separator need not pass through the origin
  auto with_bias = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), m.cols() + 1);
    out.leftCols(m.cols()) = m;
    out.col(m.cols()).setOnes();
    return out;
  };
  const Eigen::MatrixXd xtr = with_bias(theta_train);
  const Eigen::MatrixXd xte = with_bias(theta_test);

  Eigen::MatrixXd w(static_cast<Eigen::Index>(classes.size()), xtr.cols());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<int> y(labels_train.size());
    for (std::size_t i = 0; i < labels_train.size(); ++i)
      y[i] = labels_train[i] == classes[c] ? 1 : -1;
    w.row(static_cast<Eigen::Index>(c)) =
        train_binary_svm(xtr, y, rng_for(seed, 0xC1A55, c)).transpose();
  }

  const Eigen::MatrixXd scores = xte * w.transpose();
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < xte.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(i, c) > scores(i, best)) best = c;
    if (classes[static_cast<std::size_t>(best)] ==
        labels_test[static_cast<std::size_t>(i)])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xte.rows());
}

ReferencePairs load_reference_pairs(const std::filesystem::path& path) {
  ReferencePairs ref;
  for_each_line(path, [&](std::size_t lineno, const std::string& line) {
    if (line.empty()) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed record: " + e.what());
    }
    auto fail = [&](const std::string& msg) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (!rec.is_object() || !rec.contains("l1_tokens") || !rec.contains("l2_tokens"))
      fail("expected {\"l1_tokens\": [...], \"l2_tokens\": [...]}");
    auto side = [&](const char* key) {
      if (!rec[key].is_array()) fail(std::string(key) + " is not an array");
      std::vector<std::string> toks;
      for (const auto& t : rec[key]) {
        if (!t.is_string()) fail(std::string("non-string token in ") + key);
        toks.push_back(t.get<std::string>());
      }
      if (toks.empty()) fail(std::string(key) + " is empty");
      return toks;
    };
    ref.l1_tokens.push_back(side("l1_tokens"));
    ref.l2_tokens.push_back(side("l2_tokens"));
  });
  if (ref.size() == 0) throw ValidationError(path.string() + ": no reference pairs");
  return ref;
}

void save_reference_pairs(const ReferencePairs& ref,
                          const std::filesystem::path& path) {
  if (ref.l1_tokens.size() != ref.l2_tokens.size())
    throw ValidationError("reference sides differ in length");
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    json rec;
    rec["l1_tokens"] = ref.l1_tokens[i];
    rec["l2_tokens"] = ref.l2_tokens[i];
    out << rec.dump() << "\n";
  }
}

TopicSet load_topics(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed topics file: " + e.what());
  }
  TopicSet topics;
  try {
    topics.topics = doc.at("topics").get<int>();
    topics.top_l = doc.at("top_l").get<int>();
    topics.words[0] = doc.at("l1").get<std::vector<std::vector<std::string>>>();
    topics.words[1] = doc.at("l2").get<std::vector<std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad topics file: " + e.what());
  }
  topics.validate();
  return topics;
}

void save_topics(const TopicSet& topics, const std::filesystem::path& path) {
  topics.validate();
  json doc;
  doc["topics"] = topics.topics;
  doc["top_l"] = topics.top_l;
  doc["l1"] = topics.words[0];
  doc["l2"] = topics.words[1];
  std::ofstream out = open_out(path);
  out << doc.dump(2) << "\n";
}

void save_metric_report(const MetricReport& report,
                        const std::filesystem::path& path) {
  json doc;
  doc["cnpmi"] = report.cnpmi;
  doc["tu"] = report.tu;
  doc["tu_l1"] = report.tu_l1;
  doc["tu_l2"] = report.tu_l2;
  doc["tq"] = report.tq;
  doc["cnpmi_per_topic"] = report.cnpmi_per_topic;
  doc["tu_per_topic_l1"] = report.tu_per_topic[0];
  doc["tu_per_topic_l2"] = report.tu_per_topic[1];
  doc["checkpoint_hash"] = hex64(report.checkpoint_hash);
  doc["reference_hash"] = hex64(report.reference_hash);
  std::ofstream out = open_out(path);
  out << doc.dump(2) << "\n";
}

}  // namespace xtra
