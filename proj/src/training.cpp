#include "xtra/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "xtra/io_util.hpp"

namespace xtra {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (!(lr > 0.0)) throw ValidationError("lr must be > 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    throw ValidationError("lr_decay_factor must be in (0, 1]");
  if (lr_decay_every < 1) throw ValidationError("lr_decay_every must be >= 1");
  if (batch_size < 2 || batch_size % 2 != 0)
    throw ValidationError("batch_size must be an even number >= 2");
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
    throw ValidationError("lambda weights must be >= 0");
  if (!(grad_clip_norm > 0.0)) throw ValidationError("grad_clip_norm must be > 0");
}

std::vector<Batch> make_balanced_batches(int n1, int n2, int batch_size,
                                         std::uint64_t seed, int epoch,
                                         bool allow_resample) {
  if (n1 < 1 || n2 < 1)
    throw ValidationError("both languages need at least one document");
  if (batch_size < 2 || batch_size % 2 != 0)
    throw ValidationError("batch_size must be an even number >= 2");
  const int half = batch_size / 2;
  if (!allow_resample && batch_size > 2 * std::min(n1, n2))
    throw ValidationError("batch_size " + std::to_string(batch_size) +
                          " exceeds twice the smaller language (" +
                          std::to_string(std::min(n1, n2)) +
                          " docs) and resampling is disabled");

  const bool l1_longer = n1 >= n2;
  const int n_long = l1_longer ? n1 : n2;
  const int n_short = l1_longer ? n2 : n1;

  std::vector<int> long_order(static_cast<std::size_t>(n_long));
  std::iota(long_order.begin(), long_order.end(), 0);
  auto rng_long = rng_for(seed, static_cast<std::uint64_t>(epoch), 0);
  shuffle_det(long_order, rng_long);

  std::vector<int> short_seq(static_cast<std::size_t>(n_short));
  std::iota(short_seq.begin(), short_seq.end(), 0);
  auto rng_short = rng_for(seed, static_cast<std::uint64_t>(epoch), 1);
  shuffle_det(short_seq, rng_short);
  if (static_cast<int>(short_seq.size()) > n_long) short_seq.resize(static_cast<std::size_t>(n_long));
  auto rng_resample = rng_for(seed, static_cast<std::uint64_t>(epoch), 2);
  while (static_cast<int>(short_seq.size()) < n_long)
    short_seq.push_back(static_cast<int>(rng_resample() % static_cast<std::uint64_t>(n_short)));

  std::vector<Batch> batches;
  for (int start = 0; start < n_long; start += half) {
    const int stop = std::min(start + half, n_long);
    Batch b;
    auto& long_side = l1_longer ? b.l1 : b.l2;
    auto& short_side = l1_longer ? b.l2 : b.l1;
    for (int i = start; i < stop; ++i) {
      long_side.push_back(long_order[static_cast<std::size_t>(i)]);
      short_side.push_back(short_seq[static_cast<std::size_t>(i)]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

double lr_at(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw ValidationError("epoch must be >= 0");
  return config.lr *
         std::pow(config.lr_decay_factor, epoch / config.lr_decay_every);
}

namespace {

// tag offsets keep noise/dropout streams disjoint from each other and from
// the model-init stream (which uses a = 0x1217)
constexpr std::uint64_t kNoiseDomain = 0xE000000000ull;
constexpr std::uint64_t kDropoutDomain = 0xD000000000ull;

std::uint64_t doc_key(int lang, int row) {
  return (static_cast<std::uint64_t>(lang + 1) << 32) |
         static_cast<std::uint64_t>(row);
}

struct DocRef {
  Eigen::Index emb_row;
  int cluster;
};

}  // namespace

TrainLog train(ModelState& state, const TrainData& data, const TrainConfig& config) {
  config.validate();
  if (!data.bow[0] || !data.bow[1] || !data.embeddings || !data.clusters || !data.prior)
    throw ValidationError("training data is incomplete");
  const ModelConfig& mc = state.config;
  if (data.prior->dim() != mc.topics)
    throw ValidationError("prior dimension " + std::to_string(data.prior->dim()) +
                          " does not match K=" + std::to_string(mc.topics));
  if (data.clusters->num_clusters != mc.topics)
    throw ValidationError("cluster count T=" + std::to_string(data.clusters->num_clusters) +
                          " must equal topic count K=" + std::to_string(mc.topics));
  if (static_cast<int>(data.embeddings->dim) != mc.embed_dim)
    throw ValidationError("embedding dim does not match the model");

  // resolve embeddings and cluster ids per language row up front
  std::array<std::vector<DocRef>, 2> refs;
  Eigen::MatrixXd emb_rows[2];
  for (int l = 0; l < 2; ++l) {
    const BowMatrix& bow = *data.bow[l];
    if (bow.counts.cols() != state.vocab_size[static_cast<std::size_t>(l)])
      throw ValidationError("bow width does not match the model vocabulary");
    if (state.vocab_hash[static_cast<std::size_t>(l)] != 0 && bow.vocab_hash != 0 &&
        bow.vocab_hash != state.vocab_hash[static_cast<std::size_t>(l)])
      throw ValidationError("vocabulary hash mismatch for " +
                            std::string(lang_tag(static_cast<Lang>(l))));
    refs[l].resize(bow.doc_ids.size());
    emb_rows[l].resize(static_cast<Eigen::Index>(bow.doc_ids.size()), mc.embed_dim);
    for (std::size_t i = 0; i < bow.doc_ids.size(); ++i) {
      const std::string& id = bow.doc_ids[i];
      if (!data.embeddings->contains(id))
        throw ValidationError("no embedding for document \"" + id + "\"");
      emb_rows[l].row(static_cast<Eigen::Index>(i)) = data.embeddings->at(id).transpose();
      auto it = data.clusters->assignment.find(id);
      if (it == data.clusters->assignment.end())
        throw ValidationError("no cluster assignment for document \"" + id + "\"");
      refs[l][i].cluster = it->second;
    }
  }

  const int n1 = static_cast<int>(data.bow[0]->doc_ids.size());
  const int n2 = static_cast<int>(data.bow[1]->doc_ids.size());
  const Eigen::Index k = mc.topics;
  const Eigen::Index hid = mc.hidden_dim;

  ModelState grads = state.zeros_like();
  ModelState m1 = state.zeros_like();
  ModelState m2 = state.zeros_like();
  long long step = 0;
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  TermWeights weights;
  weights.tm = 1.0;
  weights.infonce = config.lambda1;
  weights.cluster = config.lambda2;
  weights.beta = config.lambda3;

  TrainLog log;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(config, epoch);
    const auto batches = make_balanced_batches(n1, n2, config.batch_size,
                                               config.seed, epoch, config.allow_resample);
    LossBreakdown epoch_sum;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& b = batches[bi];
      BatchInput input;
      const std::vector<int>* sides[2] = {&b.l1, &b.l2};
      for (int l = 0; l < 2; ++l) {
        const auto nl = static_cast<Eigen::Index>(sides[l]->size());
        input.bows[l].resize(nl, data.bow[l]->counts.cols());
        for (Eigen::Index r = 0; r < nl; ++r)
          input.bows[l].row(r) =
              data.bow[l]->counts.row((*sides[l])[static_cast<std::size_t>(r)]);
        for (int row : *sides[l]) input.order.emplace_back(static_cast<Lang>(l), row);
      }
      const Eigen::Index bsz = input.size();
      input.embeddings.resize(bsz, mc.embed_dim);
      input.cluster_ids.resize(static_cast<std::size_t>(bsz));
      input.noise.resize(bsz, k);
      for (Eigen::Index i = 0; i < bsz; ++i) {
        const auto [lang, row] = input.order[static_cast<std::size_t>(i)];
        const int l = lang_index(lang);
        input.embeddings.row(i) = emb_rows[l].row(row);
        input.cluster_ids[static_cast<std::size_t>(i)] =
            refs[l][static_cast<std::size_t>(row)].cluster;
        auto rng = rng_for(config.seed, kNoiseDomain + static_cast<std::uint64_t>(epoch),
                           bi, doc_key(l, row));
        for (Eigen::Index j = 0; j < k; ++j) input.noise(i, j) = std_normal(rng);
      }
      if (mc.dropout > 0.0) {
        const double keep_scale = 1.0 / (1.0 - mc.dropout);
        for (int l = 0; l < 2; ++l) {
          const auto nl = static_cast<Eigen::Index>(sides[l]->size());
          input.dropout_masks[l].resize(nl, hid);
          for (Eigen::Index r = 0; r < nl; ++r) {
            auto rng = rng_for(config.seed,
                               kDropoutDomain + static_cast<std::uint64_t>(epoch), bi,
                               doc_key(l, (*sides[l])[static_cast<std::size_t>(r)]));
            for (Eigen::Index j = 0; j < hid; ++j)
              input.dropout_masks[l](r, j) =
                  uniform01(rng) < mc.dropout ? 0.0 : keep_scale;
          }
        }
      }

      grads.set_zero();
      LossBreakdown parts;
      try {
        parts = evaluate_batch(state, input, *data.prior, weights, &grads);
      } catch (const ValidationError& e) {
        throw ValidationError("epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(bi) + ": " + e.what());
      }

      double sq_norm = 0.0;
      for (const auto& [name, g] : grads.tensors()) sq_norm += g->squaredNorm();
      const double norm = std::sqrt(sq_norm);
      if (norm > config.grad_clip_norm) {
        const double scale = config.grad_clip_norm / norm;
        for (auto& [name, g] : grads.tensors()) *g *= scale;
      }

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      auto ps = state.tensors();
      auto gs = grads.tensors();
      auto ms = m1.tensors();
      auto vs = m2.tensors();
      for (std::size_t t = 0; t < ps.size(); ++t) {
        Eigen::MatrixXd& p = *ps[t].second;
        const Eigen::MatrixXd& g = *gs[t].second;
        Eigen::MatrixXd& m = *ms[t].second;
        Eigen::MatrixXd& v = *vs[t].second;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        p.array() -= lr * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + adam_eps);
      }
      if (!state.all_finite())
        throw std::runtime_error("parameters became non-finite at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(bi));

      epoch_sum.l_tm += parts.l_tm;
      epoch_sum.l_infonce += parts.l_infonce;
      epoch_sum.l_cluster += parts.l_cluster;
      epoch_sum.l_beta += parts.l_beta;
      epoch_sum.total += parts.total;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    const double nb = static_cast<double>(batches.size());
    rec.mean_loss.l_tm = epoch_sum.l_tm / nb;
    rec.mean_loss.l_infonce = epoch_sum.l_infonce / nb;
    rec.mean_loss.l_cluster = epoch_sum.l_cluster / nb;
    rec.mean_loss.l_beta = epoch_sum.l_beta / nb;
    rec.mean_loss.total = epoch_sum.total / nb;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
  }
  return log;
}

namespace {
constexpr char kCkptMagic[4] = {'X', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, /*binary=*/true);
  out.write(kCkptMagic, 4);
  write_u32(out, kCkptVersion);
  const ModelConfig& c = state.config;
  write_u32(out, static_cast<std::uint32_t>(c.topics));
  write_u32(out, static_cast<std::uint32_t>(c.hidden_dim));
  write_u32(out, static_cast<std::uint32_t>(c.d_sem));
  write_u32(out, static_cast<std::uint32_t>(c.embed_dim));
  write_f64(out, c.lambda1);
  write_f64(out, c.lambda2);
  write_f64(out, c.lambda3);
  write_f64(out, c.dropout);
  write_f64(out, c.temperature);
  write_u32(out, static_cast<std::uint32_t>(c.batch_size));
  write_u64(out, c.seed);
  for (int l = 0; l < 2; ++l) {
    write_u64(out, static_cast<std::uint64_t>(state.vocab_size[static_cast<std::size_t>(l)]));
    write_u64(out, state.vocab_hash[static_cast<std::size_t>(l)]);
  }
  const auto named = state.tensors();
  write_u32(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, static_cast<std::uint64_t>(t->rows()));
    write_u64(out, static_cast<std::uint64_t>(t->cols()));
    for (Eigen::Index i = 0; i < t->rows(); ++i)
      for (Eigen::Index j = 0; j < t->cols(); ++j) write_f64(out, (*t)(i, j));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, /*binary=*/true);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw ValidationError(path.string() + ": bad magic, not a checkpoint");
  const std::uint32_t version = read_u32(in, "checkpoint version");
  if (version != kCkptVersion)
    throw ValidationError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));

  ModelConfig c;
  c.topics = static_cast<int>(read_u32(in, "topics"));
  c.hidden_dim = static_cast<int>(read_u32(in, "hidden_dim"));
  c.d_sem = static_cast<int>(read_u32(in, "d_sem"));
  c.embed_dim = static_cast<int>(read_u32(in, "embed_dim"));
  c.lambda1 = read_f64(in, "lambda1");
  c.lambda2 = read_f64(in, "lambda2");
  c.lambda3 = read_f64(in, "lambda3");
  c.dropout = read_f64(in, "dropout");
  c.temperature = read_f64(in, "temperature");
  c.batch_size = static_cast<int>(read_u32(in, "batch_size"));
  c.seed = read_u64(in, "seed");
  std::array<Eigen::Index, 2> vocab_size;
  std::array<std::uint64_t, 2> vocab_hash;
  for (int l = 0; l < 2; ++l) {
    vocab_size[static_cast<std::size_t>(l)] =
        static_cast<Eigen::Index>(read_u64(in, "vocab size"));
    vocab_hash[static_cast<std::size_t>(l)] = read_u64(in, "vocab hash");
  }

  ModelState state = init_model(c, vocab_size, c.embed_dim, vocab_hash);
  auto named = state.tensors();
  const std::uint32_t count = read_u32(in, "tensor count");
  if (count != named.size())
    throw ValidationError(path.string() + ": corrupt payload (tensor count " +
                          std::to_string(count) + ", expected " +
                          std::to_string(named.size()) + ")");
  for (auto& [name, t] : named) {
    const std::uint32_t len = read_u32(in, "tensor name length");
    std::string got(len, '\0');
    in.read(got.data(), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len))
      throw ValidationError(path.string() + ": corrupt payload (truncated name)");
    if (got != name)
      throw ValidationError(path.string() + ": corrupt payload (tensor \"" + got +
                            "\", expected \"" + name + "\")");
    const auto rows = static_cast<Eigen::Index>(read_u64(in, "tensor rows"));
    const auto cols = static_cast<Eigen::Index>(read_u64(in, "tensor cols"));
    if (rows != t->rows() || cols != t->cols())
      throw ValidationError(path.string() + ": corrupt payload (shape of \"" + name +
                            "\")");
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) (*t)(i, j) = read_f64(in, "tensor payload");
  }
  return state;
}

void save_train_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (const auto& rec : log.epochs) {
    json j;
    j["epoch"] = rec.epoch;
    j["l_tm"] = rec.mean_loss.l_tm;
    j["l_infonce"] = rec.mean_loss.l_infonce;
    j["l_cluster"] = rec.mean_loss.l_cluster;
    j["l_beta"] = rec.mean_loss.l_beta;
    j["total"] = rec.mean_loss.total;
    j["lr"] = rec.lr;
    j["seconds"] = rec.seconds;
    out << j.dump() << "\n";
  }
}

}  // namespace xtra
