#include "xtra/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xtra {

namespace {

constexpr double kLogvarMin = -10.0;
constexpr double kLogvarMax = 10.0;

Eigen::MatrixXd softplus_mat(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return softplus(v); });
}

Eigen::MatrixXd sigmoid_mat(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

void softmax_rows_inplace(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  Eigen::VectorXd e = (v.array() - mx).exp();
  return e / e.sum();
}

// d(softmax)/d(input) applied to upstream row gradients, per row
Eigen::MatrixXd softmax_backward_rows(const Eigen::MatrixXd& softmax_out,
                                      const Eigen::MatrixXd& d_out) {
  Eigen::MatrixXd d_in(softmax_out.rows(), softmax_out.cols());
  for (Eigen::Index i = 0; i < softmax_out.rows(); ++i) {
    const double dot = d_out.row(i).dot(softmax_out.row(i));
    d_in.row(i) = (softmax_out.row(i).array() * (d_out.row(i).array() - dot)).matrix();
  }
  return d_in;
}

void add_bias_rows(Eigen::MatrixXd& m, const Eigen::MatrixXd& bias_col) {
  m.rowwise() += bias_col.col(0).transpose();
}

template <class State, class Ptr>
std::vector<std::pair<std::string, Ptr>> list_tensors(State& s) {
  return {
      {"in_w.l1", &s.in_w[0]},   {"in_b.l1", &s.in_b[0]},
      {"in_w.l2", &s.in_w[1]},   {"in_b.l2", &s.in_b[1]},
      {"enc_w", &s.enc_w},       {"enc_b", &s.enc_b},
      {"mu_w", &s.mu_w},         {"mu_b", &s.mu_b},
      {"lv_w", &s.lv_w},         {"lv_b", &s.lv_b},
      {"dec_w.l1", &s.dec_w[0]}, {"dec_w.l2", &s.dec_w[1]},
      {"tp_w", &s.tp_w},         {"tp_b", &s.tp_b},
      {"bp1_w.l1", &s.bp1_w[0]}, {"bp1_b.l1", &s.bp1_b[0]},
      {"bp2_w.l1", &s.bp2_w[0]}, {"bp2_b.l1", &s.bp2_b[0]},
      {"bp1_w.l2", &s.bp1_w[1]}, {"bp1_b.l2", &s.bp1_b[1]},
      {"bp2_w.l2", &s.bp2_w[1]}, {"bp2_b.l2", &s.bp2_b[1]},
  };
}

}  // namespace

void ModelConfig::validate() const {
  if (topics < 1) throw ValidationError("topics must be >= 1");
  if (hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
  if (d_sem < 1) throw ValidationError("d_sem must be >= 1");
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
    throw ValidationError("lambda weights must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ValidationError("dropout must be in [0, 1)");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> ModelState::tensors() {
  return list_tensors<ModelState, Eigen::MatrixXd*>(*this);
}

std::vector<std::pair<std::string, const Eigen::MatrixXd*>> ModelState::tensors() const {
  return list_tensors<const ModelState, const Eigen::MatrixXd*>(*this);
}

ModelState ModelState::zeros_like() const {
  ModelState out = *this;
  out.set_zero();
  return out;
}

void ModelState::set_zero() {
  for (auto& [name, t] : tensors()) t->setZero();
}

bool ModelState::all_finite() const {
  for (const auto& [name, t] : tensors())
    if (!t->allFinite()) return false;
  return true;
}

ModelState init_model(const ModelConfig& config,
                      std::array<Eigen::Index, 2> vocab_sizes, int embed_dim,
                      std::array<std::uint64_t, 2> vocab_hashes) {
  config.validate();
  if (vocab_sizes[0] < 2 || vocab_sizes[1] < 2)
    throw ValidationError("each vocabulary needs at least 2 tokens");
  if (embed_dim < 1) throw ValidationError("embed_dim must be >= 1");

  ModelState s;
  s.config = config;
  s.config.embed_dim = embed_dim;
  s.vocab_size = vocab_sizes;
  s.vocab_hash = vocab_hashes;

  const Eigen::Index h = config.hidden_dim;
  const Eigen::Index k = config.topics;
  const Eigen::Index m = embed_dim;
  const Eigen::Index d = config.d_sem;
  for (int l = 0; l < 2; ++l) {
    const Eigen::Index v = vocab_sizes[static_cast<std::size_t>(l)];
    s.in_w[l].resize(v, h);
    s.in_b[l].setZero(h, 1);
    s.dec_w[l].resize(v, k);
    s.bp1_w[l].resize(v, h);
    s.bp1_b[l].setZero(h, 1);
    s.bp2_w[l].resize(h, d);
    s.bp2_b[l].setZero(d, 1);
  }
  s.enc_w.resize(h, h);
  s.enc_b.setZero(h, 1);
  s.mu_w.resize(h, k);
  s.mu_b.setZero(k, 1);
  s.lv_w.resize(h, k);
  s.lv_b.setZero(k, 1);
  s.tp_w.resize(k, m);
  s.tp_b.setZero(m, 1);

  // Glorot-normal weights; every tensor draws from its own derived stream so
  // the initialization is independent of tensor visiting order.
  auto named = s.tensors();
  for (std::size_t t = 0; t < named.size(); ++t) {
    Eigen::MatrixXd& w = *named[t].second;
    if (named[t].first.find("_b") != std::string::npos) continue;  // biases stay 0
    const double scale = std::sqrt(2.0 / static_cast<double>(w.rows() + w.cols()));
    auto rng = rng_for(config.seed, 0x1217, t);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = scale * std_normal(rng);
  }
  return s;
}

EncoderOutput encode(const ModelState& state, const Eigen::VectorXd& x, Lang lang,
                     bool train_mode, const Eigen::VectorXd& noise,
                     const Eigen::VectorXd& dropout_mask) {
  const int l = lang_index(lang);
  if (x.size() != state.vocab_size[static_cast<std::size_t>(l)])
    throw ValidationError("bow length " + std::to_string(x.size()) +
                          " does not match vocabulary size " +
                          std::to_string(state.vocab_size[static_cast<std::size_t>(l)]));
  const double total = x.sum();
  if (!(total > 0.0)) throw ValidationError("document has no in-vocabulary tokens");
  if (x.minCoeff() < 0.0) throw ValidationError("negative token count");

  const Eigen::VectorXd xn = x / total;
  Eigen::VectorXd a_pre = state.in_w[l].transpose() * xn + state.in_b[l].col(0);
  Eigen::VectorXd a = a_pre.unaryExpr([](double v) { return softplus(v); });
  if (dropout_mask.size() > 0) {
    if (dropout_mask.size() != a.size())
      throw ValidationError("dropout mask length mismatch");
    a = a.cwiseProduct(dropout_mask);
  }
  Eigen::VectorXd h_pre = state.enc_w.transpose() * a + state.enc_b.col(0);
  Eigen::VectorXd h = h_pre.unaryExpr([](double v) { return softplus(v); });

  EncoderOutput out;
  out.mu = state.mu_w.transpose() * h + state.mu_b.col(0);
  Eigen::VectorXd lv_raw = state.lv_w.transpose() * h + state.lv_b.col(0);
  out.logvar = lv_raw.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
  if (train_mode) {
    if (noise.size() != out.mu.size())
      throw ValidationError("train-mode encode needs a noise vector of length K");
    out.z = out.mu + (out.logvar.array() / 2.0).exp().matrix().cwiseProduct(noise);
  } else {
    out.z = out.mu;
  }
  out.theta = softmax_vec(out.z);
  return out;
}

Eigen::VectorXd decode(const ModelState& state, const Eigen::VectorXd& theta,
                       Lang lang) {
  if (theta.size() != state.config.topics)
    throw ValidationError("theta length does not match topic count");
  return softmax_vec(state.dec_w[lang_index(lang)] * theta);
}

Eigen::MatrixXd get_beta(const ModelState& state, Lang lang) {
  const Eigen::MatrixXd& w = state.dec_w[lang_index(lang)];
  Eigen::MatrixXd beta(w.rows(), w.cols());
  for (Eigen::Index k = 0; k < w.cols(); ++k) beta.col(k) = softmax_vec(w.col(k));
  return beta;
}

Eigen::VectorXd project_theta(const ModelState& state, const Eigen::VectorXd& theta) {
  if (theta.size() != state.config.topics)
    throw ValidationError("theta length does not match topic count");
  return state.tp_w.transpose() * theta + state.tp_b.col(0);
}

Eigen::MatrixXd project_beta(const ModelState& state, Lang lang) {
  const int l = lang_index(lang);
  const Eigen::MatrixXd beta = get_beta(state, lang);
  // rows of the projector input are beta columns
  Eigen::MatrixXd hid = beta.transpose() * state.bp1_w[l];
  add_bias_rows(hid, state.bp1_b[l]);
  hid = softplus_mat(hid);
  Eigen::MatrixXd y = hid * state.bp2_w[l];
  add_bias_rows(y, state.bp2_b[l]);
  return y;
}

std::vector<std::vector<std::string>> top_words(const Eigen::MatrixXd& beta,
                                                const Vocabulary& vocab, int top_l) {
  if (beta.rows() != static_cast<Eigen::Index>(vocab.size()))
    throw ValidationError("beta rows do not match vocabulary size");
  if (top_l < 1 || top_l > beta.rows())
    throw ValidationError("top_l must be in [1, |V|]");

  std::vector<std::vector<std::string>> out;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(beta.rows()));
  for (Eigen::Index k = 0; k < beta.cols(); ++k) {
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (beta(a, k) != beta(b, k)) return beta(a, k) > beta(b, k);
      return a < b;
    });
    std::vector<std::string> words;
    words.reserve(static_cast<std::size_t>(top_l));
    for (int i = 0; i < top_l; ++i)
      words.push_back(vocab.tokens[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    out.push_back(std::move(words));
  }
  return out;
}

void forward_batch(const ModelState& state, const BatchInput& batch,
                   ForwardCache& cache) {
  const Eigen::Index b = batch.size();
  const Eigen::Index h = state.config.hidden_dim;
  const Eigen::Index k = state.config.topics;
  if (b == 0) throw ValidationError("empty batch");

  cache.a_all.resize(b, h);
  for (int l = 0; l < 2; ++l) {
    const Eigen::MatrixXd& bows = batch.bows[l];
    cache.xn[l] = bows;
    for (Eigen::Index i = 0; i < bows.rows(); ++i) {
      const double total = bows.row(i).sum();
      if (!(total > 0.0)) throw ValidationError("zero-count document in batch");
      cache.xn[l].row(i) /= total;
    }
    cache.a_pre[l] = cache.xn[l] * state.in_w[l];
    add_bias_rows(cache.a_pre[l], state.in_b[l]);
    cache.a[l] = softplus_mat(cache.a_pre[l]);
    if (batch.dropout_masks[l].size() > 0) {
      if (batch.dropout_masks[l].rows() != cache.a[l].rows() ||
          batch.dropout_masks[l].cols() != cache.a[l].cols())
        throw ValidationError("dropout mask shape mismatch");
      cache.a[l] = cache.a[l].cwiseProduct(batch.dropout_masks[l]);
    }
  }

  {
    std::array<Eigen::Index, 2> row = {0, 0};
    for (Eigen::Index i = 0; i < b; ++i) {
      const int l = lang_index(batch.order[static_cast<std::size_t>(i)].first);
      cache.a_all.row(i) = cache.a[l].row(row[static_cast<std::size_t>(l)]++);
    }
  }

  cache.h_pre = cache.a_all * state.enc_w;
  add_bias_rows(cache.h_pre, state.enc_b);
  cache.h = softplus_mat(cache.h_pre);

  cache.mu = cache.h * state.mu_w;
  add_bias_rows(cache.mu, state.mu_b);
  cache.lv_raw = cache.h * state.lv_w;
  add_bias_rows(cache.lv_raw, state.lv_b);
  cache.lv = cache.lv_raw.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);

  if (batch.noise.size() > 0) {
    if (batch.noise.rows() != b || batch.noise.cols() != k)
      throw ValidationError("noise must be batch x K");
    cache.z = cache.mu + (cache.lv.array() / 2.0).exp().matrix().cwiseProduct(batch.noise);
  } else {
    cache.z = cache.mu;
  }
  cache.theta = cache.z;
  softmax_rows_inplace(cache.theta);

  for (int l = 0; l < 2; ++l) {
    const Eigen::Index nl = batch.bows[l].rows();
    Eigen::MatrixXd theta_block(nl, k);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < b; ++i)
      if (lang_index(batch.order[static_cast<std::size_t>(i)].first) == l)
        theta_block.row(row++) = cache.theta.row(i);
    cache.logits[l] = theta_block * state.dec_w[l].transpose();
    cache.recon[l] = cache.logits[l];
    softmax_rows_inplace(cache.recon[l]);
  }

  cache.u = cache.theta * state.tp_w;
  add_bias_rows(cache.u, state.tp_b);

  for (int l = 0; l < 2; ++l) {
    cache.beta[l] = get_beta(state, static_cast<Lang>(l));
    cache.bp_hidden_pre[l] = cache.beta[l].transpose() * state.bp1_w[l];
    add_bias_rows(cache.bp_hidden_pre[l], state.bp1_b[l]);
    cache.bp_hidden[l] = softplus_mat(cache.bp_hidden_pre[l]);
    cache.y[l] = cache.bp_hidden[l] * state.bp2_w[l];
    add_bias_rows(cache.y[l], state.bp2_b[l]);
  }
}

void BackwardSignals::init(const ModelState& state, const BatchInput& batch,
                           const ForwardCache& cache) {
  d_theta.setZero(batch.size(), state.config.topics);
  d_mu.setZero(batch.size(), state.config.topics);
  d_lv.setZero(batch.size(), state.config.topics);
  for (int l = 0; l < 2; ++l) {
    d_logits[l].setZero(cache.logits[l].rows(), cache.logits[l].cols());
    d_y[l].setZero(cache.y[l].rows(), cache.y[l].cols());
  }
  d_u.setZero(cache.u.rows(), cache.u.cols());
}

void backward_batch(const ModelState& state, const BatchInput& batch,
                    const ForwardCache& cache, const BackwardSignals& signals,
                    ModelState& grads) {
  const Eigen::Index b = batch.size();
  const Eigen::Index k = state.config.topics;

  // beta projection path
  for (int l = 0; l < 2; ++l) {
    if (signals.d_y[l].size() == 0) continue;
    grads.bp2_w[l] += cache.bp_hidden[l].transpose() * signals.d_y[l];
    grads.bp2_b[l] += signals.d_y[l].colwise().sum().transpose();
    Eigen::MatrixXd d_hid = signals.d_y[l] * state.bp2_w[l].transpose();
    d_hid = d_hid.cwiseProduct(sigmoid_mat(cache.bp_hidden_pre[l]));
    grads.bp1_w[l] += cache.beta[l] * d_hid;
    grads.bp1_b[l] += d_hid.colwise().sum().transpose();
    // rows of the projector input are beta columns
    Eigen::MatrixXd d_beta = (d_hid * state.bp1_w[l].transpose()).transpose();
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      const Eigen::VectorXd bcol = cache.beta[l].col(kk);
      const double dot = d_beta.col(kk).dot(bcol);
      grads.dec_w[l].col(kk) += (bcol.array() * (d_beta.col(kk).array() - dot)).matrix();
    }
  }

  // theta projection path
  grads.tp_w += cache.theta.transpose() * signals.d_u;
  grads.tp_b += signals.d_u.colwise().sum().transpose();
  Eigen::MatrixXd d_theta = signals.d_theta + signals.d_u * state.tp_w.transpose();

  // decoder path: scatter per-language logit gradients back to batch order
  for (int l = 0; l < 2; ++l) {
    const Eigen::Index nl = batch.bows[l].rows();
    if (nl == 0) continue;
    Eigen::MatrixXd theta_block(nl, k);
    std::vector<Eigen::Index> batch_row(static_cast<std::size_t>(nl));
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < b; ++i)
      if (lang_index(batch.order[static_cast<std::size_t>(i)].first) == l) {
        theta_block.row(row) = cache.theta.row(i);
        batch_row[static_cast<std::size_t>(row)] = i;
        ++row;
      }
    grads.dec_w[l] += signals.d_logits[l].transpose() * theta_block;
    const Eigen::MatrixXd d_theta_block = signals.d_logits[l] * state.dec_w[l];
    for (Eigen::Index r = 0; r < nl; ++r)
      d_theta.row(batch_row[static_cast<std::size_t>(r)]) += d_theta_block.row(r);
  }

  // theta = softmax(z)
  const Eigen::MatrixXd d_z = softmax_backward_rows(cache.theta, d_theta);

  Eigen::MatrixXd d_mu = signals.d_mu + d_z;
  Eigen::MatrixXd d_lv = signals.d_lv;
  if (batch.noise.size() > 0)
    d_lv += d_z.cwiseProduct(batch.noise)
                .cwiseProduct((cache.lv.array() / 2.0).exp().matrix()) *
            0.5;
  // clamp gradient: zero outside the open interval
  Eigen::MatrixXd d_lv_raw =
      d_lv.cwiseProduct((cache.lv_raw.array() > kLogvarMin &&
                         cache.lv_raw.array() < kLogvarMax)
                            .cast<double>()
                            .matrix());

  grads.mu_w += cache.h.transpose() * d_mu;
  grads.mu_b += d_mu.colwise().sum().transpose();
  grads.lv_w += cache.h.transpose() * d_lv_raw;
  grads.lv_b += d_lv_raw.colwise().sum().transpose();

  Eigen::MatrixXd d_h = d_mu * state.mu_w.transpose() + d_lv_raw * state.lv_w.transpose();
  Eigen::MatrixXd d_h_pre = d_h.cwiseProduct(sigmoid_mat(cache.h_pre));
  grads.enc_w += cache.a_all.transpose() * d_h_pre;
  grads.enc_b += d_h_pre.colwise().sum().transpose();
  const Eigen::MatrixXd d_a_all = d_h_pre * state.enc_w.transpose();

  std::array<Eigen::MatrixXd, 2> d_a;
  for (int l = 0; l < 2; ++l) d_a[l].setZero(batch.bows[l].rows(), cache.a_all.cols());
  {
    std::array<Eigen::Index, 2> row = {0, 0};
    for (Eigen::Index i = 0; i < b; ++i) {
      const int l = lang_index(batch.order[static_cast<std::size_t>(i)].first);
      d_a[l].row(row[static_cast<std::size_t>(l)]++) = d_a_all.row(i);
    }
  }
  for (int l = 0; l < 2; ++l) {
    if (batch.bows[l].rows() == 0) continue;
    if (batch.dropout_masks[l].size() > 0)
      d_a[l] = d_a[l].cwiseProduct(batch.dropout_masks[l]);
    const Eigen::MatrixXd d_a_pre = d_a[l].cwiseProduct(sigmoid_mat(cache.a_pre[l]));
    grads.in_w[l] += cache.xn[l].transpose() * d_a_pre;
    grads.in_b[l] += d_a_pre.colwise().sum().transpose();
  }
}

}  // namespace xtra
