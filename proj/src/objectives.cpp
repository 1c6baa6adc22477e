#include "xtra/objectives.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace xtra {

namespace {

double logsumexp_row(const Eigen::RowVectorXd& row) {
  const double mx = row.maxCoeff();
  return mx + std::log((row.array() - mx).exp().sum());
}

// Normalizes rows; throws `what` naming the row on a zero norm.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m, const char* what,
                               Eigen::VectorXd* norms_out = nullptr) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  if (norms_out) norms_out->resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 1e-12))
      throw ValidationError(std::string(what) + " row " + std::to_string(i) +
                            " has zero norm");
    out.row(i) = m.row(i) / n;
    if (norms_out) (*norms_out)[i] = n;
  }
  return out;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw ValidationError(std::string("non-finite ") + term + " loss");
}

}  // namespace

double loss_tm(const BatchView& batch, const std::vector<Eigen::VectorXd>& recon,
               const PriorParams& prior) {
  std::vector<Eigen::VectorXd> unused_logits;
  Eigen::MatrixXd unused_mu, unused_lv;
  return loss_tm_grad(batch, recon, prior, unused_logits, unused_mu, unused_lv);
}

double loss_tm_grad(const BatchView& batch,
                    const std::vector<Eigen::VectorXd>& recon,
                    const PriorParams& prior,
                    std::vector<Eigen::VectorXd>& d_logits,
                    Eigen::MatrixXd& d_mu, Eigen::MatrixXd& d_lv) {
  const Eigen::Index b = batch.size();
  if (b == 0) throw ValidationError("empty batch");
  if (recon.size() != static_cast<std::size_t>(b))
    throw ValidationError("recon count does not match batch size");
  const Eigen::Index k = batch.mu.cols();
  if (prior.dim() != k)
    throw ValidationError("prior dimension " + std::to_string(prior.dim()) +
                          " does not match K=" + std::to_string(k));

  const double inv_b = 1.0 / static_cast<double>(b);
  d_logits.resize(static_cast<std::size_t>(b));
  d_mu.setZero(b, k);
  d_lv.setZero(b, k);

  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::VectorXd& x = batch.bows[static_cast<std::size_t>(i)];
    const Eigen::VectorXd& r = recon[static_cast<std::size_t>(i)];
    if (x.size() != r.size())
      throw ValidationError("bow/recon length mismatch at doc " + std::to_string(i));
    if (!(r.minCoeff() > 0.0))
      throw ValidationError("non-positive reconstruction probability at doc " +
                            std::to_string(i));
    const double rec = -x.dot(r.array().log().matrix());

    // -x^T log softmax(logits) differentiates to (sum x) * softmax - x
    d_logits[static_cast<std::size_t>(i)] = inv_b * (x.sum() * r - x);

    double kl = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double mu = batch.mu(i, j);
      const double var = std::exp(batch.logvar(i, j));
      const double pm = prior.mu[j];
      const double pv = prior.var[j];
      kl += 0.5 * (var / pv + (pm - mu) * (pm - mu) / pv - 1.0 + std::log(pv) -
                   batch.logvar(i, j));
      d_mu(i, j) = inv_b * (mu - pm) / pv;
      d_lv(i, j) = inv_b * 0.5 * (var / pv - 1.0);
    }
    total += rec + kl;
  }
  total *= inv_b;
  check_finite(total, "topic-model");
  return total;
}

namespace {

// Shared core: anchors are embedding rows, candidates are all projections.
double infonce_core(const Eigen::MatrixXd& u, const Eigen::MatrixXd& emb,
                    double temperature, Eigen::MatrixXd* d_u) {
  const Eigen::Index b = u.rows();
  if (b == 0) throw ValidationError("empty batch");
  if (emb.rows() != b)
    throw ValidationError("embeddings do not match batch size");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");

  Eigen::VectorXd u_norm;
  const Eigen::MatrixXd u_hat = normalize_rows(u, "theta projection", &u_norm);
  const Eigen::MatrixXd e_hat = normalize_rows(emb, "embedding");

  const Eigen::MatrixXd cos = e_hat * u_hat.transpose();  // cos(i, j) = e_i . u_j
  const Eigen::MatrixXd s = cos / temperature;

  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  Eigen::MatrixXd p(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double lse = logsumexp_row(s.row(i));
    total += inv_b * (lse - s(i, i));
    p.row(i) = (s.row(i).array() - lse).exp();
  }
  check_finite(total, "InfoNCE");
  if (!d_u) return total;

  Eigen::MatrixXd g = inv_b * p;
  g.diagonal().array() -= inv_b;
  const Eigen::MatrixXd num = g.transpose() * e_hat;                 // B x M
  const Eigen::VectorXd w = g.cwiseProduct(cos).colwise().sum();     // per j
  d_u->resize(b, u.cols());
  for (Eigen::Index j = 0; j < b; ++j)
    d_u->row(j) = (num.row(j) - w[j] * u_hat.row(j)) / (temperature * u_norm[j]);
  return total;
}

}  // namespace

double loss_infonce(const BatchView& batch, const ModelState& state) {
  Eigen::MatrixXd u = batch.theta * state.tp_w;
  u.rowwise() += state.tp_b.col(0).transpose();
  return infonce_core(u, batch.embeddings, state.config.temperature, nullptr);
}

double loss_infonce_grad(const Eigen::MatrixXd& u, const Eigen::MatrixXd& embeddings,
                         double temperature, Eigen::MatrixXd& d_u) {
  return infonce_core(u, embeddings, temperature, &d_u);
}

namespace {

double cluster_core(const Eigen::MatrixXd& theta, const std::vector<int>& cluster_ids,
                    double temperature, Eigen::MatrixXd* d_theta) {
  const Eigen::Index b = theta.rows();
  if (b == 0) throw ValidationError("empty batch");
  if (cluster_ids.size() != static_cast<std::size_t>(b))
    throw ValidationError("cluster ids do not match batch size");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
  if (d_theta) d_theta->setZero(b, theta.cols());
  if (b == 1) return 0.0;  // no candidate pairs

  Eigen::VectorXd t_norm;
  const Eigen::MatrixXd t_hat = normalize_rows(theta, "theta", &t_norm);
  const Eigen::MatrixXd cos = t_hat * t_hat.transpose();
  const Eigen::MatrixXd s = cos / temperature;

  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::Index positives = 0;
    for (Eigen::Index j = 0; j < b; ++j)
      if (j != i && cluster_ids[static_cast<std::size_t>(j)] ==
                        cluster_ids[static_cast<std::size_t>(i)])
        ++positives;
    if (positives == 0) continue;

    // log-sum-exp over candidates j != i
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b; ++j)
      if (j != i) mx = std::max(mx, s(i, j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < b; ++j)
      if (j != i) z += std::exp(s(i, j) - mx);
    const double lse = mx + std::log(z);

    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      const bool positive = cluster_ids[static_cast<std::size_t>(j)] ==
                            cluster_ids[static_cast<std::size_t>(i)];
      if (positive) total += inv_b * (lse - s(i, j));
      g(i, j) = inv_b * (static_cast<double>(positives) * std::exp(s(i, j) - lse) -
                         (positive ? 1.0 : 0.0));
    }
  }
  check_finite(total, "cluster");
  if (!d_theta) return total;

  // cosine is symmetric, so fold both pair roles into one weight matrix
  const Eigen::MatrixXd w = g + g.transpose();
  const Eigen::MatrixXd num = w * t_hat;
  const Eigen::VectorXd diag = w.cwiseProduct(cos).rowwise().sum();
  for (Eigen::Index i = 0; i < b; ++i)
    d_theta->row(i) = (num.row(i) - diag[i] * t_hat.row(i)) / (temperature * t_norm[i]);
  return total;
}

}  // namespace

double loss_cluster(const BatchView& batch, double temperature) {
  return cluster_core(batch.theta, batch.cluster_ids, temperature, nullptr);
}

double loss_cluster_grad(const Eigen::MatrixXd& theta,
                         const std::vector<int>& cluster_ids, double temperature,
                         Eigen::MatrixXd& d_theta) {
  return cluster_core(theta, cluster_ids, temperature, &d_theta);
}

namespace {

double beta_core(const Eigen::MatrixXd& y1, const Eigen::MatrixXd& y2,
                 double temperature, Eigen::MatrixXd* d_y1, Eigen::MatrixXd* d_y2) {
  if (y1.rows() != y2.rows() || y1.cols() != y2.cols())
    throw ValidationError("projected topic matrices differ in shape");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
  const Eigen::Index k = y1.rows();
  if (k == 0) throw ValidationError("no topics");

  Eigen::VectorXd n1, n2;
  const Eigen::MatrixXd y1_hat = normalize_rows(y1, "projected topic (language 1)", &n1);
  const Eigen::MatrixXd y2_hat = normalize_rows(y2, "projected topic (language 2)", &n2);
  const Eigen::MatrixXd cos = y1_hat * y2_hat.transpose();
  const Eigen::MatrixXd s = cos / temperature;

  const double inv_k = 1.0 / static_cast<double>(k);
  double fwd = 0.0, bwd = 0.0;
  Eigen::MatrixXd g1(k, k), g2(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double lse1 = logsumexp_row(s.row(i));
    fwd += inv_k * (lse1 - s(i, i));
    g1.row(i) = inv_k * (s.row(i).array() - lse1).exp();
    g1(i, i) -= inv_k;

    const double lse2 = logsumexp_row(s.col(i).transpose());
    bwd += inv_k * (lse2 - s(i, i));
    g2.col(i) = inv_k * (s.col(i).array() - lse2).exp();
    g2(i, i) -= inv_k;
  }
  const double total = 0.5 * (fwd + bwd);
  check_finite(total, "topic-alignment");
  if (!d_y1) return total;

  const Eigen::MatrixXd w = 0.5 * (g1 + g2);  // weight on cos(i, j)
  const Eigen::MatrixXd num1 = w * y2_hat;
  const Eigen::VectorXd diag1 = w.cwiseProduct(cos).rowwise().sum();
  const Eigen::MatrixXd num2 = w.transpose() * y1_hat;
  const Eigen::VectorXd diag2 = w.cwiseProduct(cos).colwise().sum();
  d_y1->resize(k, y1.cols());
  d_y2->resize(k, y2.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    d_y1->row(i) = (num1.row(i) - diag1[i] * y1_hat.row(i)) / (temperature * n1[i]);
    d_y2->row(i) = (num2.row(i) - diag2[i] * y2_hat.row(i)) / (temperature * n2[i]);
  }
  return total;
}

}  // namespace

double loss_beta(const Eigen::MatrixXd& y1, const Eigen::MatrixXd& y2,
                 double temperature) {
  return beta_core(y1, y2, temperature, nullptr, nullptr);
}

double loss_beta_grad(const Eigen::MatrixXd& y1, const Eigen::MatrixXd& y2,
                      double temperature, Eigen::MatrixXd& d_y1,
                      Eigen::MatrixXd& d_y2) {
  return beta_core(y1, y2, temperature, &d_y1, &d_y2);
}

LossBreakdown total_loss(double l_tm, double l_infonce, double l_cluster,
                         double l_beta, double lambda1, double lambda2,
                         double lambda3) {
  check_finite(l_tm, "topic-model");
  check_finite(l_infonce, "InfoNCE");
  check_finite(l_cluster, "cluster");
  check_finite(l_beta, "topic-alignment");
  LossBreakdown parts;
  parts.l_tm = l_tm;
  parts.l_infonce = l_infonce;
  parts.l_cluster = l_cluster;
  parts.l_beta = l_beta;
  parts.total = l_tm + lambda1 * l_infonce + lambda2 * l_cluster + lambda3 * l_beta;
  check_finite(parts.total, "total");
  return parts;
}

LossBreakdown evaluate_batch(const ModelState& state, const BatchInput& batch,
                             const PriorParams& prior, const TermWeights& weights,
                             ModelState* grads) {
  ForwardCache cache;
  forward_batch(state, batch, cache);
  const Eigen::Index b = batch.size();
  const double tau = state.config.temperature;

  // flatten the language blocks into batch order for the reconstruction term
  BatchView view;
  view.theta = cache.theta;
  view.embeddings = batch.embeddings;
  view.cluster_ids = batch.cluster_ids;
  view.mu = cache.mu;
  view.logvar = cache.lv;
  view.bows.resize(static_cast<std::size_t>(b));
  view.langs.resize(static_cast<std::size_t>(b));
  std::vector<Eigen::VectorXd> recon(static_cast<std::size_t>(b));
  std::vector<Eigen::Index> block_row(static_cast<std::size_t>(b));
  {
    std::array<Eigen::Index, 2> row = {0, 0};
    for (Eigen::Index i = 0; i < b; ++i) {
      const Lang lang = batch.order[static_cast<std::size_t>(i)].first;
      const int l = lang_index(lang);
      view.langs[static_cast<std::size_t>(i)] = lang;
      view.bows[static_cast<std::size_t>(i)] =
          batch.bows[l].row(row[static_cast<std::size_t>(l)]).transpose();
      recon[static_cast<std::size_t>(i)] =
          cache.recon[l].row(row[static_cast<std::size_t>(l)]).transpose();
      block_row[static_cast<std::size_t>(i)] = row[static_cast<std::size_t>(l)]++;
    }
  }

  std::vector<Eigen::VectorXd> d_logits_doc;
  Eigen::MatrixXd d_mu, d_lv, d_u, d_theta, d_y1, d_y2;
  const double l_tm = loss_tm_grad(view, recon, prior, d_logits_doc, d_mu, d_lv);
  const double l_inf = loss_infonce_grad(cache.u, batch.embeddings, tau, d_u);
  const double l_clu = loss_cluster_grad(cache.theta, batch.cluster_ids, tau, d_theta);
  const double l_beta = loss_beta_grad(cache.y[0], cache.y[1], tau, d_y1, d_y2);

  LossBreakdown parts;
  parts.l_tm = l_tm;
  parts.l_infonce = l_inf;
  parts.l_cluster = l_clu;
  parts.l_beta = l_beta;
  parts.total = weights.tm * l_tm + weights.infonce * l_inf +
                weights.cluster * l_clu + weights.beta * l_beta;
  check_finite(parts.total, "total");
  if (!grads) return parts;

  BackwardSignals signals;
  signals.init(state, batch, cache);
  signals.d_mu = weights.tm * d_mu;
  signals.d_lv = weights.tm * d_lv;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int l = lang_index(batch.order[static_cast<std::size_t>(i)].first);
    signals.d_logits[l].row(block_row[static_cast<std::size_t>(i)]) =
        weights.tm * d_logits_doc[static_cast<std::size_t>(i)].transpose();
  }
  signals.d_u = weights.infonce * d_u;
  signals.d_theta = weights.cluster * d_theta;
  signals.d_y[0] = weights.beta * d_y1;
  signals.d_y[1] = weights.beta * d_y2;
  backward_batch(state, batch, cache, signals, *grads);
  return parts;
}

}  // namespace xtra
