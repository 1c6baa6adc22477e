#pragma once

#include <vector>

#include <Eigen/Core>

#include "xtra/clustering.hpp"
#include "xtra/common.hpp"
#include "xtra/model.hpp"

namespace xtra {

// One mini-batch as the loss terms see it: per-document rows plus the
// batch-level tensors. All sequences share the batch length.
struct BatchView {
  std::vector<Eigen::VectorXd> bows;
  std::vector<Lang> langs;
  Eigen::MatrixXd theta;       // B x K
  Eigen::MatrixXd embeddings;  // B x M
  std::vector<int> cluster_ids;
  Eigen::MatrixXd mu, logvar;  // B x K

  Eigen::Index size() const { return theta.rows(); }
};

struct LossBreakdown {
  double l_tm = 0.0;
  double l_infonce = 0.0;
  double l_cluster = 0.0;
  double l_beta = 0.0;
  double total = 0.0;
};

// Mean over the batch of  -x^T log(recon) + KL(N(mu, sigma^2) || prior).
double loss_tm(const BatchView& batch,
               const std::vector<Eigen::VectorXd>& recon,
               const PriorParams& prior);

// In-batch InfoNCE between theta projections and document embeddings;
// the denominator for document i runs over every theta in the batch,
// including theta_i itself.
double loss_infonce(const BatchView& batch, const ModelState& state);

// Multi-positive InfoNCE over cosine similarities of thetas. For document i
// the candidate set excludes i; positives are the in-batch documents sharing
// its cluster. Documents without positives contribute zero. Normalized by
// the batch size.
double loss_cluster(const BatchView& batch, double temperature = 1.0);

// Symmetric bidirectional InfoNCE over topic indices of the two projected
// topic matrices (K x D_sem each).
double loss_beta(const Eigen::MatrixXd& y1, const Eigen::MatrixXd& y2,
                 double temperature = 1.0);

LossBreakdown total_loss(double l_tm, double l_infonce, double l_cluster,
                         double l_beta, double lambda1, double lambda2,
                         double lambda3);

// ---- gradient versions (same values, plus d/d-input signals) ----

double loss_tm_grad(const BatchView& batch,
                    const std::vector<Eigen::VectorXd>& recon,
                    const PriorParams& prior,
                    std::vector<Eigen::VectorXd>& d_logits,
                    Eigen::MatrixXd& d_mu, Eigen::MatrixXd& d_lv);

// d_u: gradient w.r.t. the theta projections (B x M rows of phi(theta)).
double loss_infonce_grad(const Eigen::MatrixXd& u,
                         const Eigen::MatrixXd& embeddings, double temperature,
                         Eigen::MatrixXd& d_u);

double loss_cluster_grad(const Eigen::MatrixXd& theta,
                         const std::vector<int>& cluster_ids,
                         double temperature, Eigen::MatrixXd& d_theta);

double loss_beta_grad(const Eigen::MatrixXd& y1, const Eigen::MatrixXd& y2,
                      double temperature, Eigen::MatrixXd& d_y1,
                      Eigen::MatrixXd& d_y2);

// Term weights for a fused batch evaluation. Training uses
// {1, lambda1, lambda2, lambda3}; the gradient checks select single terms.
struct TermWeights {
  double tm = 1.0;
  double infonce = 0.0;
  double cluster = 0.0;
  double beta = 0.0;
};

// Runs the full differentiable pipeline on one batch: forward, all four
// losses, and (when grads != nullptr) the weighted parameter gradients.
// Pure function of (state, batch) given the noise/masks inside `batch`.
LossBreakdown evaluate_batch(const ModelState& state, const BatchInput& batch,
                             const PriorParams& prior, const TermWeights& weights,
                             ModelState* grads);

}  // namespace xtra
