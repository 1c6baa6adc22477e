#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "xtra/common.hpp"
#include "xtra/corpus.hpp"

namespace xtra {

struct ModelConfig {
  int topics = 20;     // K
  int hidden_dim = 200;
  int d_sem = 128;
  int embed_dim = 0;   // M, set from the embedding table
  double lambda1 = 80.0;
  double lambda2 = 5.0;
  double lambda3 = 7.0;
  double dropout = 0.2;
  double temperature = 1.0;  // divides similarities inside the contrastive exps
  int batch_size = 64;
  std::uint64_t seed = 1;

  void validate() const;
};

// All trainable tensors. Biases are column matrices so that every parameter
// is a MatrixXd and can be visited uniformly (Adam, clipping, checkpoints,
// finite-difference probes).
struct ModelState {
  ModelConfig config;
  std::array<Eigen::Index, 2> vocab_size = {0, 0};
  std::array<std::uint64_t, 2> vocab_hash = {0, 0};

  // language-specific input MLPs: |V_l| -> hidden
  std::array<Eigen::MatrixXd, 2> in_w, in_b;
  // shared encoder trunk and heads
  Eigen::MatrixXd enc_w, enc_b;  // hidden -> hidden
  Eigen::MatrixXd mu_w, mu_b;    // hidden -> K
  Eigen::MatrixXd lv_w, lv_b;    // hidden -> K
  // decoder weights; column k softmax-normalizes to beta_k
  std::array<Eigen::MatrixXd, 2> dec_w;  // |V_l| x K
  // theta projection into embedding space: K -> M
  Eigen::MatrixXd tp_w, tp_b;
  // beta projections into the semantic space: |V_l| -> hidden -> D_sem
  std::array<Eigen::MatrixXd, 2> bp1_w, bp1_b;
  std::array<Eigen::MatrixXd, 2> bp2_w, bp2_b;

  std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensors();
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors() const;

  ModelState zeros_like() const;
  void set_zero();
  bool all_finite() const;
};

struct EncoderOutput {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
  Eigen::VectorXd z;
  Eigen::VectorXd theta;
};

ModelState init_model(const ModelConfig& config,
                      std::array<Eigen::Index, 2> vocab_sizes,
                      int embed_dim,
                      std::array<std::uint64_t, 2> vocab_hashes = {0, 0});

// normalize(x) -> input MLP -> softplus -> shared trunk -> (mu, logvar);
// z = mu + exp(logvar/2) .* noise in train mode, z = mu otherwise.
// dropout_mask, when non-empty, multiplies the input-MLP activations
// (inverted-dropout scaling already applied by the caller).
EncoderOutput encode(const ModelState& state, const Eigen::VectorXd& x,
                     Lang lang, bool train_mode,
                     const Eigen::VectorXd& noise = Eigen::VectorXd(),
                     const Eigen::VectorXd& dropout_mask = Eigen::VectorXd());

// softmax(W^(l) theta): strictly positive, sums to one.
Eigen::VectorXd decode(const ModelState& state, const Eigen::VectorXd& theta,
                       Lang lang);

// |V_l| x K, each column a distribution over the vocabulary.
Eigen::MatrixXd get_beta(const ModelState& state, Lang lang);

Eigen::VectorXd project_theta(const ModelState& state,
                              const Eigen::VectorXd& theta);

// K x D_sem; row k is the projected semantic profile of beta_k.
Eigen::MatrixXd project_beta(const ModelState& state, Lang lang);

// Per-topic top-L tokens by beta weight, ties broken by vocabulary index.
std::vector<std::vector<std::string>> top_words(const Eigen::MatrixXd& beta,
                                                const Vocabulary& vocab,
                                                int top_l = 15);

// ---- batch forward/backward used by the trainer and the gradient checks ----

// One mini-batch in evaluation order. Language-specific tensors are kept as
// per-language blocks; `order[i] = {lang, row within that language block}`.
struct BatchInput {
  std::vector<std::pair<Lang, int>> order;
  std::array<Eigen::MatrixXd, 2> bows;        // rows of raw counts
  Eigen::MatrixXd embeddings;                 // B x M, batch order
  std::vector<int> cluster_ids;               // batch order
  Eigen::MatrixXd noise;                      // B x K, batch order
  std::array<Eigen::MatrixXd, 2> dropout_masks;  // per-language blocks, may be empty

  Eigen::Index size() const { return static_cast<Eigen::Index>(order.size()); }
};

struct ForwardCache {
  std::array<Eigen::MatrixXd, 2> xn;        // normalized bows
  std::array<Eigen::MatrixXd, 2> a_pre, a;  // input MLP pre/post activation
  Eigen::MatrixXd a_all;                    // batch order
  Eigen::MatrixXd h_pre, h;
  Eigen::MatrixXd mu, lv_raw, lv;
  Eigen::MatrixXd z, theta;                             // batch order
  std::array<Eigen::MatrixXd, 2> logits, recon;         // language blocks
  Eigen::MatrixXd u;                                    // theta projections, B x M
  std::array<Eigen::MatrixXd, 2> beta;                  // |V| x K
  std::array<Eigen::MatrixXd, 2> bp_hidden_pre, bp_hidden;  // K x hidden
  std::array<Eigen::MatrixXd, 2> y;                     // K x D_sem
};

// Full differentiable forward pass for one batch (train_mode semantics).
void forward_batch(const ModelState& state, const BatchInput& batch,
                   ForwardCache& cache);

// Gradients of the loss w.r.t. the cache quantities the objectives touch.
struct BackwardSignals {
  Eigen::MatrixXd d_theta;                 // batch order, B x K
  Eigen::MatrixXd d_mu, d_lv;              // batch order, B x K
  std::array<Eigen::MatrixXd, 2> d_logits; // language blocks
  Eigen::MatrixXd d_u;                     // B x M
  std::array<Eigen::MatrixXd, 2> d_y;      // K x D_sem

  void init(const ModelState& state, const BatchInput& batch,
            const ForwardCache& cache);
};

// Accumulates parameter gradients into `grads` (same shape as the state).
void backward_batch(const ModelState& state, const BatchInput& batch,
                    const ForwardCache& cache, const BackwardSignals& signals,
                    ModelState& grads);

}  // namespace xtra
