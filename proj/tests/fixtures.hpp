#pragma once

// Random small-model instances and a central finite-difference probe over
// every parameter, shared by the unit tests and the acceptance checks.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "xtra/clustering.hpp"
#include "xtra/model.hpp"
#include "xtra/objectives.hpp"

namespace fixtures {

struct Instance {
  xtra::ModelState state;
  xtra::BatchInput batch;
  xtra::PriorParams prior;
};

inline Instance random_instance(std::mt19937_64& rng, bool with_dropout) {
  using namespace xtra;
  Instance inst;

  ModelConfig cfg;
  cfg.topics = 2 + static_cast<int>(rng() % 3);       // K in [2, 4]
  cfg.hidden_dim = 3 + static_cast<int>(rng() % 4);
  cfg.d_sem = 2 + static_cast<int>(rng() % 4);
  cfg.temperature = (rng() % 2 == 0) ? 1.0 : 0.7;
  cfg.dropout = with_dropout ? 0.3 : 0.0;
  cfg.seed = rng();

  const Eigen::Index v1 = 4 + static_cast<Eigen::Index>(rng() % 5);
  const Eigen::Index v2 = 4 + static_cast<Eigen::Index>(rng() % 5);
  const int m = 2 + static_cast<int>(rng() % 4);
  inst.state = init_model(cfg, {v1, v2}, m);

  const int n1 = 1 + static_cast<int>(rng() % 3);
  const int n2 = 1 + static_cast<int>(rng() % 3);
  const int b = n1 + n2;

  BatchInput& batch = inst.batch;
  for (int i = 0; i < n1; ++i) batch.order.push_back({Lang::L1, i});
  for (int i = 0; i < n2; ++i) batch.order.push_back({Lang::L2, i});
  shuffle_det(batch.order, rng);
  {  // rebuild within-language row numbers after the shuffle
    int r1 = 0, r2 = 0;
    for (auto& [lang, row] : batch.order)
      row = (lang == Lang::L1) ? r1++ : r2++;
  }

  auto random_bows = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m_(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j)
        m_(i, j) = static_cast<double>(rng() % 4);
      m_(i, static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(cols))) += 1.0;
    }
    return m_;
  };
  batch.bows[0] = random_bows(n1, v1);
  batch.bows[1] = random_bows(n2, v2);

  batch.embeddings.resize(b, m);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < m; ++j) batch.embeddings(i, j) = std_normal(rng);

  batch.cluster_ids.resize(static_cast<std::size_t>(b));
  for (auto& c : batch.cluster_ids) c = static_cast<int>(rng() % 2);

  batch.noise.resize(b, cfg.topics);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < cfg.topics; ++j) batch.noise(i, j) = std_normal(rng);

  if (with_dropout) {
    const double keep_scale = 1.0 / (1.0 - cfg.dropout);
    for (int l = 0; l < 2; ++l) {
      Eigen::MatrixXd& mask = batch.dropout_masks[l];
      mask.resize(batch.bows[l].rows(), cfg.hidden_dim);
      for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
          mask(i, j) = uniform01(rng) < cfg.dropout ? 0.0 : keep_scale;
    }
  }

  std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.topics));
  for (auto& c : counts) c = static_cast<std::int64_t>(rng() % 50);
  inst.prior = xtra::compute_prior(counts, 1.0);
  return inst;
}

struct GradCheckResult {
  double max_err = 0.0;
  std::string worst_tensor;
  long parameters = 0;
};

// Central finite differences of the weighted total against the analytic
// gradients, probing every parameter entry.
inline GradCheckResult check_gradients(const Instance& inst,
                                       const xtra::TermWeights& weights,
                                       double step) {
  using namespace xtra;
  ModelState grads = inst.state.zeros_like();
  evaluate_batch(inst.state, inst.batch, inst.prior, weights, &grads);

  ModelState probe = inst.state;
  auto named = probe.tensors();
  auto grad_named = grads.tensors();

  GradCheckResult result;
  for (std::size_t t = 0; t < named.size(); ++t) {
    Eigen::MatrixXd& w = *named[t].second;
    const Eigen::MatrixXd& g = *grad_named[t].second;
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double saved = w(i, j);
        w(i, j) = saved + step;
        const double up =
            evaluate_batch(probe, inst.batch, inst.prior, weights, nullptr).total;
        w(i, j) = saved - step;
        const double down =
            evaluate_batch(probe, inst.batch, inst.prior, weights, nullptr).total;
        w(i, j) = saved;

        const double numeric = (up - down) / (2.0 * step);
        const double analytic = g(i, j);
        const double err = std::abs(analytic - numeric) /
                           std::max(std::abs(analytic) + std::abs(numeric), 1e-2);
        ++result.parameters;
        if (err > result.max_err) {
          result.max_err = err;
          result.worst_tensor = named[t].first;
        }
      }
    }
  }
  return result;
}

}  // namespace fixtures
