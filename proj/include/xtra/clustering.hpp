#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "xtra/common.hpp"
#include "xtra/corpus.hpp"

namespace xtra {

struct ClusterModel {
  int num_clusters = 0;  // T
  int svd_rank = 0;
  Lang pivot_lang = Lang::L1;
  Eigen::MatrixXd centroids;  // T x r
  std::unordered_map<std::string, int> assignment;
  std::vector<std::int64_t> counts;  // n_k over all assigned documents

  std::int64_t total_assigned() const;
};

struct PriorParams {
  double epsilon = 1.0;
  Eigen::VectorXd alpha;  // n_k + epsilon
  Eigen::VectorXd mu;     // length T, sums to zero
  Eigen::VectorXd var;    // length T, strictly positive

  int dim() const { return static_cast<int>(mu.size()); }
};

struct ReducedEmbeddings {
  std::vector<std::string> ids;  // deterministic row order
  Eigen::MatrixXd vectors;       // num_docs x r, rows unit-norm
  std::unordered_map<std::string, int> row_of;

  const Eigen::VectorXd row(const std::string& id) const;
};

// Rank-r truncated SVD of the mean-centered embedding matrix, rows then
// L2-normalized. Sign convention: the largest-magnitude entry of each right
// singular vector is forced positive, so the output is reproducible.
ReducedEmbeddings reduce_and_normalize(const EmbeddingTable& table, int rank,
                                       std::uint64_t seed);

// Lloyd iterations with k-means++ seeding over the pivot-language rows only.
// Empty clusters are re-seeded from the farthest point.
ClusterModel fit_pivot_clusters(const ReducedEmbeddings& reduced,
                                const std::vector<std::string>& pivot_ids,
                                int num_clusters, std::uint64_t seed,
                                int max_iter = 300);

// Assigns every non-pivot document to argmax cosine(centroid); ties break
// toward the lowest cluster index. Updates counts over both languages.
void assign_nonpivot(const ReducedEmbeddings& reduced,
                     const std::vector<std::string>& nonpivot_ids,
                     ClusterModel& model);

// Logistic-normal approximation of a Dirichlet(alpha) with alpha_k = n_k + eps:
//   mu_k  = log a_k - mean_j log a_j
//   var_k = (1/a_k)(1 - 2/T) + (1/T^2) sum_j 1/a_j
PriorParams compute_prior(const std::vector<std::int64_t>& counts, double epsilon);

// TSV: id <TAB> cluster, rows in the given id order.
void save_assignments(const ClusterModel& model,
                      const std::vector<std::string>& id_order,
                      const std::filesystem::path& path);
std::unordered_map<std::string, int> load_assignments(
    const std::filesystem::path& path, int* num_clusters_out = nullptr);

void save_prior(const PriorParams& prior, const std::filesystem::path& path);
PriorParams load_prior(const std::filesystem::path& path);

}  // namespace xtra
