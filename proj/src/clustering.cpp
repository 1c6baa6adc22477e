#include "xtra/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "xtra/io_util.hpp"

namespace xtra {

using nlohmann::json;

std::int64_t ClusterModel::total_assigned() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

const Eigen::VectorXd ReducedEmbeddings::row(const std::string& id) const {
  auto it = row_of.find(id);
  if (it == row_of.end())
    throw ValidationError("no reduced embedding for document \"" + id + "\"");
  return vectors.row(it->second).transpose();
}

ReducedEmbeddings reduce_and_normalize(const EmbeddingTable& table, int rank,
                                       [[maybe_unused]] std::uint64_t seed) {
  if (table.ids.empty()) throw ValidationError("embedding table is empty");
  const auto rows = static_cast<Eigen::Index>(table.ids.size());
  const auto cols = static_cast<Eigen::Index>(table.dim);
  if (rank < 1 || rank > std::min(rows, cols))
    throw ValidationError("svd rank must be in [1, min(docs, dim)]; got " +
                          std::to_string(rank));

  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    x.row(i) = table.rows.at(table.ids[i]).transpose();
  x.rowwise() -= x.colwise().mean();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd v = svd.matrixV().leftCols(rank);
  Eigen::VectorXd s = svd.singularValues().head(rank);
  for (Eigen::Index k = 0; k < rank; ++k) {
    Eigen::Index arg;
    v.col(k).cwiseAbs().maxCoeff(&arg);
    if (v(arg, k) < 0.0) v.col(k) = -v.col(k);
  }

  ReducedEmbeddings out;
  out.ids = table.ids;
  out.vectors = x * v;  // == U_r * S_r up to the sign flips above
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double norm = out.vectors.row(i).norm();
    if (norm > 1e-12) out.vectors.row(i) /= norm;
    out.row_of[out.ids[static_cast<std::size_t>(i)]] = static_cast<int>(i);
  }
  return out;
}

namespace {

// cumulative-sum sampling so results do not depend on the standard library's
// discrete_distribution implementation
Eigen::Index sample_weighted(const Eigen::VectorXd& weights, std::mt19937_64& rng) {
  const double total = weights.sum();
  if (total <= 0.0) {
    for (Eigen::Index i = 0; i < weights.size(); ++i)
      if (weights[i] >= 0.0) return i;
    return 0;
  }
  const double target = uniform01(rng) * total;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  return weights.size() - 1;
}

}  // namespace

ClusterModel fit_pivot_clusters(const ReducedEmbeddings& reduced,
                                const std::vector<std::string>& pivot_ids,
                                int num_clusters, std::uint64_t seed,
                                int max_iter) {
  if (num_clusters < 1) throw ValidationError("num_clusters must be >= 1");
  if (pivot_ids.size() < static_cast<std::size_t>(num_clusters))
    throw ValidationError("need at least num_clusters pivot documents, got " +
                          std::to_string(pivot_ids.size()));
  if (max_iter < 1) throw ValidationError("max_iter must be >= 1");

  const auto p = static_cast<Eigen::Index>(pivot_ids.size());
  const Eigen::Index r = reduced.vectors.cols();
  Eigen::MatrixXd pts(p, r);
  for (Eigen::Index i = 0; i < p; ++i)
    pts.row(i) = reduced.row(pivot_ids[static_cast<std::size_t>(i)]).transpose();

  const auto k = static_cast<Eigen::Index>(num_clusters);
  auto rng = rng_for(seed);

  // k-means++ seeding
  Eigen::MatrixXd centroids(k, r);
  centroids.row(0) = pts.row(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p)));
  Eigen::VectorXd d2 = (pts.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    const Eigen::Index pick = sample_weighted(d2, rng);
    centroids.row(c) = pts.row(pick);
    d2 = d2.cwiseMin((pts.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(p), -1);
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(k), 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    std::fill(sizes.begin(), sizes.end(), 0);
    for (Eigen::Index i = 0; i < p; ++i) {
      Eigen::Index best = 0;
      double best_d = (pts.row(i) - centroids.row(0)).squaredNorm();
      for (Eigen::Index c = 1; c < k; ++c) {
        const double d = (pts.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
      ++sizes[static_cast<std::size_t>(best)];
    }

    // re-seed empty clusters from the farthest point of a multi-member cluster
    for (Eigen::Index c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] != 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < p; ++i) {
        const auto home = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
        if (sizes[home] < 2) continue;
        const double d =
            (pts.row(i) - centroids.row(static_cast<Eigen::Index>(home))).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) continue;  // every occupied cluster is a singleton
      --sizes[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = static_cast<int>(c);
      ++sizes[static_cast<std::size_t>(c)];
      centroids.row(c) = pts.row(far);
      changed = true;
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, r);
    for (Eigen::Index i = 0; i < p; ++i)
      sums.row(assign[static_cast<std::size_t>(i)]) += pts.row(i);
    for (Eigen::Index c = 0; c < k; ++c)
      if (sizes[static_cast<std::size_t>(c)] > 0)
        centroids.row(c) = sums.row(c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]);

    if (!changed) break;
  }

  ClusterModel model;
  model.num_clusters = num_clusters;
  model.svd_rank = static_cast<int>(r);
  model.centroids = std::move(centroids);
  model.counts.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < p; ++i) {
    const std::string& id = pivot_ids[static_cast<std::size_t>(i)];
    if (!model.assignment.emplace(id, assign[static_cast<std::size_t>(i)]).second)
      throw ValidationError("duplicate pivot id \"" + id + "\"");
    ++model.counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
  }
  return model;
}

void assign_nonpivot(const ReducedEmbeddings& reduced,
                     const std::vector<std::string>& nonpivot_ids,
                     ClusterModel& model) {
  if (model.num_clusters < 1 || model.centroids.rows() != model.num_clusters)
    throw ValidationError("cluster model has no fitted centroids");

  Eigen::VectorXd centroid_norm = model.centroids.rowwise().norm();
  for (const auto& id : nonpivot_ids) {
    const Eigen::VectorXd x = reduced.row(id);
    int best = 0;
    double best_cos = -2.0;
    for (int c = 0; c < model.num_clusters; ++c) {
      const double denom = centroid_norm[c] * x.norm();
      const double cos = denom > 1e-12 ? model.centroids.row(c).dot(x) / denom : 0.0;
      if (cos > best_cos) {  // strict: ties keep the lowest index
        best_cos = cos;
        best = c;
      }
    }
    if (!model.assignment.emplace(id, best).second)
      throw ValidationError("document \"" + id + "\" is already assigned");
    ++model.counts[static_cast<std::size_t>(best)];
  }
}

PriorParams compute_prior(const std::vector<std::int64_t>& counts, double epsilon) {
  const auto t = static_cast<Eigen::Index>(counts.size());
  if (t < 2) throw ValidationError("prior needs at least 2 clusters");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");

  PriorParams prior;
  prior.epsilon = epsilon;
  prior.alpha.resize(t);
  for (Eigen::Index k = 0; k < t; ++k) {
    if (counts[static_cast<std::size_t>(k)] < 0)
      throw ValidationError("negative cluster count");
    prior.alpha[k] = static_cast<double>(counts[static_cast<std::size_t>(k)]) + epsilon;
  }

  const Eigen::VectorXd log_alpha = prior.alpha.array().log();
  const Eigen::VectorXd inv_alpha = prior.alpha.array().inverse();
  const double td = static_cast<double>(t);
  prior.mu = log_alpha.array() - log_alpha.mean();
  prior.var = inv_alpha.array() * (1.0 - 2.0 / td) + inv_alpha.sum() / (td * td);
  if (!(prior.var.minCoeff() > 0.0))
    throw ValidationError("prior variance is not strictly positive");
  return prior;
}

void save_assignments(const ClusterModel& model,
                      const std::vector<std::string>& id_order,
                      const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (const auto& id : id_order) {
    auto it = model.assignment.find(id);
    if (it == model.assignment.end())
      throw ValidationError("document \"" + id + "\" has no cluster assignment");
    out << id << "\t" << it->second << "\n";
  }
}

std::unordered_map<std::string, int> load_assignments(
    const std::filesystem::path& path, int* num_clusters_out) {
  std::unordered_map<std::string, int> assignment;
  int max_cluster = -1;
  for_each_line(path, [&](std::size_t lineno, const std::string& line) {
    if (line.empty()) return;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": expected \"id<TAB>cluster\"");
    const std::string id = line.substr(0, tab);
    int cluster = -1;
    try {
      std::size_t used = 0;
      cluster = std::stoi(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": bad cluster index");
    }
    if (cluster < 0)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": negative cluster index");
    if (!assignment.emplace(id, cluster).second)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": duplicate id \"" + id + "\"");
    max_cluster = std::max(max_cluster, cluster);
  });
  if (assignment.empty())
    throw ValidationError(path.string() + ": no assignments");
  if (num_clusters_out) *num_clusters_out = max_cluster + 1;
  return assignment;
}

void save_prior(const PriorParams& prior, const std::filesystem::path& path) {
  json doc;
  doc["epsilon"] = prior.epsilon;
  doc["alpha"] = std::vector<double>(prior.alpha.data(), prior.alpha.data() + prior.alpha.size());
  doc["mu"] = std::vector<double>(prior.mu.data(), prior.mu.data() + prior.mu.size());
  doc["var"] = std::vector<double>(prior.var.data(), prior.var.data() + prior.var.size());
  std::ofstream out = open_out(path);
  out << doc.dump(2) << "\n";
}

PriorParams load_prior(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed prior file: " + e.what());
  }
  for (const char* key : {"epsilon", "alpha", "mu", "var"})
    if (!doc.contains(key))
      throw ValidationError(path.string() + ": missing \"" + std::string(key) + "\"");

  PriorParams prior;
  prior.epsilon = doc["epsilon"].get<double>();
  auto to_vec = [&](const char* key) {
    const auto v = doc[key].get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  prior.alpha = to_vec("alpha");
  prior.mu = to_vec("mu");
  prior.var = to_vec("var");
  if (prior.mu.size() != prior.var.size() || prior.mu.size() != prior.alpha.size() ||
      prior.mu.size() < 2)
    throw ValidationError(path.string() + ": inconsistent prior dimensions");
  if (!prior.mu.allFinite() || !prior.var.allFinite() || !(prior.var.minCoeff() > 0.0))
    throw ValidationError(path.string() + ": prior values must be finite with var > 0");
  return prior;
}

}  // namespace xtra
