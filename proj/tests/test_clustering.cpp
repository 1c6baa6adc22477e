#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "test_util.hpp"
#include "xtra/clustering.hpp"

using namespace xtra;
using testutil::TempDir;
using testutil::write_file;

namespace {

// independent long-double evaluation of the prior moment formulas
struct PriorOracle {
  std::vector<long double> mu, var;
};

PriorOracle prior_oracle(const std::vector<std::int64_t>& counts, long double eps) {
  const std::size_t t = counts.size();
  std::vector<long double> alpha(t), log_alpha(t);
  long double log_sum = 0.0L, inv_sum = 0.0L;
  for (std::size_t k = 0; k < t; ++k) {
    alpha[k] = static_cast<long double>(counts[k]) + eps;
    log_alpha[k] = std::log(alpha[k]);
    log_sum += log_alpha[k];
    inv_sum += 1.0L / alpha[k];
  }
  const long double td = static_cast<long double>(t);
  PriorOracle o;
  o.mu.resize(t);
  o.var.resize(t);
  for (std::size_t k = 0; k < t; ++k) {
    o.mu[k] = log_alpha[k] - log_sum / td;
    o.var[k] = (1.0L / alpha[k]) * (1.0L - 2.0L / td) + inv_sum / (td * td);
  }
  return o;
}

ReducedEmbeddings hand_reduced(const std::vector<std::string>& ids,
                               const Eigen::MatrixXd& unit_rows) {
  ReducedEmbeddings r;
  r.ids = ids;
  r.vectors = unit_rows;
  for (std::size_t i = 0; i < ids.size(); ++i)
    r.row_of[ids[i]] = static_cast<int>(i);
  return r;
}

}  // namespace

TEST_CASE("prior moments match the closed-form pinned cases") {
  SUBCASE("two clusters, counts 1 and 3, epsilon 1") {
    const PriorParams p = compute_prior({1, 3}, 1.0);
    // alpha = (2, 4); mu = +-(log 4 - log 2)/2; var = (1/4)(1/2 + 1/4)
    CHECK(p.mu[0] == doctest::Approx(-0.34657359027997264).epsilon(1e-14));
    CHECK(p.mu[1] == doctest::Approx(+0.34657359027997264).epsilon(1e-14));
    CHECK(p.var[0] == doctest::Approx(0.1875).epsilon(1e-14));
    CHECK(p.var[1] == doctest::Approx(0.1875).epsilon(1e-14));
  }
  SUBCASE("three empty clusters, epsilon 1") {
    const PriorParams p = compute_prior({0, 0, 0}, 1.0);
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(p.mu[k]) <= 1e-15);
      CHECK(p.var[k] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("prior moments match a high-precision oracle on random instances") {
  auto rng = rng_for(123);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 2 + static_cast<int>(rng() % 12);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(t));
    for (auto& c : counts) c = static_cast<std::int64_t>(rng() % 5000);
    const double eps = 0.05 + 3.0 * uniform01(rng);

    const PriorParams p = compute_prior(counts, eps);
    const PriorOracle o = prior_oracle(counts, static_cast<long double>(eps));
    for (int k = 0; k < t; ++k) {
      CHECK(std::abs(p.mu[k] - static_cast<double>(o.mu[static_cast<std::size_t>(k)])) < 1e-12);
      CHECK(std::abs(p.var[k] - static_cast<double>(o.var[static_cast<std::size_t>(k)])) < 1e-12);
    }
    CHECK(std::abs(p.mu.sum()) < 1e-10);  // softmax-basis mean is centered
  }
}

TEST_CASE("equal cluster counts give an exactly centered prior mean") {
  for (std::int64_t n : {0, 1, 7, 500}) {
    const PriorParams p = compute_prior({n, n, n, n}, 0.5);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(p.mu[k]) <= 1e-12);
    // all-equal alphas also share one variance
    CHECK(p.var.maxCoeff() == doctest::Approx(p.var.minCoeff()).epsilon(1e-15));
  }
}

TEST_CASE("prior validation") {
  CHECK_THROWS_AS(compute_prior({5}, 1.0), ValidationError);         // T < 2
  CHECK_THROWS_AS(compute_prior({1, 2}, 0.0), ValidationError);      // eps = 0
  CHECK_THROWS_AS(compute_prior({1, 2}, -1.0), ValidationError);     // eps < 0
  CHECK_THROWS_AS(compute_prior({1, -2, 3}, 1.0), ValidationError);  // bad count
}

TEST_CASE("reduce_and_normalize produces unit rows preserving cosine structure") {
  EmbeddingTable table;
  auto rng = rng_for(7);
  const int n = 9, d = 5;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v(d);
    for (int c = 0; c < d; ++c) v[c] = std_normal(rng);
    table.insert("doc" + std::to_string(i), v);
  }

  const ReducedEmbeddings r = reduce_and_normalize(table, d, 1);
  REQUIRE(r.vectors.rows() == n);
  REQUIRE(r.vectors.cols() == d);
  for (int i = 0; i < n; ++i)
    CHECK(r.vectors.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));

  // with full rank the projection is orthogonal, so normalized centered rows
  // must keep their pairwise cosines
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) x.row(i) = table.rows.at("doc" + std::to_string(i)).transpose();
  x.rowwise() -= x.colwise().mean();
  for (int i = 0; i < n; ++i) x.row(i) /= x.row(i).norm();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      CHECK(r.vectors.row(i).dot(r.vectors.row(j)) ==
            doctest::Approx(x.row(i).dot(x.row(j))).epsilon(1e-9));

  SUBCASE("deterministic") {
    const ReducedEmbeddings again = reduce_and_normalize(table, d, 1);
    CHECK((again.vectors - r.vectors).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("rank bounds are validated") {
    CHECK_THROWS_AS(reduce_and_normalize(table, 0, 1), ValidationError);
    CHECK_THROWS_AS(reduce_and_normalize(table, d + 1, 1), ValidationError);
  }
  SUBCASE("identical embeddings center to zero rows, left at zero") {
    EmbeddingTable flat;
    for (int i = 0; i < 4; ++i) flat.insert("f" + std::to_string(i), Eigen::Vector3d(2, 2, 2));
    const ReducedEmbeddings rf = reduce_and_normalize(flat, 2, 1);
    CHECK(rf.vectors.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("kmeans recovers well-separated blobs") {
  std::vector<std::string> ids;
  std::vector<int> truth;
  const int per = 12;
  Eigen::MatrixXd pts(3 * per, 2);
  auto rng = rng_for(42);
  const double centers[3][2] = {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}};
  for (int b = 0; b < 3; ++b) {
    for (int i = 0; i < per; ++i) {
      const int row = b * per + i;
      Eigen::Vector2d v(centers[b][0] + 0.05 * std_normal(rng),
                        centers[b][1] + 0.05 * std_normal(rng));
      pts.row(row) = v.normalized().transpose();
      ids.push_back("p" + std::to_string(row));
      truth.push_back(b);
    }
  }
  const ReducedEmbeddings reduced = hand_reduced(ids, pts);
  const ClusterModel model = fit_pivot_clusters(reduced, ids, 3, 5);

  REQUIRE(model.num_clusters == 3);
  REQUIRE(model.centroids.rows() == 3);
  CHECK(model.total_assigned() == 3 * per);

  // same blob -> same cluster, different blob -> different cluster
  for (int i = 0; i < 3 * per; ++i)
    for (int j = 0; j < 3 * per; ++j) {
      const bool same_truth = truth[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(j)];
      const bool same_found = model.assignment.at(ids[static_cast<std::size_t>(i)]) ==
                              model.assignment.at(ids[static_cast<std::size_t>(j)]);
      CHECK(same_truth == same_found);
    }

  SUBCASE("deterministic in the seed") {
    const ClusterModel again = fit_pivot_clusters(reduced, ids, 3, 5);
    for (const auto& id : ids)
      CHECK(again.assignment.at(id) == model.assignment.at(id));
    CHECK((again.centroids - model.centroids).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("no empty clusters even when k exceeds the blob count") {
    const ClusterModel wide = fit_pivot_clusters(reduced, ids, 7, 5);
    for (auto c : wide.counts) CHECK(c > 0);
    CHECK(wide.total_assigned() == 3 * per);
  }
  SUBCASE("more clusters than points is an error") {
    std::vector<std::string> two = {ids[0], ids[1]};
    CHECK_THROWS_AS(fit_pivot_clusters(reduced, two, 3, 5), ValidationError);
  }
}

TEST_CASE("non-pivot documents join the closest centroid by cosine") {
  std::vector<std::string> ids = {"n0", "n1", "n2"};
  Eigen::MatrixXd pts(3, 2);
  pts.row(0) = Eigen::Vector2d(0.9, 0.1).normalized().transpose();   // near +x
  pts.row(1) = Eigen::Vector2d(-0.2, 1.0).normalized().transpose();  // near +y
  pts.row(2) = Eigen::Vector2d(1.0, 1.0).normalized().transpose();   // exact tie
  const ReducedEmbeddings reduced = hand_reduced(ids, pts);

  ClusterModel model;
  model.num_clusters = 2;
  model.centroids.resize(2, 2);
  model.centroids.row(0) = Eigen::Vector2d(1.0, 0.0).transpose();
  model.centroids.row(1) = Eigen::Vector2d(0.0, 1.0).transpose();
  model.counts = {0, 0};

  assign_nonpivot(reduced, ids, model);
  CHECK(model.assignment.at("n0") == 0);
  CHECK(model.assignment.at("n1") == 1);
  CHECK(model.assignment.at("n2") == 0);  // tie resolves to the lowest index
  CHECK(model.counts[0] == 2);
  CHECK(model.counts[1] == 1);

  SUBCASE("double assignment is rejected") {
    std::vector<std::string> again = {"n0"};
    CHECK_THROWS_AS(assign_nonpivot(reduced, again, model), ValidationError);
  }
}

TEST_CASE("assignment files round trip") {
  TempDir dir;
  ClusterModel model;
  model.num_clusters = 3;
  model.assignment = {{"a", 0}, {"b", 2}, {"c", 1}};
  model.counts = {1, 1, 1};

  save_assignments(model, {"a", "b", "c"}, dir.file("cl.tsv"));
  int t = 0;
  const auto loaded = load_assignments(dir.file("cl.tsv"), &t);
  CHECK(t == 3);
  CHECK(loaded.at("a") == 0);
  CHECK(loaded.at("b") == 2);
  CHECK(loaded.at("c") == 1);

  SUBCASE("missing id in the order is an error") {
    CHECK_THROWS_AS(save_assignments(model, {"a", "zzz"}, dir.file("x.tsv")),
                    ValidationError);
  }
  SUBCASE("bad rows are rejected with their line number") {
    write_file(dir, "bad.tsv", "a\t0\nb\tnope\n");
    CHECK_THROWS_WITH_AS(load_assignments(dir.file("bad.tsv")),
                         doctest::Contains(":2:"), ValidationError);
    write_file(dir, "bad2.tsv", "a\t0\na\t1\n");
    CHECK_THROWS_WITH_AS(load_assignments(dir.file("bad2.tsv")),
                         doctest::Contains("duplicate"), ValidationError);
    write_file(dir, "bad3.tsv", "only_id_no_tab\n");
    CHECK_THROWS_AS(load_assignments(dir.file("bad3.tsv")), ValidationError);
  }
}

TEST_CASE("prior files round trip") {
  TempDir dir;
  const PriorParams p = compute_prior({4, 9, 2}, 1.5);
  save_prior(p, dir.file("prior.json"));
  const PriorParams loaded = load_prior(dir.file("prior.json"));

  CHECK(loaded.epsilon == doctest::Approx(p.epsilon));
  CHECK(loaded.mu.isApprox(p.mu, 1e-15));
  CHECK(loaded.var.isApprox(p.var, 1e-15));
  CHECK(loaded.alpha.isApprox(p.alpha, 1e-15));

  SUBCASE("corrupt prior files are rejected") {
    write_file(dir, "bad1.json", "{\"epsilon\": 1.0, \"alpha\": [1,2]}");
    CHECK_THROWS_AS(load_prior(dir.file("bad1.json")), ValidationError);
    write_file(dir, "bad2.json",
               "{\"epsilon\":1.0,\"alpha\":[1,2],\"mu\":[0.0,0.0],\"var\":[0.5,-0.5]}");
    CHECK_THROWS_AS(load_prior(dir.file("bad2.json")), ValidationError);
    write_file(dir, "bad3.json", "not json at all");
    CHECK_THROWS_AS(load_prior(dir.file("bad3.json")), ValidationError);
  }
}
