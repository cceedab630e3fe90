#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "qc4qa/error.hpp"
#include "qc4qa/qc.hpp"

namespace qc4qa {
namespace {

struct Assignment {
  std::vector<int> labels;
  std::vector<double> distances;  // squared distance to the assigned centroid
  double inertia = 0.0;
};

int nearest(const Matrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x, double* dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

Assignment assign_all(const Matrix& x, const Matrix& centroids) {
  Assignment a;
  const auto n = static_cast<std::size_t>(x.rows());
  a.labels.resize(n);
  a.distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.labels[i] = nearest(centroids, x.row(static_cast<Eigen::Index>(i)), &a.distances[i]);
    a.inertia += a.distances[i];
  }
  return a;
}

Matrix plus_plus_init(const Matrix& x, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Matrix centroids(k, x.cols());
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_index(n)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (x.row(static_cast<Eigen::Index>(i)) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    const std::size_t pick = total > 0.0 ? rng.categorical(d2) : rng.uniform_index(n);
    centroids.row(c) = x.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

KMeansModel kmeans_fit(const Matrix& features, int k, std::uint64_t seed, int max_iters, double tol) {
  if (k <= 0) throw ValidationError("kmeans_fit: k must be positive");
  if (features.rows() < k) {
    throw ValidationError("kmeans_fit: " + std::to_string(features.rows()) + " points cannot form " +
                          std::to_string(k) + " clusters");
  }
  if (!features.allFinite()) throw NumericError("kmeans_fit: non-finite feature value");

  Rng rng(seed);
  KMeansModel model;
  model.k = k;
  model.seed = seed;
  model.centroids = plus_plus_init(features, k, rng);

  Assignment a = assign_all(features, model.centroids);
  model.inertia_trace.push_back(a.inertia);
  for (int iter = 0; iter < max_iters; ++iter) {
    Matrix sums = Matrix::Zero(k, features.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
      sums.row(a.labels[i]) += features.row(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(a.labels[i])];
    }
    Matrix next = model.centroids;
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: take over the point farthest from its own centroid.
      std::size_t far = 0;
      for (std::size_t i = 1; i < a.distances.size(); ++i) {
        if (a.distances[i] > a.distances[far]) far = i;
      }
      next.row(c) = features.row(static_cast<Eigen::Index>(far));
      a.distances[far] = 0.0;
      reseeded = true;
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) shift = std::max(shift, (next.row(c) - model.centroids.row(c)).norm());
    model.centroids = std::move(next);
    a = assign_all(features, model.centroids);
    model.inertia_trace.push_back(a.inertia);
    if (shift < tol && !reseeded) break;
  }
  return model;
}

int kmeans_assign(const KMeansModel& model, const Vector& feature) {
  if (feature.size() != model.centroids.cols()) {
    throw ShapeError("kmeans_assign: feature dimension " + std::to_string(feature.size()) +
                     " does not match centroid dimension " + std::to_string(model.centroids.cols()));
  }
  return nearest(model.centroids, feature.transpose(), nullptr);
}

void save_kmeans(const KMeansModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["k"] = model.k;
  j["d"] = model.centroids.cols();
  j["seed"] = model.seed;
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < model.centroids.rows(); ++r) {
    std::vector<double> row(model.centroids.row(r).data(), model.centroids.row(r).data() + model.centroids.cols());
    rows.push_back(row);
  }
  j["centroids"] = rows;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

KMeansModel load_kmeans(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    const auto j = nlohmann::json::parse(in);
    KMeansModel m;
    m.k = j.at("k").get<int>();
    const int d = j.at("d").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto rows = j.at("centroids").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(rows.size()) != m.k) throw ShapeError("centroid count does not match k");
    m.centroids.resize(m.k, d);
    for (int r = 0; r < m.k; ++r) {
      if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != d) throw ShapeError("centroid row has the wrong dimension");
      for (int c = 0; c < d; ++c) m.centroids(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace qc4qa
