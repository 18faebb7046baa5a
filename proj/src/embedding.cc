/*
 * Copyright 2026 The AdaptHetero Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "adapthetero/embedding.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>

namespace adapthetero::embedding {
namespace {

using json = nlohmann::json;

constexpr double kSigmaTolerance = 1e-3;
constexpr int kBisectionSteps = 64;
constexpr double kGradientClip = 4.0;
constexpr double kRepulsionStrength = 1.0;
constexpr double kInitialAlpha = 1.0;

// Residuals of the similarity curve against the min_dist target.
struct CurveResidual {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  std::vector<double> x;
  std::vector<double> target;

  int inputs() const { return 2; }
  int values() const { return static_cast<int>(x.size()); }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& f) const {
    for (size_t i = 0; i < x.size(); ++i) {
      f[i] = 1.0 / (1.0 + p[0] * std::pow(x[i], 2.0 * p[1])) - target[i];
    }
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const {
    for (size_t i = 0; i < x.size(); ++i) {
      if (x[i] <= 0.0) {
        jac(i, 0) = 0.0;
        jac(i, 1) = 0.0;
        continue;
      }
      const double u = std::pow(x[i], 2.0 * p[1]);
      const double denom = (1.0 + p[0] * u) * (1.0 + p[0] * u);
      jac(i, 0) = -u / denom;
      jac(i, 1) = -p[0] * u * 2.0 * std::log(x[i]) / denom;
    }
    return 0;
  }
};

double SquaredDistance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    sum += diff * diff;
  }
  return sum;
}

// k smallest (distance, index) pairs among `candidates`, in ascending order.
void TakeNearest(std::vector<std::pair<double, size_t>>& candidates, size_t k,
                 std::span<size_t> out_indices, std::span<double> out_distances) {
  std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
  for (size_t i = 0; i < k; ++i) {
    out_distances[i] = std::sqrt(candidates[i].first);
    out_indices[i] = candidates[i].second;
  }
}

double Clip(double value) {
  return std::clamp(value, -kGradientClip, kGradientClip);
}

void Optimize(const FuzzyGraph& graph, const CurveParams& curve,
              const UmapConfig& config, Matrix& coords) {
  if (config.n_epochs <= 0 || graph.edges.empty()) return;
  double max_weight = 0.0;
  for (const auto& edge : graph.edges) max_weight = std::max(max_weight, edge.weight);
  const double min_weight = max_weight / config.n_epochs;

  // Both directions of every retained edge, ordered by (from, to).
  std::vector<Edge> directed;
  for (const auto& edge : graph.edges) {
    if (edge.weight < min_weight) continue;
    directed.push_back(edge);
    directed.push_back({edge.to, edge.from, edge.weight});
  }
  std::sort(directed.begin(), directed.end(), [](const Edge& x, const Edge& y) {
    return x.from != y.from ? x.from < y.from : x.to < y.to;
  });

  const size_t n_edges = directed.size();
  std::vector<double> epochs_per_sample(n_edges);
  for (size_t e = 0; e < n_edges; ++e) {
    epochs_per_sample[e] = max_weight / directed[e].weight;
  }
  std::vector<double> epochs_per_negative(n_edges);
  for (size_t e = 0; e < n_edges; ++e) {
    epochs_per_negative[e] = epochs_per_sample[e] / config.negative_sample_rate;
  }
  std::vector<double> next_sample = epochs_per_sample;
  std::vector<double> next_negative = epochs_per_negative;

  const double a = curve.a;
  const double b = curve.b;
  const size_t n = coords.rows();
  Rng rng(DeriveSeed(config.seed, "negative_sampling"));

  for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
    const double alpha =
        kInitialAlpha * (1.0 - static_cast<double>(epoch) / config.n_epochs);
    for (size_t e = 0; e < n_edges; ++e) {
      if (next_sample[e] > epoch) continue;
      const size_t i = directed[e].from;
      const size_t j = directed[e].to;
      auto current = coords.row(i);
      auto other = coords.row(j);

      const double dist_sq = SquaredDistance(current, other);
      double coeff = 0.0;
      if (dist_sq > 0.0) {
        coeff = -2.0 * a * b * std::pow(dist_sq, b - 1.0) /
                (a * std::pow(dist_sq, b) + 1.0);
      }
      for (size_t d = 0; d < 2; ++d) {
        const double grad = Clip(coeff * (current[d] - other[d]));
        current[d] += grad * alpha;
        other[d] -= grad * alpha;
      }
      next_sample[e] += epochs_per_sample[e];

      const int n_negative = static_cast<int>(
          (epoch - next_negative[e]) / epochs_per_negative[e]);
      for (int s = 0; s < n_negative; ++s) {
        const size_t k = rng.UniformInt(n);
        if (k == i) continue;
        auto sample = coords.row(k);
        const double neg_sq = SquaredDistance(current, sample);
        double neg_coeff = 0.0;
        if (neg_sq > 0.0) {
          neg_coeff = 2.0 * kRepulsionStrength * b /
                      ((0.001 + neg_sq) * (a * std::pow(neg_sq, b) + 1.0));
        }
        for (size_t d = 0; d < 2; ++d) {
          const double grad = neg_coeff > 0.0
                                  ? Clip(neg_coeff * (current[d] - sample[d]))
                                  : kGradientClip;
          current[d] += grad * alpha;
        }
      }
      next_negative[e] += n_negative * epochs_per_negative[e];
    }
  }
}

}  // namespace

void UmapConfig::Validate(size_t n_rows) const {
  if (n_neighbors < 2) {
    throw Error(ErrorCode::kConfig, "n_neighbors must be at least 2");
  }
  if (static_cast<size_t>(n_neighbors) >= n_rows) {
    throw Error(ErrorCode::kConfig, "n_neighbors must be below the row count");
  }
  if (!(min_dist > 0.0)) throw Error(ErrorCode::kConfig, "min_dist must be positive");
  if (n_epochs < 0) throw Error(ErrorCode::kConfig, "n_epochs must be non-negative");
  if (negative_sample_rate < 1) {
    throw Error(ErrorCode::kConfig, "negative_sample_rate must be at least 1");
  }
}

json UmapConfigToJson(const UmapConfig& config) {
  return {{"n_neighbors", config.n_neighbors},
          {"min_dist", config.min_dist},
          {"n_epochs", config.n_epochs},
          {"negative_sample_rate", config.negative_sample_rate},
          {"seed", config.seed}};
}

UmapConfig UmapConfigFromJson(const json& j) {
  UmapConfig config;
  config.n_neighbors = j.value("n_neighbors", config.n_neighbors);
  config.min_dist = j.value("min_dist", config.min_dist);
  config.n_epochs = j.value("n_epochs", config.n_epochs);
  config.negative_sample_rate =
      j.value("negative_sample_rate", config.negative_sample_rate);
  config.seed = j.value("seed", config.seed);
  return config;
}

double EuclideanDistance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(SquaredDistance(a, b));
}

Neighbors KnnGraph(const Matrix& points, size_t k) {
  const size_t n = points.rows();
  if (k < 1 || k >= n) {
    throw Error(ErrorCode::kConfig, "neighbor count must be in [1, rows)");
  }
  Neighbors out;
  out.k = k;
  out.indices.resize(n * k);
  out.distances.resize(n * k);
  std::vector<std::pair<double, size_t>> candidates;
  candidates.reserve(n - 1);
  for (size_t q = 0; q < n; ++q) {
    candidates.clear();
    for (size_t r = 0; r < n; ++r) {
      if (r != q) candidates.emplace_back(SquaredDistance(points.row(q), points.row(r)), r);
    }
    TakeNearest(candidates, k, {out.indices.data() + q * k, k},
                {out.distances.data() + q * k, k});
  }
  return out;
}

Neighbors KnnQuery(const Matrix& reference, const Matrix& queries, size_t k) {
  if (reference.cols() != queries.cols()) {
    throw Error(ErrorCode::kShape, "query width differs from reference width");
  }
  if (k < 1 || k > reference.rows()) {
    throw Error(ErrorCode::kConfig, "neighbor count must be in [1, reference rows]");
  }
  Neighbors out;
  out.k = k;
  out.indices.resize(queries.rows() * k);
  out.distances.resize(queries.rows() * k);
  std::vector<std::pair<double, size_t>> candidates;
  candidates.reserve(reference.rows());
  for (size_t q = 0; q < queries.rows(); ++q) {
    candidates.clear();
    for (size_t r = 0; r < reference.rows(); ++r) {
      candidates.emplace_back(SquaredDistance(queries.row(q), reference.row(r)), r);
    }
    TakeNearest(candidates, k, {out.indices.data() + q * k, k},
                {out.distances.data() + q * k, k});
  }
  return out;
}

CurveParams FitCurve(double min_dist, double spread) {
  CurveResidual residual;
  constexpr int kSamples = 300;
  for (int i = 0; i < kSamples; ++i) {
    const double x = 3.0 * spread * i / (kSamples - 1);
    residual.x.push_back(x);
    residual.target.push_back(x < min_dist ? 1.0 : std::exp(-(x - min_dist) / spread));
  }
  Eigen::VectorXd p(2);
  p << 1.0, 1.0;
  Eigen::LevenbergMarquardt<CurveResidual> solver(residual);
  solver.parameters.xtol = 1e-12;
  solver.parameters.ftol = 1e-12;
  solver.parameters.maxfev = 2000;
  solver.minimize(p);
  return {p[0], p[1]};
}

FuzzyGraph BuildFuzzyGraph(const Neighbors& neighbors) {
  const size_t k = neighbors.k;
  const size_t n = k == 0 ? 0 : neighbors.indices.size() / k;
  const double target = std::log2(static_cast<double>(k));
  FuzzyGraph graph;
  graph.rho.resize(n);
  graph.sigma.resize(n);
  graph.residual.resize(n);

  std::vector<std::vector<std::pair<size_t, double>>> membership(n);
  for (size_t i = 0; i < n; ++i) {
    const auto dist = neighbors.DistancesOf(i);
    const double rho = dist[0];
    auto total = [&](double sigma) {
      double sum = 0.0;
      for (double d : dist) sum += std::exp(-std::max(0.0, d - rho) / sigma);
      return sum;
    };
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double mid = 1.0;
    for (int step = 0; step < kBisectionSteps; ++step) {
      const double sum = total(mid);
      if (std::abs(sum - target) < 1e-5 * target) break;
      if (sum > target) {
        hi = mid;
        mid = (lo + hi) / 2.0;
      } else {
        lo = mid;
        mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
      }
    }
    double sigma = mid;
    double residual = std::abs(total(sigma) - target);
    if (!(residual <= kSigmaTolerance) || !(sigma > 0.0)) {
      const double mean = std::accumulate(dist.begin(), dist.end(), 0.0) / k;
      sigma = mean > 0.0 ? mean : 1.0;
      residual = std::abs(total(sigma) - target);
      graph.sigma_fallbacks.push_back(i);
    }
    graph.rho[i] = rho;
    graph.sigma[i] = sigma;
    graph.residual[i] = residual;
    const auto idx = neighbors.IndicesOf(i);
    for (size_t j = 0; j < k; ++j) {
      membership[i].emplace_back(idx[j],
                                 std::exp(-std::max(0.0, dist[j] - rho) / sigma));
    }
    std::sort(membership[i].begin(), membership[i].end());
  }

  auto lookup = [&](size_t from, size_t to) {
    const auto& row = membership[from];
    auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(to, -1.0));
    return it != row.end() && it->first == to ? it->second : 0.0;
  };
  for (size_t i = 0; i < n; ++i) {
    for (const auto& [j, w] : membership[i]) {
      const double back = lookup(j, i);
      // Each unordered pair is emitted once, from its lower endpoint or from
      // the only side that lists it.
      if (i < j || back == 0.0) {
        const size_t from = std::min(i, j);
        const size_t to = std::max(i, j);
        graph.edges.push_back({from, to, w + back - w * back});
      }
    }
  }
  std::sort(graph.edges.begin(), graph.edges.end(), [](const Edge& x, const Edge& y) {
    return x.from != y.from ? x.from < y.from : x.to < y.to;
  });
  return graph;
}

Embedding2D FitEmbedding(const Matrix& points, const UmapConfig& config) {
  config.Validate(points.rows());
  const size_t n = points.rows();
  const std::vector<size_t> order = LexicographicRowOrder(points);
  const Matrix sorted = points.SelectRows(order);

  const Neighbors neighbors = KnnGraph(sorted, static_cast<size_t>(config.n_neighbors));
  const FuzzyGraph graph = BuildFuzzyGraph(neighbors);

  Embedding2D out;
  out.config = config;
  out.fitted_rows = n;
  out.curve = FitCurve(config.min_dist);
  out.sigma_fallbacks = graph.sigma_fallbacks.size();

  Matrix layout(n, 2);
  Rng init(DeriveSeed(config.seed, "layout_init"));
  for (size_t i = 0; i < n; ++i) {
    layout(i, 0) = init.Uniform(-10.0, 10.0);
    layout(i, 1) = init.Uniform(-10.0, 10.0);
  }
  Optimize(graph, out.curve, config, layout);

  out.coords = Matrix(n, 2);
  for (size_t i = 0; i < n; ++i) {
    out.coords(order[i], 0) = layout(i, 0);
    out.coords(order[i], 1) = layout(i, 1);
  }
  return out;
}

Matrix TransformEmbedding(const Matrix& train_points, const Matrix& train_coords,
                          const Matrix& queries, size_t k) {
  if (train_points.rows() != train_coords.rows()) {
    throw Error(ErrorCode::kShape, "training points and coordinates differ in rows");
  }
  const Neighbors neighbors = KnnQuery(train_points, queries, k);
  Matrix out(queries.rows(), 2);
  for (size_t q = 0; q < queries.rows(); ++q) {
    const auto idx = neighbors.IndicesOf(q);
    const auto dist = neighbors.DistancesOf(q);
    double total = 0.0;
    double x = 0.0;
    double y = 0.0;
    for (size_t j = 0; j < k; ++j) {
      const double w = 1.0 / (dist[j] + 1e-12);
      total += w;
      x += w * train_coords(idx[j], 0);
      y += w * train_coords(idx[j], 1);
    }
    out(q, 0) = x / total;
    out(q, 1) = y / total;
  }
  return out;
}

}  // namespace adapthetero::embedding
