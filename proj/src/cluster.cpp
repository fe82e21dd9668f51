#include "alertpred/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "alertpred/error.hpp"
#include "alertpred/rng.hpp"
#include "json_io.hpp"

namespace alertpred {

std::vector<double> featurize(const CountVector& v, const Featurization& f) {
  std::vector<double> point(v.counts.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    point[i] = f.binary ? (v.counts[i] > 0 ? 1.0 : 0.0) : static_cast<double>(v.counts[i]);
  }
  if (f.normalize_l2) {
    double norm = 0.0;
    for (double x : point) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : point) x /= norm;
    }
  }
  return point;
}

ClusterModel::ClusterModel(std::vector<std::vector<double>> centroids, Featurization featurization)
    : centroids_(std::move(centroids)), featurization_(featurization) {
  if (centroids_.empty()) throw Error("cluster model needs at least one centroid");
  vocab_size_ = centroids_.front().size();
  for (std::size_t c = 0; c < centroids_.size(); ++c) {
    if (centroids_[c].size() != vocab_size_) {
      throw Error("centroid " + std::to_string(c) + " has length " +
                  std::to_string(centroids_[c].size()) + ", expected " + std::to_string(vocab_size_));
    }
    for (double x : centroids_[c]) {
      if (!std::isfinite(x)) throw Error("centroid " + std::to_string(c) + " is not finite");
    }
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

std::size_t count_distinct(std::span<const std::vector<double>> points) {
  std::vector<const std::vector<double>*> refs;
  refs.reserve(points.size());
  for (const auto& p : points) refs.push_back(&p);
  std::sort(refs.begin(), refs.end(), [](auto* a, auto* b) { return *a < *b; });
  auto last = std::unique(refs.begin(), refs.end(), [](auto* a, auto* b) { return *a == *b; });
  return static_cast<std::size_t>(last - refs.begin());
}

namespace {

struct Nearest {
  std::size_t id;
  double distance;
};

Nearest nearest(std::span<const double> point, const std::vector<std::vector<double>>& centroids) {
  Nearest best{0, squared_distance(point, centroids[0])};
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(point, centroids[c]);
    if (d < best.distance) best = {c, d};
  }
  return best;
}

std::vector<std::vector<double>> seed_plus_plus(std::span<const std::vector<double>> points,
                                                std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  centroids.push_back(points[std::min(n - 1, static_cast<std::size_t>(rng.uniform() * n))]);

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    // k <= distinct points guarantees some positive weight remains.
    const std::size_t pick = rng.categorical(d2);
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

void recompute_means(std::span<const std::vector<double>> points,
                     const std::vector<std::size_t>& labels,
                     std::vector<std::vector<double>>& centroids, std::vector<std::size_t>& sizes) {
  const std::size_t dim = points.front().size();
  for (auto& c : centroids) std::fill(c.begin(), c.end(), 0.0);
  std::fill(sizes.begin(), sizes.end(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& c = centroids[labels[i]];
    for (std::size_t d = 0; d < dim; ++d) c[d] += points[i][d];
    ++sizes[labels[i]];
  }
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (sizes[c] == 0) continue;
    const double inv = static_cast<double>(sizes[c]);
    for (double& x : centroids[c]) x /= inv;
  }
}

}  // namespace

KMeansResult kmeans_fit(std::span<const std::vector<double>> points, const KMeansOptions& options) {
  if (points.empty()) throw Error("k-means needs at least one point");
  if (options.k == 0) throw Error("k must be at least 1");
  if (options.max_iter == 0) throw Error("max_iter must be at least 1");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw Error("k-means points have inconsistent dimensions");
  }
  const std::size_t distinct = count_distinct(points);
  if (options.k > distinct) {
    throw Error("k = " + std::to_string(options.k) + " exceeds the " + std::to_string(distinct) +
                " distinct points");
  }

  Rng rng(options.seed);
  auto centroids = seed_plus_plus(points, options.k, rng);
  const std::size_t n = points.size();
  std::vector<std::size_t> labels(n);
  std::vector<double> dist(n);
  std::vector<std::size_t> sizes(options.k);

  const auto assign_all = [&] {
    std::size_t changed = 0;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto best = nearest(points[i], centroids);
      if (best.id != labels[i]) ++changed;
      labels[i] = best.id;
      dist[i] = best.distance;
      inertia += best.distance;
    }
    return std::pair{changed, inertia};
  };

  KMeansResult result{ClusterModel(std::vector<std::vector<double>>{{0.0}}), {}, {}, 0, false};
  result.inertia_trace.push_back(assign_all().second);

  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    recompute_means(points, labels, centroids, sizes);

    // Re-seat empty clusters on the worst-served point of a cluster that
    // can spare it.
    bool repaired = false;
    for (std::size_t c = 0; c < options.k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] < 2) continue;
        const double d = squared_distance(points[i], centroids[labels[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) break;
      --sizes[labels[far]];
      labels[far] = c;
      sizes[c] = 1;
      centroids[c] = points[far];
      repaired = true;
    }
    if (repaired) recompute_means(points, labels, centroids, sizes);

    const auto [changed, inertia] = assign_all();
    result.inertia_trace.push_back(inertia);
    result.iterations = iter + 1;
    if (changed == 0 && !repaired) {
      result.converged = true;
      break;
    }
  }

  result.model = ClusterModel(std::move(centroids));
  result.labels = std::move(labels);
  return result;
}

KMeansResult fit_alert_clusters(const AlertLog& log, const Vocabulary& vocab,
                                const KMeansOptions& options, const Featurization& featurization) {
  std::vector<std::vector<double>> points;
  points.reserve(log.size());
  for (const auto& alert : log) points.push_back(featurize(vectorize(alert, vocab), featurization));
  auto result = kmeans_fit(points, options);
  result.model = ClusterModel(result.model.centroids(), featurization);
  return result;
}

std::size_t assign(std::span<const double> point, const ClusterModel& model) {
  if (point.size() != model.vocab_size()) {
    throw Error("vector length " + std::to_string(point.size()) +
                " does not match cluster model dimension " + std::to_string(model.vocab_size()));
  }
  return nearest(point, model.centroids()).id;
}

std::size_t assign(const CountVector& v, const ClusterModel& model) {
  return assign(featurize(v, model.featurization()), model);
}

SymbolSequence alerts_to_sequence(const AlertLog& log, const Vocabulary& vocab,
                                  const ClusterModel& model) {
  if (vocab.size() != model.vocab_size()) {
    throw Error("vocabulary size " + std::to_string(vocab.size()) +
                " does not match cluster model dimension " + std::to_string(model.vocab_size()));
  }
  SymbolSequence seq;
  seq.n_symbols = model.k();
  seq.symbols.reserve(log.size());
  for (const auto& alert : log) {
    seq.symbols.push_back(static_cast<Symbol>(assign(vectorize(alert, vocab), model)));
  }
  return seq;
}

std::vector<std::pair<std::string, double>> describe_cluster(const ClusterModel& model,
                                                             const Vocabulary& vocab,
                                                             std::size_t id, std::size_t top_n) {
  if (id >= model.k()) {
    throw Error("cluster id " + std::to_string(id) + " out of range for k = " +
                std::to_string(model.k()));
  }
  if (vocab.size() != model.vocab_size()) {
    throw Error("vocabulary size " + std::to_string(vocab.size()) +
                " does not match cluster model dimension " + std::to_string(model.vocab_size()));
  }
  const auto& centroid = model.centroids()[id];
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < centroid.size(); ++i) {
    if (centroid[i] > 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return centroid[a] > centroid[b]; });
  order.resize(std::min(order.size(), top_n));

  std::vector<std::pair<std::string, double>> out;
  out.reserve(order.size());
  for (auto i : order) out.emplace_back(vocab.tokens()[i], centroid[i]);
  return out;
}

nlohmann::json to_json(const ClusterModel& model) {
  return {{"k", model.k()},
          {"vocab_size", model.vocab_size()},
          {"featurization",
           {{"binary", model.featurization().binary},
            {"normalize_l2", model.featurization().normalize_l2}}},
          {"centroids", model.centroids()}};
}

ClusterModel cluster_model_from_json(const nlohmann::json& j) {
  try {
    Featurization f;
    if (auto it = j.find("featurization"); it != j.end()) {
      f.binary = it->value("binary", false);
      f.normalize_l2 = it->value("normalize_l2", false);
    }
    ClusterModel model(j.at("centroids").get<std::vector<std::vector<double>>>(), f);
    if (j.at("k").get<std::size_t>() != model.k() ||
        j.at("vocab_size").get<std::size_t>() != model.vocab_size()) {
      throw Error("cluster model header disagrees with its centroids");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad cluster model document: ") + e.what());
  }
}

void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model) {
  detail::write_json_file(path, to_json(model));
}

ClusterModel load_cluster_model(const std::filesystem::path& path) {
  return cluster_model_from_json(detail::read_json_file(path));
}

}  // namespace alertpred
