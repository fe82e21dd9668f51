#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "alertpred/alert.hpp"
#include "alertpred/bow.hpp"
#include "alertpred/sequence.hpp"

namespace alertpred {

// How a CountVector becomes a point in clustering space.
struct Featurization {
  bool binary = false;        // presence instead of counts
  bool normalize_l2 = false;  // scale each point to unit length

  bool operator==(const Featurization&) const = default;
};

std::vector<double> featurize(const CountVector& v, const Featurization& f);

class ClusterModel {
 public:
  // Throws Error if centroids is empty, ragged or non-finite.
  ClusterModel(std::vector<std::vector<double>> centroids, Featurization featurization = {});

  std::size_t k() const noexcept { return centroids_.size(); }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  const std::vector<std::vector<double>>& centroids() const noexcept { return centroids_; }
  const Featurization& featurization() const noexcept { return featurization_; }

  bool operator==(const ClusterModel&) const = default;

 private:
  std::vector<std::vector<double>> centroids_;
  std::size_t vocab_size_ = 0;
  Featurization featurization_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

struct KMeansOptions {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::size_t max_iter = 300;
};

struct KMeansResult {
  ClusterModel model;
  std::vector<std::size_t> labels;
  // Inertia after every assignment step; entry 0 follows seeding.
  std::vector<double> inertia_trace;
  std::size_t iterations = 0;
  bool converged = false;
};

// Lloyd's algorithm with k-means++ seeding. A cluster left empty is
// re-seated on the point farthest from its own centroid. Throws when the
// input is empty, ragged, or k exceeds the number of distinct points.
KMeansResult kmeans_fit(std::span<const std::vector<double>> points, const KMeansOptions& options);

// Featurizes every alert and fits; the model records the featurization.
KMeansResult fit_alert_clusters(const AlertLog& log, const Vocabulary& vocab,
                                const KMeansOptions& options, const Featurization& featurization = {});

// Nearest centroid by squared Euclidean distance, ties to the lower id.
std::size_t assign(std::span<const double> point, const ClusterModel& model);
std::size_t assign(const CountVector& v, const ClusterModel& model);

SymbolSequence alerts_to_sequence(const AlertLog& log, const Vocabulary& vocab,
                                  const ClusterModel& model);

// Highest-weight tokens of one centroid, descending, ties to the lower
// vocabulary index. Zero-weight tokens are never listed.
std::vector<std::pair<std::string, double>> describe_cluster(const ClusterModel& model,
                                                             const Vocabulary& vocab,
                                                             std::size_t id, std::size_t top_n);

std::size_t count_distinct(std::span<const std::vector<double>> points);

nlohmann::json to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& j);
void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model);
ClusterModel load_cluster_model(const std::filesystem::path& path);

}  // namespace alertpred
