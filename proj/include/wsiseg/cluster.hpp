#pragma once

#include "wsiseg/tissue_grid.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace wsiseg {

using FeatureVector = std::vector<double>;

struct ObjectiveValue {
    double value = 0.0;
    bool capped = false;  // within-cluster dispersion was zero; value is the largest finite double
};

struct ClusterModel {
    int k = 0;
    std::vector<FeatureVector> centroids;
    std::vector<int> assignment;
    ObjectiveValue objective;
    std::uint64_t seed = 0;
};

/// Calinski-Harabasz ratio (B / (k - 1)) / (W / (n - k)) of between- and
/// within-cluster sums of squares. Throws DegenerateError for an empty cluster
/// or when both dispersions vanish, InputError on inconsistent dimensions.
ObjectiveValue cluster_objective(std::span<const FeatureVector> features, std::span<const int> assignment,
                                 std::span<const FeatureVector> centroids);

/// Sum of squared distances to assigned centroids.
double within_dispersion(std::span<const FeatureVector> features, std::span<const int> assignment,
                         std::span<const FeatureVector> centroids);

struct KMeansTrace {
    std::vector<double> within;  // dispersion after each Lloyd iteration
};

/// k-means++ seeding followed by Lloyd iterations until every centroid moves
/// less than 1e-6 or 300 iterations have run. Empty clusters are reseeded
/// with the point farthest from its centroid. Throws InputError when n < k.
/// The objective is filled in only when k >= 2 and defined.
ClusterModel kmeans_assign(std::span<const FeatureVector> features, int k, std::uint64_t seed,
                           KMeansTrace* trace = nullptr);

struct EvolutionConfig {
    int population = 16;
    int generations = 20;
    int k_min = 2;
    int k_max = 8;
    double mutation_rate = 0.3;
    std::uint64_t seed = 0;
};

struct EvolutionTrace {
    std::vector<std::vector<int>> generations;  // k values of each population
    std::vector<std::pair<int, ObjectiveValue>> evaluated;  // every distinct k, in first-evaluation order
};

/// Genetic search over the cluster count: fitness of k is the objective of
/// kmeans_assign(features, k, combine_seed(seed, k)); binary tournament
/// selection, +-1 mutation, best individual carried over unchanged.
ClusterModel evolve_cluster_count(std::span<const FeatureVector> features, const EvolutionConfig& config,
                                  EvolutionTrace* trace = nullptr);

/// Nearest class prototype (mean of that class's examples); ties go to the
/// lowest class index. `examples[c]` holds the examples of class c.
int prototype_classify(std::span<const std::vector<FeatureVector>> examples, const FeatureVector& query);
std::vector<FeatureVector> class_prototypes(std::span<const std::vector<FeatureVector>> examples);
int nearest_prototype(std::span<const FeatureVector> prototypes, const FeatureVector& query);

/// `model.assignment[i]` is the cluster of the i-th entry of
/// `grid.eligible_indices()`. Returns up to `per_cluster` uniformly drawn
/// records of each cluster, grouped by cluster in ascending order.
std::vector<PatchRecord> balanced_sample(const PatchGrid& grid, const ClusterModel& model, int per_cluster,
                                         std::uint64_t seed);

void write_cluster_model(const std::filesystem::path& path, const ClusterModel& model);
ClusterModel read_cluster_model(const std::filesystem::path& path);

}  // namespace wsiseg
