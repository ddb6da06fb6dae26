#include "wsiseg/cluster.hpp"

#include "wsiseg/errors.hpp"
#include "wsiseg/rng.hpp"

#include <json.hpp>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>

namespace wsiseg {

namespace {

std::size_t check_features(std::span<const FeatureVector> features) {
    if (features.empty()) throw InputError("no feature vectors");
    const std::size_t d = features.front().size();
    if (d == 0) throw InputError("feature vectors are empty");
    for (const FeatureVector& f : features) {
        if (f.size() != d) throw InputError("feature vectors differ in dimension");
        for (double v : f) {
            if (!std::isfinite(v)) throw NumericError("non-finite feature value");
        }
    }
    return d;
}

double sq_dist(const FeatureVector& a, const FeatureVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

int nearest(std::span<const FeatureVector> centroids, const FeatureVector& x, double* dist = nullptr) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = sq_dist(x, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist) *dist = best_d;
    return best;
}

}  // namespace

double within_dispersion(std::span<const FeatureVector> features, std::span<const int> assignment,
                         std::span<const FeatureVector> centroids) {
    double w = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        w += sq_dist(features[i], centroids[static_cast<std::size_t>(assignment[i])]);
    }
    return w;
}

ObjectiveValue cluster_objective(std::span<const FeatureVector> features, std::span<const int> assignment,
                                 std::span<const FeatureVector> centroids) {
    const std::size_t d = check_features(features);
    const int k = static_cast<int>(centroids.size());
    const int n = static_cast<int>(features.size());
    if (assignment.size() != features.size()) throw InputError("assignment length differs from the feature count");
    for (const FeatureVector& c : centroids) {
        if (c.size() != d) throw InputError("centroid dimension differs from the features");
    }
    if (k < 2) throw DegenerateError("the objective needs at least two clusters");
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : assignment) {
        if (a < 0 || a >= k) throw InputError("assignment index out of range");
        ++sizes[static_cast<std::size_t>(a)];
    }
    for (int s : sizes) {
        if (s == 0) throw DegenerateError("empty cluster");
    }

    FeatureVector mean(d, 0.0);
    for (const FeatureVector& f : features) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += f[j];
    }
    for (double& m : mean) m /= n;
    double between = 0.0;
    for (int c = 0; c < k; ++c) between += sizes[static_cast<std::size_t>(c)] * sq_dist(centroids[static_cast<std::size_t>(c)], mean);
    const double within = within_dispersion(features, assignment, centroids);

    if (within == 0.0) {
        if (between > 0.0) return {std::numeric_limits<double>::max(), true};
        throw DegenerateError("between- and within-cluster dispersion are both zero");
    }
    return {(between / (k - 1)) / (within / (n - k)), false};
}

ClusterModel kmeans_assign(std::span<const FeatureVector> features, int k, std::uint64_t seed, KMeansTrace* trace) {
    const std::size_t d = check_features(features);
    const int n = static_cast<int>(features.size());
    if (k < 1) throw ConfigError("k must be at least 1");
    if (n < k) throw InputError("cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) + " points");
    Rng rng(seed);

    std::vector<FeatureVector> centroids;
    std::vector<std::uint8_t> chosen(static_cast<std::size_t>(n), 0);
    const int first = rng.uniform_int(0, n - 1);
    centroids.push_back(features[static_cast<std::size_t>(first)]);
    chosen[static_cast<std::size_t>(first)] = 1;
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(features[static_cast<std::size_t>(i)], centroids[0]);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        int pick = -1;
        if (total > 0.0) {
            double r = rng.uniform(0.0, total);
            for (int i = 0; i < n; ++i) {
                r -= d2[static_cast<std::size_t>(i)];
                if (r < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {
                for (int i = n - 1; i >= 0; --i) {
                    if (d2[static_cast<std::size_t>(i)] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        } else {
            std::vector<int> free;
            for (int i = 0; i < n; ++i) {
                if (!chosen[static_cast<std::size_t>(i)]) free.push_back(i);
            }
            pick = free[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(free.size()) - 1))];
        }
        chosen[static_cast<std::size_t>(pick)] = 1;
        centroids.push_back(features[static_cast<std::size_t>(pick)]);
        for (int i = 0; i < n; ++i) {
            d2[static_cast<std::size_t>(i)] =
                std::min(d2[static_cast<std::size_t>(i)], sq_dist(features[static_cast<std::size_t>(i)], centroids.back()));
        }
    }

    std::vector<int> assignment(static_cast<std::size_t>(n), 0);
    std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
    auto assign_all = [&] {
        for (int i = 0; i < n; ++i) {
            assignment[static_cast<std::size_t>(i)] = nearest(centroids, features[static_cast<std::size_t>(i)], &dist[static_cast<std::size_t>(i)]);
        }
    };
    // Means of the current assignment; an empty cluster takes over the point
    // farthest from its own centroid.
    auto update = [&] {
        std::vector<FeatureVector> next(static_cast<std::size_t>(k), FeatureVector(d, 0.0));
        std::vector<int> sizes(static_cast<std::size_t>(k), 0);
        for (int c = 0;; ++c) {
            std::fill(sizes.begin(), sizes.end(), 0);
            for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];
            const auto empty = std::find(sizes.begin(), sizes.end(), 0);
            if (empty == sizes.end() || c > k) break;
            int far = -1;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                if (sizes[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])] > 1 && dist[static_cast<std::size_t>(i)] > far_d) {
                    far_d = dist[static_cast<std::size_t>(i)];
                    far = i;
                }
            }
            if (far < 0) break;
            assignment[static_cast<std::size_t>(far)] = static_cast<int>(empty - sizes.begin());
            dist[static_cast<std::size_t>(far)] = 0.0;
        }
        for (int i = 0; i < n; ++i) {
            FeatureVector& acc = next[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])];
            for (std::size_t j = 0; j < d; ++j) acc[j] += features[static_cast<std::size_t>(i)][j];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<std::size_t>(c)] == 0) {
                next[static_cast<std::size_t>(c)] = centroids[static_cast<std::size_t>(c)];
                continue;
            }
            for (double& v : next[static_cast<std::size_t>(c)]) v /= sizes[static_cast<std::size_t>(c)];
            shift = std::max(shift, std::sqrt(sq_dist(next[static_cast<std::size_t>(c)], centroids[static_cast<std::size_t>(c)])));
        }
        centroids = std::move(next);
        return shift;
    };

    for (int iter = 0; iter < 300; ++iter) {
        assign_all();
        const double shift = update();
        if (trace) trace->within.push_back(within_dispersion(features, assignment, centroids));
        if (shift < 1e-6) break;
    }

    ClusterModel model;
    model.k = k;
    model.seed = seed;
    model.centroids = std::move(centroids);
    model.assignment = std::move(assignment);
    if (k >= 2) {
        try {
            model.objective = cluster_objective(features, model.assignment, model.centroids);
        } catch (const DegenerateError&) {
            model.objective = {std::numeric_limits<double>::quiet_NaN(), false};
        }
    }
    return model;
}

ClusterModel evolve_cluster_count(std::span<const FeatureVector> features, const EvolutionConfig& cfg,
                                  EvolutionTrace* trace) {
    if (cfg.k_min < 2) throw ConfigError("k_min must be at least 2");
    if (cfg.k_max < cfg.k_min) throw ConfigError("k_max must not be below k_min");
    if (cfg.population < 4) throw ConfigError("population must be at least 4");
    if (cfg.generations < 1) throw ConfigError("generations must be at least 1");
    if (!(cfg.mutation_rate >= 0.0 && cfg.mutation_rate <= 1.0)) throw ConfigError("mutation_rate must lie in [0, 1]");
    check_features(features);
    if (static_cast<int>(features.size()) < cfg.k_max) throw InputError("fewer points than k_max");

    std::map<int, ClusterModel> models;
    auto fitness = [&](int k) {
        const double v = models.at(k).objective.value;
        return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    };
    // Candidate a beats b on higher fitness, then on smaller k.
    auto better = [&](int a, int b) {
        const double fa = fitness(a);
        const double fb = fitness(b);
        return fa != fb ? fa > fb : a < b;
    };
    auto evaluate = [&](const std::vector<int>& population) {
        std::vector<int> fresh;
        for (int k : population) {
            if (!models.count(k) && std::find(fresh.begin(), fresh.end(), k) == fresh.end()) fresh.push_back(k);
        }
        std::vector<ClusterModel> out(fresh.size());
        tbb::parallel_for(std::size_t{0}, fresh.size(), [&](std::size_t i) {
            out[i] = kmeans_assign(features, fresh[i], combine_seed(cfg.seed, static_cast<std::uint64_t>(fresh[i])));
        });
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            if (trace) trace->evaluated.emplace_back(fresh[i], out[i].objective);
            models.emplace(fresh[i], std::move(out[i]));
        }
        if (trace) trace->generations.push_back(population);
    };

    Rng rng(cfg.seed);
    std::vector<int> population(static_cast<std::size_t>(cfg.population));
    for (int& k : population) k = rng.uniform_int(cfg.k_min, cfg.k_max);
    evaluate(population);
    int best = population.front();
    for (int k : population) {
        if (better(k, best)) best = k;
    }

    for (int g = 1; g < cfg.generations; ++g) {
        std::vector<int> next;
        next.reserve(population.size());
        int elite = population.front();
        for (int k : population) {
            if (better(k, elite)) elite = k;
        }
        next.push_back(elite);
        while (next.size() < population.size()) {
            const int a = population[static_cast<std::size_t>(rng.uniform_int(0, cfg.population - 1))];
            const int b = population[static_cast<std::size_t>(rng.uniform_int(0, cfg.population - 1))];
            int child = better(a, b) ? a : b;
            if (rng.coin(cfg.mutation_rate)) {
                child += rng.coin(0.5) ? 1 : -1;
                if (child < cfg.k_min) child = std::min(cfg.k_min + 1, cfg.k_max);
                if (child > cfg.k_max) child = std::max(cfg.k_max - 1, cfg.k_min);
            }
            next.push_back(child);
        }
        population = std::move(next);
        evaluate(population);
        for (int k : population) {
            if (better(k, best)) best = k;
        }
    }
    if (std::isinf(fitness(best))) throw DegenerateError("no cluster count yields a defined objective");
    return models.at(best);
}

std::vector<FeatureVector> class_prototypes(std::span<const std::vector<FeatureVector>> examples) {
    if (examples.empty()) throw InputError("no classes given");
    std::vector<FeatureVector> protos;
    std::size_t d = 0;
    for (const auto& cls : examples) {
        if (cls.empty()) throw InputError("every class needs at least one example");
        if (d == 0) d = cls.front().size();
        FeatureVector p(d, 0.0);
        for (const FeatureVector& f : cls) {
            if (f.size() != d) throw InputError("example dimensions differ");
            for (std::size_t j = 0; j < d; ++j) p[j] += f[j];
        }
        for (double& v : p) v /= static_cast<double>(cls.size());
        protos.push_back(std::move(p));
    }
    return protos;
}

int nearest_prototype(std::span<const FeatureVector> prototypes, const FeatureVector& query) {
    if (prototypes.empty()) throw InputError("no prototypes");
    for (const FeatureVector& p : prototypes) {
        if (p.size() != query.size()) throw InputError("query dimension differs from the prototypes");
    }
    return nearest(prototypes, query);
}

int prototype_classify(std::span<const std::vector<FeatureVector>> examples, const FeatureVector& query) {
    const auto protos = class_prototypes(examples);
    return nearest_prototype(protos, query);
}

std::vector<PatchRecord> balanced_sample(const PatchGrid& grid, const ClusterModel& model, int per_cluster,
                                         std::uint64_t seed) {
    if (per_cluster < 0) throw ConfigError("per_cluster must be >= 0");
    const std::vector<std::size_t> eligible = grid.eligible_indices();
    if (model.assignment.size() != eligible.size()) {
        throw ConsistencyError("cluster model covers " + std::to_string(model.assignment.size()) +
                               " patches but the grid has " + std::to_string(eligible.size()) + " eligible");
    }
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(model.k));
    for (std::size_t i = 0; i < eligible.size(); ++i) {
        const int c = model.assignment[i];
        if (c < 0 || c >= model.k) throw ConsistencyError("assignment index out of range");
        members[static_cast<std::size_t>(c)].push_back(eligible[i]);
    }
    std::vector<PatchRecord> out;
    for (int c = 0; c < model.k; ++c) {
        auto& m = members[static_cast<std::size_t>(c)];
        Rng rng(combine_seed(seed, static_cast<std::uint64_t>(c)));
        const std::size_t take = std::min(m.size(), static_cast<std::size_t>(per_cluster));
        for (std::size_t i = 0; i < take; ++i) {
            const int j = rng.uniform_int(static_cast<int>(i), static_cast<int>(m.size()) - 1);
            std::swap(m[i], m[static_cast<std::size_t>(j)]);
            out.push_back(grid.records[m[i]]);
        }
    }
    return out;
}

void write_cluster_model(const std::filesystem::path& path, const ClusterModel& m) {
    nlohmann::json j;
    j["k"] = m.k;
    j["seed"] = m.seed;
    j["centroids"] = m.centroids;
    j["assignment"] = m.assignment;
    j["objective"] = std::isnan(m.objective.value) ? nlohmann::json(nullptr) : nlohmann::json(m.objective.value);
    j["objective_capped"] = m.objective.capped;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

ClusterModel read_cluster_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        ClusterModel m;
        m.k = j.at("k").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.centroids = j.at("centroids").get<std::vector<FeatureVector>>();
        m.assignment = j.at("assignment").get<std::vector<int>>();
        m.objective.value = j.at("objective").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                        : j.at("objective").get<double>();
        m.objective.capped = j.value("objective_capped", false);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed cluster model " + path.string() + ": " + e.what());
    }
}

}  // namespace wsiseg
