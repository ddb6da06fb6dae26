#include "oracles.hpp"
#include "scratch.hpp"

#include "wsiseg/bridge.hpp"
#include "wsiseg/cluster.hpp"
#include "wsiseg/errors.hpp"
#include "wsiseg/phantom.hpp"

#include <gtest/gtest.h>

#include <cfloat>
#include <random>
#include <set>

using namespace wsiseg;

namespace {

const std::vector<std::vector<double>> kThreeCentres{{0.0, 0.0}, {10.0, 0.0}, {5.0, 9.0}};

PatchGrid eligible_grid(int n) {
    PatchGrid g;
    g.slide_id = "c";
    g.patch_size = 224;
    g.cols = n;
    g.rows = 2;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < n; ++x) {
            PatchRecord r;
            r.grid_x = x;
            r.grid_y = y;
            r.origin_x = x * 224;
            r.origin_y = y * 224;
            r.label = y == 0 ? PatchLabel::Eligible : PatchLabel::GlassExcluded;
            g.records.push_back(r);
        }
    return g;
}

ClusterModel model_with(std::vector<int> assignment, int k) {
    ClusterModel m;
    m.k = k;
    m.assignment = std::move(assignment);
    return m;
}

}  // namespace

TEST(Objective, SingletonsAreCapped) {
    const std::vector<FeatureVector> f{{0.0, 0.0}, {1.0, 1.0}};
    const std::vector<int> a{0, 1};
    const ObjectiveValue v = cluster_objective(f, a, f);
    EXPECT_TRUE(v.capped);
    EXPECT_EQ(v.value, DBL_MAX);
}

TEST(Objective, IdenticalPointsAreDegenerate) {
    const std::vector<FeatureVector> f(4, FeatureVector{2.0, 2.0});
    const std::vector<int> a{0, 0, 1, 1};
    EXPECT_THROW(cluster_objective(f, a, std::vector<FeatureVector>{{2.0, 2.0}, {2.0, 2.0}}), DegenerateError);
}

TEST(Objective, SixPointGolden) {
    // Centroids (1/3, 1/3) and (16/3, 16/3): W = 8/3, B = 75, CH = (75 / 1) / ((8/3) / 4) = 112.5.
    const std::vector<FeatureVector> f{{0, 0}, {1, 0}, {0, 1}, {5, 5}, {6, 5}, {5, 6}};
    const std::vector<int> a{0, 0, 0, 1, 1, 1};
    const std::vector<FeatureVector> c{{1.0 / 3, 1.0 / 3}, {16.0 / 3, 16.0 / 3}};
    EXPECT_NEAR(within_dispersion(f, a, c), 8.0 / 3, 1e-12);
    const ObjectiveValue v = cluster_objective(f, a, c);
    EXPECT_FALSE(v.capped);
    EXPECT_NEAR(v.value, 112.5, 1e-9);
}

TEST(Objective, EmptyClusterAndBadShapes) {
    const std::vector<FeatureVector> f{{0, 0}, {1, 0}, {3, 3}};
    EXPECT_THROW(cluster_objective(f, std::vector<int>{0, 0, 0}, std::vector<FeatureVector>{{0, 0}, {1, 1}}),
                 DegenerateError);
    EXPECT_THROW(cluster_objective(f, std::vector<int>{0, 1}, std::vector<FeatureVector>{{0, 0}, {1, 1}}), InputError);
    EXPECT_THROW(cluster_objective(f, std::vector<int>{0, 1, 1}, std::vector<FeatureVector>{{0, 0}, {1, 1, 1}}),
                 InputError);
}

TEST(KMeans, KEqualsN) {
    const std::vector<FeatureVector> f{{0, 0}, {3, 1}, {7, 2}, {1, 9}};
    const ClusterModel m = kmeans_assign(f, 4, 1);
    EXPECT_EQ(within_dispersion(f, m.assignment, m.centroids), 0.0);
    EXPECT_EQ(std::set<int>(m.assignment.begin(), m.assignment.end()).size(), 4u);
    EXPECT_THROW(kmeans_assign(f, 5, 1), InputError);
}

TEST(KMeans, TwoPairsMatchExhaustivePartition) {
    const std::vector<FeatureVector> f{{0, 0}, {0, 1}, {10, 10}, {11, 10}};
    // best of all 2-partitions by within-cluster sum of squares
    double best = 1e300;
    int best_mask = 0;
    for (int mask = 1; mask < 15; ++mask) {
        double w = 0.0;
        for (int side = 0; side < 2; ++side) {
            std::vector<double> c(2, 0.0);
            int n = 0;
            for (int i = 0; i < 4; ++i)
                if ((mask >> i & 1) == side) {
                    c[0] += f[i][0];
                    c[1] += f[i][1];
                    ++n;
                }
            c[0] /= n;
            c[1] /= n;
            for (int i = 0; i < 4; ++i)
                if ((mask >> i & 1) == side) w += (f[i][0] - c[0]) * (f[i][0] - c[0]) + (f[i][1] - c[1]) * (f[i][1] - c[1]);
        }
        if (w < best) {
            best = w;
            best_mask = mask;
        }
    }
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ClusterModel m = kmeans_assign(f, 2, seed);
        EXPECT_NEAR(within_dispersion(f, m.assignment, m.centroids), best, 1e-12);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                EXPECT_EQ(m.assignment[i] == m.assignment[j], (best_mask >> i & 1) == (best_mask >> j & 1));
        std::set<std::vector<double>> centroids(m.centroids.begin(), m.centroids.end());
        EXPECT_EQ(centroids, (std::set<std::vector<double>>{{0.0, 0.5}, {10.5, 10.0}}));
    }
}

TEST(KMeans, DeterministicAndMonotone) {
    std::mt19937_64 g(1);
    const auto f = oracle::gaussian_blobs(g, kThreeCentres, 40, 2.0);
    KMeansTrace trace;
    const ClusterModel a = kmeans_assign(f, 4, 99, &trace);
    const ClusterModel b = kmeans_assign(f, 4, 99);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.centroids, b.centroids);
    for (std::size_t i = 1; i < trace.within.size(); ++i) EXPECT_LE(trace.within[i], trace.within[i - 1] + 1e-9);
}

TEST(Evolve, ThreeBlobs) {
    int recovered = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 g(seed);
        const auto f = oracle::gaussian_blobs(g, kThreeCentres, 30, 0.5);
        EvolutionConfig c;
        c.seed = seed;
        const ClusterModel m = evolve_cluster_count(f, c);
        recovered += m.k == 3;
        int best_k = 0;
        double best = -1.0;
        for (int k = c.k_min; k <= c.k_max; ++k) {
            const double v = kmeans_assign(f, k, combine_seed(seed, static_cast<std::uint64_t>(k))).objective.value;
            if (v > best) {
                best = v;
                best_k = k;
            }
        }
        EXPECT_EQ(m.k, best_k) << "seed " << seed;
    }
    EXPECT_GE(recovered, 9);
}

TEST(Evolve, TwoBlobs) {
    std::mt19937_64 g(7);
    const auto f = oracle::gaussian_blobs(g, {{0, 0, 0}, {8, 8, 8}}, 40, 0.7);
    EvolutionConfig c;
    c.seed = 3;
    EXPECT_EQ(evolve_cluster_count(f, c).k, 2);
}

TEST(Evolve, FixedRangeIsPlainKMeans) {
    std::mt19937_64 g(2);
    const auto f = oracle::gaussian_blobs(g, kThreeCentres, 20, 1.0);
    EvolutionConfig c;
    c.k_min = c.k_max = 4;
    c.seed = 11;
    const ClusterModel m = evolve_cluster_count(f, c);
    const ClusterModel direct = kmeans_assign(f, 4, combine_seed(11, 4));
    EXPECT_EQ(m.k, 4);
    EXPECT_EQ(m.assignment, direct.assignment);
    EXPECT_EQ(m.centroids, direct.centroids);
}

TEST(Evolve, ElitismNeverLosesBest) {
    std::mt19937_64 g(3);
    const auto f = oracle::gaussian_blobs(g, {{0, 0}, {6, 0}, {0, 6}, {6, 6}, {3, 12}}, 15, 1.5);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        EvolutionConfig c;
        c.seed = seed;
        c.population = 6;
        c.generations = 8;
        c.mutation_rate = 0.9;
        EvolutionTrace trace;
        const ClusterModel m = evolve_cluster_count(f, c, &trace);
        std::map<int, double> fitness;
        for (const auto& [k, v] : trace.evaluated) fitness[k] = v.value;
        double prev = -1.0;
        for (const auto& gen : trace.generations) {
            ASSERT_EQ(gen.size(), 6u);
            double best = -1.0;
            for (int k : gen) {
                ASSERT_GE(k, c.k_min);
                ASSERT_LE(k, c.k_max);
                best = std::max(best, fitness.at(k));
            }
            ASSERT_GE(best, prev);
            prev = best;
        }
        EXPECT_EQ(fitness.at(m.k), prev);
    }
}

TEST(Evolve, RejectsBadConfig) {
    std::mt19937_64 g(4);
    const auto f = oracle::gaussian_blobs(g, kThreeCentres, 5, 1.0);
    EvolutionConfig c;
    c.k_min = 1;
    EXPECT_THROW(evolve_cluster_count(f, c), ConfigError);
    c.k_min = 5;
    c.k_max = 4;
    EXPECT_THROW(evolve_cluster_count(f, c), ConfigError);
}

TEST(Prototype, ExactAndTies) {
    const std::vector<std::vector<FeatureVector>> ex{{{0, 0}, {2, 0}}, {{4, 0}, {6, 0}}};
    EXPECT_EQ(prototype_classify(ex, {1, 0}), 0);
    EXPECT_EQ(prototype_classify(ex, {5, 0}), 1);
    EXPECT_EQ(prototype_classify(ex, {3, 0}), 0);
    EXPECT_EQ(prototype_classify(ex, {3, 5}), 0);
    EXPECT_THROW(prototype_classify(ex, {3, 5, 1}), InputError);
}

TEST(Prototype, FewShotOnPhantomTextures) {
    HeuristicBackend b;
    auto feats = [&](bool tumor, int seed0, int n) {
        std::vector<PatchInput> in;
        for (int i = 0; i < n; ++i)
            in.push_back({{i, 0}, tumor ? render_tumor_patch(kPatchSize, seed0 + i) : render_stroma_patch(kPatchSize, seed0 + i)});
        return b.extract_features(in);
    };
    const std::vector<std::vector<FeatureVector>> shots{feats(false, 100, 5), feats(true, 200, 5)};
    int correct = 0;
    const auto qs = feats(false, 300, 100), qt = feats(true, 400, 100);
    for (const auto& q : qs) correct += prototype_classify(shots, q) == 0;
    for (const auto& q : qt) correct += prototype_classify(shots, q) == 1;
    EXPECT_GE(correct / 200.0, 0.9);
}

TEST(BalancedSample, Counts) {
    const PatchGrid grid = eligible_grid(9);
    const ClusterModel m = model_with({0, 0, 0, 0, 1, 1, 2, 2, 2}, 3);
    const auto all = balanced_sample(grid, m, 10, 5);
    ASSERT_EQ(all.size(), 9u);
    std::set<int> xs;
    for (const PatchRecord& r : all) xs.insert(r.grid_x);
    EXPECT_EQ(xs.size(), 9u);
    const auto one = balanced_sample(grid, m, 1, 5);
    ASSERT_EQ(one.size(), 3u);
    std::set<int> clusters;
    for (const PatchRecord& r : one) clusters.insert(m.assignment[static_cast<std::size_t>(r.grid_x)]);
    EXPECT_EQ(clusters, (std::set<int>{0, 1, 2}));
    EXPECT_EQ(m.assignment[static_cast<std::size_t>(one[0].grid_x)], 0);
    EXPECT_EQ(balanced_sample(grid, m, 2, 8).size(), 6u);
    EXPECT_EQ(balanced_sample(grid, m, 2, 8), balanced_sample(grid, m, 2, 8));
}

TEST(BalancedSample, MismatchedModel) {
    EXPECT_THROW(balanced_sample(eligible_grid(4), model_with({0, 1, 0}, 2), 1, 0), ConsistencyError);
}

TEST(ClusterModelIo, Roundtrip) {
    std::mt19937_64 g(5);
    const auto f = oracle::gaussian_blobs(g, kThreeCentres, 10, 1.0);
    const ClusterModel m = kmeans_assign(f, 3, 8);
    const Scratch dir("cluster_io");
    write_cluster_model(dir.path / "m.json", m);
    const ClusterModel back = read_cluster_model(dir.path / "m.json");
    EXPECT_EQ(back.k, m.k);
    EXPECT_EQ(back.assignment, m.assignment);
    EXPECT_EQ(back.centroids, m.centroids);
    EXPECT_EQ(back.objective.value, m.objective.value);
    EXPECT_EQ(back.seed, m.seed);
}
