#include "kmland/analysis.hpp"

#include "networks.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace kmland;

namespace {

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int k) {
    std::uniform_int_distribution<int> u(0, k - 1);
    std::vector<int> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

std::vector<bool> flags(std::size_t n_original, std::size_t n_outliers) {
    std::vector<bool> f(n_original, false);
    f.resize(n_original + n_outliers, true);
    return f;
}

Dataset iris() { return load_csv(std::string(KMLAND_DATA_DIR) + "/iris.csv", "class"); }

}  // namespace

TEST(RandIndex, Examples) {
    EXPECT_DOUBLE_EQ(rand_index({0, 1, 1, 2}, {0, 1, 1, 2}), 1.0);
    EXPECT_DOUBLE_EQ(rand_index({0, 0, 1, 1}, {0, 1, 1, 1}), 0.5);
    EXPECT_DOUBLE_EQ(rand_index({0, 0, 1, 2}, {2, 2, 0, 1}), 1.0);
}

TEST(AdjustedRandIndex, Examples) {
    EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 0}, {1, 1, 1}), 1.0);
}

TEST(AdjustedRandIndex, Errors) {
    EXPECT_THROW(rand_index({0}, {0}), PreconditionError);
    EXPECT_THROW(adjusted_rand_index({0, 1}, {0, 1, 1}), PreconditionError);
}

TEST(AdjustedRandIndex, MatchesPairCountOracle) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 500; ++trial) {
        const auto n = static_cast<std::size_t>(std::uniform_int_distribution<int>(2, 12)(rng));
        const int ka = std::uniform_int_distribution<int>(1, 4)(rng);
        const int kb = std::uniform_int_distribution<int>(1, 4)(rng);
        const auto a = random_labels(rng, n, ka), b = random_labels(rng, n, kb);
        EXPECT_NEAR(rand_index(a, b), oracle::rand_index(a, b), 1e-12);
        EXPECT_NEAR(adjusted_rand_index(a, b), oracle::adjusted_rand_index(a, b), 1e-12);
    }
}

TEST(AdjustedRandIndex, SymmetricAndRelabelInvariant) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_labels(rng, 10, 3), b = random_labels(rng, 10, 4);
        std::vector<int> b2 = b;
        for (auto& x : b2) x = 7 - 2 * x;
        EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(b, a), 1e-14);
        EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(a, b2), 1e-14);
        EXPECT_NEAR(rand_index(a, b), rand_index(b2, a), 1e-14);
    }
}

TEST(AdjustedRandIndex, NearZeroForRandomPermutations) {
    std::mt19937_64 rng(9);
    std::vector<int> a(60), b(60);
    for (int i = 0; i < 60; ++i) {
        a[static_cast<std::size_t>(i)] = i % 3;
        b[static_cast<std::size_t>(i)] = (i / 20 + i % 2) % 3;
    }
    double sum = 0.0;
    for (int t = 0; t < 10000; ++t) {
        std::shuffle(b.begin(), b.end(), rng);
        sum += adjusted_rand_index(a, b);
    }
    EXPECT_LT(std::abs(sum / 10000), 0.02);
}

TEST(Accuracy, GroundTruthScoresOne) {
    const Dataset d = iris();
    EXPECT_DOUBLE_EQ(accuracy(*d.ground_truth, d), 1.0);
}

TEST(Accuracy, IgnoresOutlierRows) {
    const Dataset d = iris();
    std::mt19937_64 rng(3);
    const auto labels = random_labels(rng, static_cast<std::size_t>(d.size()), 3);
    const std::vector<Vector> extra{Vector::Constant(4, 20.0), Vector::Constant(4, -5.0)};
    const Dataset with = append_outliers(d, extra);
    auto extended = labels;
    extended.push_back(0);
    extended.push_back(2);
    EXPECT_DOUBLE_EQ(accuracy(extended, with), accuracy(labels, d));
}

TEST(Accuracy, NeedsGroundTruth) {
    Dataset d = iris();
    d.ground_truth.reset();
    EXPECT_THROW(accuracy(Assignment(150, 0), d), PreconditionError);
}

TEST(StructureTypes, CountsAreIntegerPartitionSums) {
    const std::vector<std::size_t> expected{1, 2, 4, 7, 12};
    for (int o = 0; o <= 4; ++o) EXPECT_EQ(structure_types(o).size(), expected[static_cast<std::size_t>(o)]);
}

TEST(StructureTypes, CanonicalOrderForFourOutliers) {
    const std::vector<std::vector<int>> groups{{},     {1},       {1, 1},    {2},    {1, 1, 1}, {1, 2},
                                               {3},    {1, 1, 1, 1}, {1, 1, 2}, {2, 2}, {1, 3},    {4}};
    const auto types = structure_types(4);
    ASSERT_EQ(types.size(), groups.size());
    for (std::size_t i = 0; i < types.size(); ++i) {
        EXPECT_EQ(types[i].group_sizes, groups[i]);
        EXPECT_EQ(types[i].canonical_id, static_cast<int>(i));
        int grouped = 0;
        for (int g : groups[i]) grouped += g;
        EXPECT_EQ(types[i].absorbed_count + grouped, 4);
    }
}

TEST(StructureType, ClassifiesSyntheticAssignments) {
    // Four original points in clusters 0 and 1, then four outliers.
    const auto f = flags(4, 4);
    struct Case {
        Assignment labels;
        int absorbed;
        std::vector<int> groups;
    };
    const std::vector<Case> cases{
        {{0, 0, 1, 1, 0, 1, 0, 1}, 4, {}},
        {{0, 0, 1, 1, 2, 0, 0, 1}, 3, {1}},
        {{0, 0, 1, 1, 2, 3, 1, 1}, 2, {1, 1}},
        {{0, 0, 1, 1, 2, 2, 0, 0}, 2, {2}},
        {{0, 0, 1, 1, 2, 3, 3, 4}, 0, {1, 1, 2}},
        {{0, 0, 1, 1, 2, 2, 3, 3}, 0, {2, 2}},
        {{0, 0, 1, 1, 2, 2, 2, 2}, 0, {4}},
        {{0, 0, 0, 0, 1, 1, 1, 2}, 0, {1, 3}},
    };
    for (const auto& c : cases) {
        const StructureType t = structure_type(c.labels, f);
        EXPECT_EQ(t.absorbed_count, c.absorbed);
        EXPECT_EQ(t.group_sizes, c.groups);
        EXPECT_EQ(t.canonical_id, canonical_structure_id(4, c.absorbed, c.groups));
    }
    EXPECT_EQ(structure_type(Assignment{0, 0, 1, 1, 0, 1, 0, 1}, f).canonical_id, 0);
}

TEST(StructureType, NoOutliersIsSoleType) {
    const StructureType t = structure_type(Assignment{0, 1, 2}, flags(3, 0));
    EXPECT_EQ(t, (StructureType{0, {}, 0}));
}

TEST(StructureType, InvariantUnderRelabelAndOutlierOrder) {
    std::mt19937_64 rng(17);
    const auto f = flags(6, 4);
    for (int trial = 0; trial < 200; ++trial) {
        const auto labels = random_labels(rng, 10, 5);
        const StructureType t = structure_type(labels, f);
        std::vector<int> perm{0, 1, 2, 3, 4};
        std::shuffle(perm.begin(), perm.end(), rng);
        auto relabelled = labels;
        for (auto& x : relabelled) x = perm[static_cast<std::size_t>(x)];
        std::shuffle(relabelled.begin() + 6, relabelled.end(), rng);
        EXPECT_EQ(structure_type(relabelled, f), t);
    }
}

TEST(PartitionSignature, CountsClustersHoldingClass) {
    const Dataset d = iris();
    const Assignment truth(d.ground_truth->begin(), d.ground_truth->end());
    EXPECT_EQ(partition_signature(truth, d, d.class_names[0]), 1);
    Assignment split = truth;
    int seen = 0;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if ((*d.ground_truth)[i] == 0) split[i] = seen++ % 3;
    }
    EXPECT_EQ(partition_signature(split, d, d.class_names[0]), 3);
    EXPECT_THROW(partition_signature(truth, d, "no-such-class"), PreconditionError);
}

TEST(Superbasins, ThresholdCases) {
    nets::Synthetic s;
    nets::add_minimum(s, 0.0);
    nets::add_minimum(s, 1.0);
    nets::add_minimum(s, 2.0);
    nets::add_ts(s, 0, 1, 5.0);
    EXPECT_EQ(superbasins(s.net, 4.9).size(), 3u);
    EXPECT_EQ(superbasins(s.net, 5.1), (std::vector<std::vector<int>>{{0, 1}, {2}}));
    EXPECT_EQ(superbasins(s.net, 100.0).size(), static_cast<std::size_t>(component_count(s.net)));
    EXPECT_EQ(superbasins(s.net, -1.0).size(), 3u);
}

TEST(Disconnectivity, TwoMinimaBranchBetweenBracketingLevels) {
    nets::Synthetic s;
    nets::add_minimum(s, 0.0);
    nets::add_minimum(s, 1.0);
    nets::add_ts(s, 0, 1, 3.3);
    const auto tree = build_disconnectivity(s.net, 11, 0.0, 5.0);
    for (std::size_t l = 0; l < tree.levels.size(); ++l) {
        const bool merged = tree.basin_of[l][0] == tree.basin_of[l][1];
        EXPECT_EQ(merged, tree.levels[l] > 3.3) << tree.levels[l];
    }
    EXPECT_EQ(check_refinement(tree), -1);
}

TEST(Disconnectivity, ThreeMinimumTreeMatchesHandConstruction) {
    // A(0) -3- B(1) -5- C(2), thresholds 6.5 down to 0.5.
    nets::Synthetic s;
    nets::add_minimum(s, 0.0);
    nets::add_minimum(s, 1.0);
    nets::add_minimum(s, 2.0);
    nets::add_ts(s, 0, 1, 3.0);
    nets::add_ts(s, 1, 2, 5.0);
    const auto tree = build_disconnectivity(s.net, 7, 0.5, 6.5);
    const std::vector<std::vector<std::vector<int>>> basins{
        {{0, 1, 2}}, {{0, 1, 2}}, {{0, 1}, {2}}, {{0, 1}, {2}}, {{0}, {1}, {2}}, {{0}, {1}, {2}}, {{0}, {1}, {2}}};
    ASSERT_EQ(tree.levels.size(), 7u);
    for (std::size_t l = 0; l < 7; ++l) {
        EXPECT_NEAR(tree.levels[l], 6.5 - static_cast<double>(l), 1e-12);
        std::vector<std::vector<int>> got;
        for (const auto& n : tree.nodes) {
            if (n.level == static_cast<int>(l)) got.push_back(n.members);
        }
        EXPECT_EQ(got, basins[l]) << "level " << l;
    }
    EXPECT_EQ(check_refinement(tree), -1);
    const auto layout = layout_disconnectivity(tree);
    // Largest basin first: A and B to the left of C.
    EXPECT_LT(layout.leaf_x[0], layout.leaf_x[2]);
    EXPECT_LT(layout.leaf_x[1], layout.leaf_x[2]);
}

TEST(Disconnectivity, RefinementOnRandomNetworks) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = nets::random_network(rng, 8, 14);
        const auto tree = build_disconnectivity(s.net);
        EXPECT_EQ(tree.levels.size(), 100u);
        EXPECT_EQ(check_refinement(tree), -1);
        EXPECT_EQ(tree.nodes.front().members.size(), 8u);
        for (std::size_t l = 1; l < tree.levels.size(); ++l) EXPECT_LT(tree.levels[l], tree.levels[l - 1]);
    }
}

TEST(Disconnectivity, Errors) {
    nets::Synthetic s;
    nets::add_minimum(s, 10.0);
    EXPECT_THROW(build_disconnectivity(s.net, 1, 0.0, 1.0), PreconditionError);
    EXPECT_THROW(build_disconnectivity(s.net, 5, 2.0, 1.0), PreconditionError);
    EXPECT_THROW(build_disconnectivity(s.net, 5, 0.0, 5.0), PreconditionError);
}

TEST(Disconnectivity, SingleMinimumIsOneVerticalLine) {
    nets::Synthetic s;
    nets::add_minimum(s, 2.0);
    const auto tree = build_disconnectivity(s.net);
    const auto layout = layout_disconnectivity(tree);
    ASSERT_FALSE(layout.segments.empty());
    for (const auto& seg : layout.segments) EXPECT_EQ(seg.x1, seg.x2);
    const auto svg = disconnectivity_svg(tree, layout, {});
    std::size_t leaves = 0;
    for (auto p = svg.find("class=\"leaf\""); p != std::string::npos; p = svg.find("class=\"leaf\"", p + 1)) ++leaves;
    EXPECT_EQ(leaves, 1u);
}

TEST(Disconnectivity, EmitWritesSvgAndSidecar) {
    std::mt19937_64 rng(4);
    const auto s = nets::random_network(rng, 7, 10);
    const auto tree = build_disconnectivity(s.net);
    const auto path = (std::filesystem::temp_directory_path() / "kmland_dgraph_test.svg").string();
    emit_disconnectivity(tree, {std::vector<double>(7, 1.0), true}, path);
    std::ifstream in(path);
    const std::string svg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    std::ifstream side_in(path + ".json");
    const auto side = nlohmann::json::parse(side_in);
    ASSERT_EQ(side["leaves"].size(), 7u);
    for (const auto& leaf : side["leaves"]) EXPECT_EQ(leaf["colour"], side["leaves"][0]["colour"]);
    EXPECT_EQ(side["levels"].size(), 100u);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}

TEST(Frustration, Limits) {
    const std::vector<double> grid{0.01, 0.1, 1.0, 10.0};
    for (double s : frustration_profile({3.0}, grid).entropy) EXPECT_EQ(s, 0.0);
    for (double s : frustration_profile({2.0, 2.0}, grid).entropy) EXPECT_NEAR(s, std::log(2.0), 1e-15);
    const std::vector<double> costs{0.0, 1.0, 2.5, 7.0};
    EXPECT_NEAR(frustration_profile(costs, {1e9}).entropy[0], std::log(4.0), 1e-8);
    EXPECT_NEAR(frustration_profile(costs, {1e-3}).entropy[0], 0.0, 1e-12);
    EXPECT_THROW(frustration_profile(std::vector<double>{}, grid), PreconditionError);
    EXPECT_THROW(frustration_profile(costs, {0.0}), PreconditionError);
}

TEST(Frustration, PointwiseAndBounded) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<double> costs(30);
    for (auto& c : costs) c = u(rng);
    std::vector<double> coarse, fine;
    for (int i = 0; i <= 10; ++i) coarse.push_back(std::pow(10.0, -2.0 + 0.4 * i));
    for (double t : coarse) {
        for (int j = 0; j < 4; ++j) fine.push_back(t * std::pow(10.0, 0.1 * j));
    }
    const auto a = frustration_profile(costs, coarse), b = frustration_profile(costs, fine);
    for (std::size_t i = 0; i < coarse.size(); ++i) {
        EXPECT_EQ(a.entropy[i], b.entropy[4 * i]);
        EXPECT_GE(a.entropy[i], 0.0);
        EXPECT_LE(a.entropy[i], std::log(30.0));
    }
}
