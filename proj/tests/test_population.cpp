#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "explab/population.hpp"

using namespace explab;

static VectorXd vec2(double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
}

TEST_CASE("gaussian mixture: determinism and basic structure") {
    std::vector<VectorXd> means = {VectorXd::Zero(4), VectorXd::Ones(4)};
    auto p1 = gen_gaussian_mixture(2, 4, means, {0.5, 0.5}, 10, 42);
    auto p2 = gen_gaussian_mixture(2, 4, means, {0.5, 0.5}, 10, 42);
    REQUIRE(p1.size() == 20);
    for (int i = 0; i < p1.size(); ++i) {
        CHECK(p1.points[i] == p2.points[i]);
        CHECK(p1.labels[i] == p2.labels[i]);
    }
    auto p3 = gen_gaussian_mixture(2, 4, means, {0.5, 0.5}, 10, 43);
    CHECK(p1.points[0] != p3.points[0]);
}

TEST_CASE("gaussian mixture: single class, three points") {
    auto p = gen_gaussian_mixture(1, 3, {VectorXd::Zero(3)}, {1.0}, 3, 7);
    REQUIRE(p.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(p.labels[i] == 1);
        CHECK(p.masses[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    }
}

TEST_CASE("gaussian mixture: rejects bad means") {
    CHECK_THROWS(gen_gaussian_mixture(2, 4, {VectorXd::Zero(3), VectorXd::Zero(4)},
                                      {0.5, 0.5}, 5, 1));
}

TEST_CASE("two moons: zero noise lies on the half-circles") {
    auto p = gen_two_moons(50, 0.0, VectorXd::Zero(2), 5);
    for (int i = 0; i < p.size(); ++i) {
        const VectorXd& x = p.points[i];
        if (p.labels[i] == 1) {
            CHECK(x.norm() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(x[1] >= 0.0);
        } else {
            CHECK((x - vec2(1.0, 0.5)).norm() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(x[1] <= 0.5);
        }
    }
}

TEST_CASE("two moons: shift translates the whole cloud") {
    auto a = gen_two_moons(30, 0.05, VectorXd::Zero(2), 9);
    auto b = gen_two_moons(30, 0.05, vec2(2.0, -1.0), 9);
    for (int i = 0; i < a.size(); ++i)
        CHECK((b.points[i] - a.points[i] - vec2(2.0, -1.0)).norm() < 1e-12);
}

TEST_CASE("two moons: classes stay separated at moderate noise") {
    // oracle: exhaustive pairwise distance scan
    auto p = gen_two_moons(400, 0.08, VectorXd::Zero(2), 11);
    double dmin = 1e300;
    for (int i = 0; i < p.size(); ++i)
        for (int j = 0; j < p.size(); ++j)
            if (p.labels[i] != p.labels[j])
                dmin = std::min(dmin, (p.points[i] - p.points[j]).norm());
    CHECK(dmin > 0.0);
}

TEST_CASE("neighborhood graph: tiny radius keeps only self-loops") {
    auto p = gen_two_moons(20, 0.0, VectorXd::Zero(2), 3);
    double dmin = 1e300;
    for (int i = 0; i < p.size(); ++i)
        for (int j = i + 1; j < p.size(); ++j)
            dmin = std::min(dmin, (p.points[i] - p.points[j]).norm());
    auto g = build_neighborhood_graph(p, TransformSpec::identity_only(dmin / 4));
    for (int i = 0; i < g.size(); ++i) {
        CHECK(g.b_adj[i] == std::vector<int>{i});
        CHECK(g.n_adj[i] == std::vector<int>{i});
    }
}

TEST_CASE("neighborhood graph: collinear points spaced r apart") {
    FinitePopulation p;
    p.dim = 1;
    p.num_classes = 1;
    const double r = 0.5;
    for (int i = 0; i < 3; ++i) {
        VectorXd x(1);
        x << i * r;
        p.points.push_back(x);
        p.masses.push_back(1.0 / 3);
        p.labels.push_back(1);
    }
    auto g = build_neighborhood_graph(p, TransformSpec::identity_only(r));
    // distance between the endpoints is exactly 2r, so everything overlaps
    CHECK(g.n_adj[0] == std::vector<int>({0, 1, 2}));
    CHECK(g.n_adj[1] == std::vector<int>({0, 1, 2}));
    CHECK(g.n_adj[2] == std::vector<int>({0, 1, 2}));
    // b-edges only reach distance r
    CHECK(g.b_adj[0] == std::vector<int>({0, 1}));
    CHECK(g.b_adj[2] == std::vector<int>({1, 2}));
}

TEST_CASE("neighborhood graph: reflection augmentation links distant mirror points") {
    FinitePopulation p;
    p.dim = 2;
    p.num_classes = 1;
    p.points = {vec2(3.0, 0.0), vec2(-3.0, 0.0)};
    p.masses = {0.5, 0.5};
    p.labels = {1, 1};
    TransformSpec t;
    t.radius = 0.1;
    t.augmentations.push_back([](const VectorXd& x) { return x; });
    t.augmentations.push_back([](const VectorXd& x) {
        VectorXd y = x;
        y[0] = -y[0];
        return y;
    });
    auto g = build_neighborhood_graph(p, t);
    CHECK((p.points[0] - p.points[1]).norm() > 2 * t.radius);
    CHECK(g.n_adj[0] == std::vector<int>({0, 1}));
    CHECK(g.b_adj[0] == std::vector<int>({0, 1}));
}

TEST_CASE("neighborhood graph: identity-only overlap equals distance <= 2r") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        FinitePopulation p;
        p.dim = 3;
        p.num_classes = 1;
        const int n = 15;
        for (int i = 0; i < n; ++i) {
            VectorXd x(3);
            for (int c = 0; c < 3; ++c) x[c] = gauss(rng);
            p.points.push_back(x);
            p.masses.push_back(1.0 / n);
            p.labels.push_back(1);
        }
        const double r = 0.6;
        auto g = build_neighborhood_graph(p, TransformSpec::identity_only(r));
        for (int i = 0; i < n; ++i) {
            std::vector<int> expected;
            for (int j = 0; j < n; ++j)
                if ((p.points[i] - p.points[j]).norm() <= 2 * r + 1e-9)
                    expected.push_back(j);
            CHECK(g.n_adj[i] == expected);
            // b-edges within n-edges, self-loop present
            for (int j : g.b_adj[i])
                CHECK(std::find(g.n_adj[i].begin(), g.n_adj[i].end(), j) !=
                      g.n_adj[i].end());
            CHECK(std::find(g.n_adj[i].begin(), g.n_adj[i].end(), i) !=
                  g.n_adj[i].end());
        }
        // symmetry
        for (int i = 0; i < n; ++i)
            for (int j : g.n_adj[i])
                CHECK(std::find(g.n_adj[j].begin(), g.n_adj[j].end(), i) !=
                      g.n_adj[j].end());
    }
}

TEST_CASE("measure_separation: trivial zeros") {
    auto single = gen_gaussian_mixture(1, 2, {VectorXd::Zero(2)}, {1.0}, 8, 2);
    auto g1 = build_neighborhood_graph(single, TransformSpec::identity_only(10.0));
    CHECK(measure_separation(g1) == 0.0);

    FinitePopulation p;
    p.dim = 2;
    p.num_classes = 2;
    p.points = {vec2(0, 0), vec2(5, 0)};
    p.masses = {0.5, 0.5};
    p.labels = {1, 2};
    auto g2 = build_neighborhood_graph(p, TransformSpec::identity_only(1.0));
    CHECK(measure_separation(g2) == 0.0);
}

TEST_CASE("measure_separation: planted boundary point of mass 0.05") {
    FinitePopulation p;
    p.dim = 2;
    p.num_classes = 2;
    p.points = {vec2(-10, 0), vec2(-9.5, 0), vec2(10, 0), vec2(12, 0),
                vec2(9, 0)};
    p.masses = {0.45, 0.30, 0.10, 0.10, 0.05};
    p.labels = {1, 1, 2, 2, 1};
    // a one-sided shift augmentation puts only the planted point's ball onto
    // the other class
    TransformSpec t;
    t.radius = 0.2;
    t.augmentations.push_back([](const VectorXd& x) { return x; });
    t.augmentations.push_back([](const VectorXd& x) {
        VectorXd y = x;
        y[0] += 0.9;
        return y;
    });
    auto g = build_neighborhood_graph(p, t);
    CHECK(measure_separation(g) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("measure_separation: monotone in r") {
    auto p = gen_two_moons(40, 0.1, VectorXd::Zero(2), 21);
    double prev = -1.0;
    for (double r : {0.01, 0.05, 0.1, 0.2, 0.4, 0.8}) {
        auto g = build_neighborhood_graph(p, TransformSpec::identity_only(r));
        const double mu = measure_separation(g);
        CHECK(mu >= prev);
        prev = mu;
    }
}

TEST_CASE("population json round trip") {
    auto p = gen_two_moons(12, 0.05, vec2(1.0, 0.0), 31);
    auto q = population_from_json(population_to_json(p));
    REQUIRE(q.size() == p.size());
    CHECK(q.dim == p.dim);
    CHECK(q.num_classes == p.num_classes);
    for (int i = 0; i < p.size(); ++i) {
        CHECK(q.points[i] == p.points[i]);
        CHECK(q.masses[i] == p.masses[i]);
        CHECK(q.labels[i] == p.labels[i]);
    }
}

TEST_CASE("population validation rejects broken invariants") {
    auto p = gen_two_moons(5, 0.0, VectorXd::Zero(2), 1);
    auto bad = p;
    bad.masses[0] = -bad.masses[0];
    CHECK_THROWS(bad.validate());
    bad = p;
    bad.masses[0] += 0.1;
    CHECK_THROWS(bad.validate());
    bad = p;
    bad.labels[0] = 3;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("manifold mixture: identity-like linear generators reduce to gaussians") {
    auto gen = make_linear_generator(MatrixXd::Identity(2, 2), 1.0);
    auto p = gen_manifold_mixture(2, 2, 2, {gen, gen}, 20, 77);
    auto q = gen_gaussian_mixture(2, 2, {VectorXd::Zero(2), VectorXd::Zero(2)},
                                  {0.5, 0.5}, 20, 77);
    REQUIRE(p.size() == q.size());
    for (int i = 0; i < p.size(); ++i)
        CHECK((p.points[i] - q.points[i]).norm() < 1e-12);
}

TEST_CASE("manifold mixture: determinism in 3-d ambient space") {
    auto gen = make_tanh_warp_generator(2, 3, 0.5, 1.5, 4);
    auto a = gen_manifold_mixture(1, 2, 3, {gen}, 100, 13);
    auto b = gen_manifold_mixture(1, 2, 3, {gen}, 100, 13);
    REQUIRE(a.size() == 100);
    for (int i = 0; i < a.size(); ++i) CHECK(a.points[i] == b.points[i]);
    CHECK(a.dim == 3);
}

TEST_CASE("generators reject an understated bi-Lipschitz constant") {
    CHECK_THROWS(make_tanh_warp_generator(2, 3, 0.5, 1.2, 4));
    MatrixXd A = 3.0 * MatrixXd::Identity(2, 2);
    CHECK_THROWS(make_linear_generator(A, 2.0));
    CHECK_NOTHROW(make_linear_generator(A, 3.0));
}

TEST_CASE("tanh warp generator: empirical distortion stays within kappa") {
    auto gen = make_tanh_warp_generator(2, 4, 0.7, 1.7, 9);
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        VectorXd z1(2), z2(2);
        for (int c = 0; c < 2; ++c) {
            z1[c] = 2.0 * gauss(rng);
            z2[c] = 2.0 * gauss(rng);
        }
        const double dz = (z1 - z2).norm();
        if (dz < 1e-9) continue;
        const double dx = (gen.map(z1) - gen.map(z2)).norm();
        CHECK(dx <= 1.7 * dz + 1e-9);
        CHECK(dx >= dz / 1.7 - 1e-9);
    }
}
