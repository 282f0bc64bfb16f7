#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "explab/selftrain.hpp"
#include "helpers.hpp"

using namespace explab;
using namespace testutil;

namespace {

bool same_weights(const FeedforwardNet& a, const FeedforwardNet& b) {
    if (a.W.size() != b.W.size()) return false;
    for (size_t i = 0; i < a.W.size(); ++i)
        if ((a.W[i] - b.W[i]).norm() != 0.0) return false;
    return true;
}

// independent argmin over all labelings, plain nested recursion
double oracle_min_pl(const NeighborhoodGraph& g, const Pseudolabeler& pl, double c) {
    const int n = g.pop->size(), K = g.pop->num_classes;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> a(n, 1);
    std::function<void(int)> rec = [&](int i) {
        if (i == n) {
            best = std::min(best, pl_objective(g, Labeling{a}, pl, c).value);
            return;
        }
        for (int k = 1; k <= K; ++k) {
            a[i] = k;
            rec(i + 1);
        }
    };
    rec(0);
    return best;
}

}  // namespace

TEST_CASE("make_pseudolabeler: mass accounting and determinism") {
    auto inst = make_cluster_instance(5, 2, 6, false);
    for (double target : {0.0, 0.1, 0.25}) {
        auto pl = make_pseudolabeler(inst.pop, target, 42);
        CHECK(pl.a_bar <= target + kMassTol);
        for (int cls = 1; cls <= 2; ++cls)
            CHECK(pl.mistake_mass_in_class(inst.pop, cls) <= target + kMassTol);
        if (target == 0.0) CHECK(pl.a_bar == 0.0);
    }
    auto a = make_pseudolabeler(inst.pop, 0.2, 7);
    auto b = make_pseudolabeler(inst.pop, 0.2, 7);
    CHECK(a.labeling.assignment == b.labeling.assignment);
    CHECK(a.a_bar > 0.0);  // some point fits under a 0.2 conditional budget
    CHECK_THROWS(make_pseudolabeler(inst.pop, 1.0, 1));
    CHECK_THROWS(make_pseudolabeler(inst.pop, 0.2, 1, "clustered", nullptr));
    CHECK_THROWS(make_pseudolabeler(inst.pop, 0.2, 1, "nope", &inst.graph));
}

TEST_CASE("make_pseudolabeler: clustered mistakes are n-connected in-class") {
    auto inst = make_cluster_instance(9, 2, 8, false);
    auto pl = make_pseudolabeler(inst.pop, 0.3, 11, "clustered", &inst.graph);
    CHECK(pl.a_bar > 0.0);
    for (int cls = 1; cls <= 2; ++cls) {
        const auto& M = pl.mistakes_per_class[cls - 1];
        if (M.size() < 2) continue;
        // BFS inside M over within-class n-edges reaches all of M
        std::vector<char> inM(inst.pop.size(), 0), seen(inst.pop.size(), 0);
        for (int i : M) inM[i] = 1;
        std::vector<int> q{M[0]};
        seen[M[0]] = 1;
        size_t reached = 1;
        while (!q.empty()) {
            int cur = q.back();
            q.pop_back();
            for (int nb : inst.graph.n_adj[cur])
                if (inM[nb] && !seen[nb]) {
                    seen[nb] = 1;
                    ++reached;
                    q.push_back(nb);
                }
        }
        CHECK(reached == M.size());
    }
}

TEST_CASE("brute_force_min_pl matches an independent enumeration") {
    auto inst = make_cluster_instance(13, 2, 4, true);
    auto pl = make_pseudolabeler(inst.pop, 0.2, 3);
    for (double c : {2.0, 5.0}) {
        auto res = brute_force_min_pl(inst.graph, pl, c);
        CHECK(res.exact);
        CHECK(res.value == doctest::Approx(oracle_min_pl(inst.graph, pl, c)).epsilon(1e-12));
        // the reported labeling reproduces the reported value
        CHECK(pl_objective(inst.graph, res.labeling, pl, c).value ==
              doctest::Approx(res.value).epsilon(1e-12));
        // argmin property against random labelings and ground truth
        Rng rng(17);
        for (int t = 0; t < 200; ++t) {
            Labeling G{std::vector<int>(inst.pop.size())};
            for (auto& v : G.assignment) v = 1 + int(rng() % 2);
            CHECK(res.value <= pl_objective(inst.graph, G, pl, c).value + 1e-12);
        }
        CHECK(res.value <=
              pl_objective(inst.graph, Labeling::ground_truth(inst.pop), pl, c).value +
                  1e-12);
    }
}

TEST_CASE("local search never beats the exact minimum") {
    auto inst = make_cluster_instance(19, 2, 4, true);
    auto pl = make_pseudolabeler(inst.pop, 0.15, 5);
    const double c = 3.0;
    auto exact = brute_force_min_pl(inst.graph, pl, c);
    auto eval = [&](const Labeling& G, double& v) {
        v = pl_objective(inst.graph, G, pl, c).value;
        return true;
    };
    auto ls = detail::local_search_labelings(inst.graph, eval, 23);
    CHECK(!ls.exact);
    CHECK(ls.feasible_found);
    CHECK(ls.value >= exact.value - 1e-12);
}

TEST_CASE("brute_force_min_unsup: separated clusters recover the partition") {
    auto inst = make_cluster_instance(29, 2, 4, false);
    REQUIRE(measure_separation(inst.graph) == 0.0);
    auto res = brute_force_min_unsup(inst.graph, 2.0);
    REQUIRE(res.feasible_found);
    CHECK(res.exact);
    CHECK(res.value == 0.0);
    CHECK(err_unsup(*inst.graph.pop, res.labeling) == doctest::Approx(0.0));
    // lexicographically smallest argmin labels point 0 with class 1
    CHECK(res.labeling.assignment[0] == 1);
}

TEST_CASE("brute_force_min_unsup: one tight blob has no feasible labeling") {
    FinitePopulation pop;
    pop.dim = 1;
    pop.num_classes = 2;
    for (int i = 0; i < 6; ++i) {
        VectorXd x(1);
        x << 0.01 * i;
        pop.points.push_back(x);
        pop.masses.push_back(1.0 / 6);
        pop.labels.push_back(1 + i % 2);
    }
    auto g = build_neighborhood_graph(pop, TransformSpec::identity_only(1.0));
    auto res = brute_force_min_unsup(g, 2.0);
    CHECK(!res.feasible_found);
}

TEST_CASE("amo_step: output layer stays clean, single layer is inert") {
    auto net1 = net_random({3, 2}, Activation::softplus, 1);
    VectorXd x(3);
    x << 1.0, -0.5, 0.25;
    VectorXd p_ref(2);
    p_ref << 0.9, 0.1;
    CHECK(amo_step(net1, x, p_ref, 1.0).norm() == 0.0);
    auto net2 = net_random({3, 4, 2}, Activation::softplus, 2);
    auto d = amo_step(net2, x, p_ref, 2.0);
    CHECK(d.delta[1].norm() == 0.0);
    CHECK(d.delta[0].norm() > 0.0);
    // hand check: ddelta_1 = dphi(h1) .* (W2^T dkl) * ||x||, scaled by amo_lr
    const VectorXd h1 = net2.W[0] * x;
    const VectorXd z = net2.W[1] * act_phi_vec(net2.act, h1);
    const VectorXd dkl = softmax(z) - p_ref;
    const VectorXd expect =
        2.0 * x.norm() *
        act_dphi_vec(net2.act, h1).cwiseProduct(net2.W[1].transpose() * dkl);
    CHECK((d.delta[0] - expect).norm() <= 1e-12);
}

TEST_CASE("amo_step at the model's own prediction is a fixed point") {
    auto net = net_random({2, 5, 3}, Activation::tanh_act, 4);
    VectorXd x(2);
    x << 0.7, -0.3;
    CHECK(amo_step(net, x, softmax(forward(net, x)), 1.0).norm() == 0.0);
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
    auto pop = gen_two_moons(20, 0.08, VectorXd::Zero(2), 31);
    auto pl = Pseudolabeler::from_labeling(pop, Labeling::ground_truth(pop));
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 16;
    cfg.eval_every = 10;
    cfg.seed = 77;
    auto n1 = net_random({2, 8, 2}, Activation::softplus, 5);
    auto n2 = net_random({2, 8, 2}, Activation::softplus, 5);
    auto h1 = train_pseudolabel(n1, pop, pl, cfg);
    auto h2 = train_pseudolabel(n2, pop, pl, cfg);
    CHECK(same_weights(n1, n2));
    CHECK(h1.to_csv() == h2.to_csv());
}

TEST_CASE("inactive knobs leave training bit-identical") {
    auto pop = gen_two_moons(15, 0.08, VectorXd::Zero(2), 37);
    auto pl = Pseudolabeler::from_labeling(pop, Labeling::ground_truth(pop));
    TrainConfig base;
    base.steps = 25;
    base.batch_size = 10;
    base.seed = 3;
    base.tau_final = 0.0;

    // lambda_ent only acts on dropped pseudolabels; tau_final = 0 drops none
    auto cfg_ent = base;
    cfg_ent.lambda_ent = 0.0;
    auto a1 = net_random({2, 6, 2}, Activation::softplus, 9);
    auto a2 = net_random({2, 6, 2}, Activation::softplus, 9);
    train_pseudolabel(a1, pop, pl, base);
    train_pseudolabel(a2, pop, pl, cfg_ent);
    CHECK(same_weights(a1, a2));

    // with consistency off, lambda_v and the radius are dead parameters
    auto off1 = base, off2 = base;
    off1.vat_enabled = off2.vat_enabled = false;
    off2.lambda_v = 99.0;
    off2.vat_radius = 17.0;
    auto b1 = net_random({2, 6, 2}, Activation::softplus, 9);
    auto b2 = net_random({2, 6, 2}, Activation::softplus, 9);
    train_pseudolabel(b1, pop, pl, off1);
    train_pseudolabel(b2, pop, pl, off2);
    CHECK(same_weights(b1, b2));

    // amo_lr is dead while the hidden-perturbation step is disabled
    auto amo_off1 = base, amo_off2 = base;
    amo_off2.amo_lr = 123.0;
    auto c1 = net_random({2, 6, 2}, Activation::softplus, 9);
    auto c2 = net_random({2, 6, 2}, Activation::softplus, 9);
    train_pseudolabel(c1, pop, pl, amo_off1);
    train_pseudolabel(c2, pop, pl, amo_off2);
    CHECK(same_weights(c1, c2));

    // ...and enabling it changes the trajectory
    auto amo_on = base;
    amo_on.amo_enabled = true;
    auto c3 = net_random({2, 6, 2}, Activation::softplus, 9);
    train_pseudolabel(c3, pop, pl, amo_on);
    CHECK(!same_weights(c1, c3));
}

TEST_CASE("pseudolabel training fits clean labels on two moons") {
    auto pop = gen_two_moons(40, 0.06, VectorXd::Zero(2), 41);
    auto pl = Pseudolabeler::from_labeling(pop, Labeling::ground_truth(pop));
    auto net = net_random({2, 32, 2}, Activation::softplus, 11);
    const double err0 = err(pop, detail::net_labeling(net, pop));
    TrainConfig cfg;  // plain pseudolabel fitting: no consistency term
    cfg.steps = 800;
    cfg.batch_size = 32;
    cfg.eval_every = 50;
    cfg.vat_enabled = false;
    cfg.seed = 1;
    auto hist = train_pseudolabel(net, pop, pl, cfg);
    const double err1 = err(pop, detail::net_labeling(net, pop));
    CHECK(err1 < err0);
    CHECK(err1 <= 0.1);
    // history bookkeeping
    REQUIRE(!hist.rows.empty());
    CHECK(hist.rows.front().step == 0);
    CHECK(hist.rows.back().step == cfg.steps - 1);
    CHECK(hist.rows.back().err == doctest::Approx(err1));
    for (const auto& r : hist.rows) {
        CHECK(r.err_unsup <= r.err + 1e-12);
        CHECK(r.r_b_estimate >= 0.0);
        CHECK(r.r_b_estimate <= 1.0);
    }
    const std::string csv = hist.to_csv();
    CHECK(csv.rfind("step,loss,err,err_unsup,disagreement_pl,r_b_estimate,tau_i,"
                    "ignored_fraction\n", 0) == 0);
}

TEST_CASE("pseudolabel dropping: quantile schedule and EMA bookkeeping") {
    auto pop = gen_two_moons(25, 0.06, VectorXd::Zero(2), 43);
    auto pl = make_pseudolabeler(pop, 0.2, 5);
    auto net = net_random({2, 8, 2}, Activation::softplus, 13);
    TrainConfig cfg;
    cfg.steps = 60;
    cfg.batch_size = 16;
    cfg.eval_every = 10;
    cfg.tau_final = 0.4;
    cfg.seed = 2;
    EmaState ema;
    auto hist = train_pseudolabel(net, pop, pl, cfg, &ema);
    for (const auto& r : hist.rows) {
        CHECK(r.tau_i ==
              doctest::Approx(cfg.tau_final * r.step / (cfg.steps - 1)).epsilon(1e-12));
        CHECK(r.ignored_fraction >= 0.0);
        CHECK(r.ignored_fraction <= 1.0);
    }
    CHECK(hist.rows.back().tau_i == doctest::Approx(cfg.tau_final));
    // the EMA quantile equals a direct recomputation over the logged inputs
    REQUIRE(ema.raw_quantiles.size() == size_t(cfg.steps));
    double q = ema.raw_quantiles.front();
    for (size_t t = 1; t < ema.raw_quantiles.size(); ++t)
        q = cfg.ema_decay * q + (1.0 - cfg.ema_decay) * ema.raw_quantiles[t];
    CHECK(ema.loss_quantile == doctest::Approx(q).epsilon(1e-12));
}

TEST_CASE("pseudolabel dropping activates once noisy labels resist fitting") {
    auto pop = gen_two_moons(25, 0.05, VectorXd::Zero(2), 59);
    auto pl = make_pseudolabeler(pop, 0.2, 9);
    REQUIRE(pl.a_bar > 0.0);
    auto net = net_random({2, 12, 2}, Activation::softplus, 15);
    TrainConfig warm;  // fit first so mistaken labels carry outlier losses
    warm.steps = 300;
    warm.batch_size = 25;
    warm.vat_enabled = false;
    warm.seed = 6;
    train_pseudolabel(net, pop, pl, warm);
    TrainConfig cfg = warm;
    cfg.steps = 400;
    cfg.tau_final = 0.3;
    double peak_ignored = 0.0;
    auto hist = train_pseudolabel(net, pop, pl, cfg);
    for (const auto& r : hist.rows) peak_ignored = std::max(peak_ignored, r.ignored_fraction);
    CHECK(peak_ignored > 0.0);
}

TEST_CASE("unsupervised training stays deterministic and logs sensibly") {
    auto pop = gen_two_moons(20, 0.06, VectorXd::Zero(2), 47);
    TrainConfig cfg;
    cfg.steps = 40;
    cfg.batch_size = 16;
    cfg.eval_every = 10;
    cfg.rho_target = 0.3;
    cfg.seed = 4;
    auto n1 = net_random({2, 8, 2}, Activation::softplus, 21);
    auto n2 = net_random({2, 8, 2}, Activation::softplus, 21);
    auto h1 = train_unsup(n1, pop, cfg);
    auto h2 = train_unsup(n2, pop, cfg);
    CHECK(same_weights(n1, n2));
    CHECK(h1.to_csv() == h2.to_csv());
    for (const auto& r : h1.rows) CHECK(r.err_unsup <= 0.5 + 1e-12);
}

TEST_CASE("diverging loss aborts with an exception") {
    auto pop = gen_two_moons(10, 0.05, VectorXd::Zero(2), 53);
    auto pl = Pseudolabeler::from_labeling(pop, Labeling::ground_truth(pop));
    auto net = net_random({2, 6, 2}, Activation::softplus, 3);
    TrainConfig cfg;
    cfg.steps = 50;
    cfg.batch_size = 8;
    cfg.lr = 1e18;
    CHECK_THROWS_AS(train_pseudolabel(net, pop, pl, cfg), std::runtime_error);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.tau_final = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.vat_radius = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("cosine schedule endpoints") {
    CHECK(detail::cosine_lr(0.3, 0, 100) == doctest::Approx(0.3));
    CHECK(detail::cosine_lr(0.3, 100, 100) == doctest::Approx(0.0));
    CHECK(detail::cosine_lr(0.3, 50, 100) == doctest::Approx(0.15));
}

TEST_CASE("rb_estimate: robust linear classifier far from the boundary") {
    auto inst = make_cluster_instance(59, 2, 5, false);
    // rows aligned with the cluster centers classify by inner product
    FeedforwardNet net;
    net.dims = {2, 2};
    MatrixXd W(2, 2);
    W << 10.0, 0.0, -10.0, 0.0;
    net.W.push_back(W);
    CHECK(err(inst.pop, detail::net_labeling(net, inst.pop)) == 0.0);
    CHECK(detail::rb_estimate(net, inst.pop, 0.5, 1) == 0.0);
    CHECK(detail::rb_estimate(net, inst.pop, 0.0, 1) == 0.0);
}

TEST_CASE("distance_vs_correction bins mistakes by nearest-clean distance") {
    auto inst = make_cluster_instance(61, 2, 10, false);
    auto pl = make_pseudolabeler(inst.pop, 0.3, 7);
    REQUIRE(pl.a_bar > 0.0);
    FeedforwardNet net;  // perfect classifier for the separated clusters
    net.dims = {2, 2};
    MatrixXd W(2, 2);
    W << 10.0, 0.0, -10.0, 0.0;
    net.W.push_back(W);
    auto bins = distance_vs_correction(inst.pop, pl, net, 3);
    REQUIRE(!bins.empty());
    int total = 0;
    for (const auto& b : bins) {
        CHECK(b.count > 0);
        CHECK(b.dist_lo <= b.dist_hi + 1e-12);
        CHECK(b.correction_rate == doctest::Approx(1.0));  // net is perfect
        total += b.count;
    }
    int mistakes = 0;
    for (int i = 0; i < inst.pop.size(); ++i)
        if (pl.labeling(i) != inst.pop.labels[i]) ++mistakes;
    CHECK(total <= mistakes);
    CHECK_THROWS(distance_vs_correction(inst.pop, pl, net, 0));
}
