#pragma once

// Losses, regularizers and error metrics over explicit labelings and nets:
// the consistency regularizer R_B, robust set S_B, disagreement, supervised
// and permutation-invariant errors, and the weighted pseudolabel objective.

#include <algorithm>
#include <numeric>

#include "explab/net.hpp"
#include "explab/population.hpp"

namespace explab {

// total assignment point index -> class in {1..K}
struct Labeling {
    std::vector<int> assignment;

    int operator()(int i) const { return assignment[i]; }
    int size() const { return static_cast<int>(assignment.size()); }

    void validate(const FinitePopulation& pop) const {
        if (size() != pop.size())
            throw std::invalid_argument("labeling: size mismatch");
        for (int a : assignment)
            if (a < 1 || a > pop.num_classes)
                throw std::invalid_argument("labeling: class out of range");
    }

    static Labeling ground_truth(const FinitePopulation& pop) {
        return Labeling{pop.labels};
    }
};

// a labeling with its derived mistake structure against ground truth
struct Pseudolabeler {
    Labeling labeling;
    std::vector<std::vector<int>> mistakes_per_class;  // M_i, indexed by class-1
    double a_bar = 0.0;  // max_i P_i(M_i)

    static Pseudolabeler from_labeling(const FinitePopulation& pop,
                                       const Labeling& lab) {
        lab.validate(pop);
        Pseudolabeler pl;
        pl.labeling = lab;
        pl.mistakes_per_class.assign(pop.num_classes, {});
        for (int i = 0; i < pop.size(); ++i)
            if (lab(i) != pop.labels[i])
                pl.mistakes_per_class[pop.labels[i] - 1].push_back(i);
        for (int cls = 1; cls <= pop.num_classes; ++cls) {
            double m = 0.0;
            for (int i : pl.mistakes_per_class[cls - 1]) m += pop.masses[i];
            pl.a_bar = std::max(pl.a_bar, m / pop.class_mass(cls));
        }
        return pl;
    }

    double mistake_mass_in_class(const FinitePopulation& pop, int cls) const {
        double m = 0.0;
        for (int i : mistakes_per_class[cls - 1]) m += pop.masses[i];
        return m / pop.class_mass(cls);
    }
};

// R_B(G): mass of points with a b-edge to a point labeled differently by G.
inline double robust_regularizer(const NeighborhoodGraph& g, const Labeling& G) {
    const FinitePopulation& pop = *g.pop;
    G.validate(pop);
    double r = 0.0;
    for (int i = 0; i < g.size(); ++i) {
        for (int j : g.b_adj[i]) {
            if (G(j) != G(i)) {
                r += pop.masses[i];
                break;
            }
        }
    }
    return r;
}

// S_B(G): points whose label is constant over their b-neighborhood.
inline std::vector<int> robust_set(const NeighborhoodGraph& g, const Labeling& G) {
    G.validate(*g.pop);
    std::vector<int> out;
    for (int i = 0; i < g.size(); ++i) {
        bool robust = true;
        for (int j : g.b_adj[i])
            if (G(j) != G(i)) {
                robust = false;
                break;
            }
        if (robust) out.push_back(i);
    }
    return out;
}

inline double disagreement(const Labeling& G, const Labeling& Gp,
                           const std::vector<double>& masses) {
    if (G.size() != Gp.size() || G.size() != static_cast<int>(masses.size()))
        throw std::invalid_argument("disagreement: size mismatch");
    double d = 0.0;
    for (int i = 0; i < G.size(); ++i)
        if (G(i) != Gp(i)) d += masses[i];
    return d;
}

inline double err(const FinitePopulation& pop, const Labeling& G) {
    return disagreement(G, Labeling::ground_truth(pop), pop.masses);
}

// error within class i under the class-conditional measure
inline double per_class_err(const FinitePopulation& pop, const Labeling& G,
                            int cls) {
    G.validate(pop);
    double e = 0.0;
    for (int i = 0; i < pop.size(); ++i)
        if (pop.labels[i] == cls && G(i) != cls) e += pop.masses[i];
    return e / pop.class_mass(cls);
}

// K x K agreement matrix: mass with G = g and ground truth = k
inline MatrixXd agreement_matrix(const FinitePopulation& pop, const Labeling& G) {
    G.validate(pop);
    MatrixXd A = MatrixXd::Zero(pop.num_classes, pop.num_classes);
    for (int i = 0; i < pop.size(); ++i)
        A(G(i) - 1, pop.labels[i] - 1) += pop.masses[i];
    return A;
}

// min over permutations pi of E[1(pi(G(x)) != G*(x))], by explicit
// factorial enumeration (K <= 10)
inline double err_unsup_factorial(const FinitePopulation& pop, const Labeling& G) {
    const int K = pop.num_classes;
    if (K > 10)
        throw std::invalid_argument("err_unsup_factorial: K > 10");
    const MatrixXd A = agreement_matrix(pop, G);
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
        double agree = 0.0;
        for (int g = 0; g < K; ++g) agree += A(g, perm[g]);
        best = std::max(best, agree);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return 1.0 - best;
}

// same value via exact optimal assignment (subset DP over target classes)
inline double err_unsup(const FinitePopulation& pop, const Labeling& G) {
    const int K = pop.num_classes;
    if (K > 20)
        throw std::invalid_argument("err_unsup: K > 20");
    const MatrixXd A = agreement_matrix(pop, G);
    const std::size_t full = std::size_t{1} << K;
    std::vector<double> dp(full, -1.0);
    dp[0] = 0.0;
    for (std::size_t mask = 0; mask + 1 < full; ++mask) {
        if (dp[mask] < 0.0) continue;
        int g = 0;  // number of source classes already assigned
        for (std::size_t m = mask; m; m &= m - 1) ++g;
        for (int k = 0; k < K; ++k) {
            if (mask & (std::size_t{1} << k)) continue;
            const std::size_t nxt = mask | (std::size_t{1} << k);
            dp[nxt] = std::max(dp[nxt], dp[mask] + A(g, k));
        }
    }
    return 1.0 - dp[full - 1];
}

struct PlObjective {
    double value = 0.0;
    double l01 = 0.0;     // disagreement with the pseudolabeler
    double rb = 0.0;      // R_B(G)
    double err_pl = 0.0;  // pseudolabeler ground-truth error (known here
                          // because ground truth is synthetic; a constant
                          // offset that does not move the argmin)
};

// L(G) = (c+1)/(c-1) L01(G, G_pl) + 2c/(c-1) R_B(G) - Err(G_pl)
inline PlObjective pl_objective(const NeighborhoodGraph& g, const Labeling& G,
                                const Pseudolabeler& pl, double c) {
    if (!(c > 1.0)) throw std::invalid_argument("pl_objective: c <= 1");
    const FinitePopulation& pop = *g.pop;
    PlObjective o;
    o.l01 = disagreement(G, pl.labeling, pop.masses);
    o.rb = robust_regularizer(g, G);
    o.err_pl = err(pop, pl.labeling);
    o.value = (c + 1.0) / (c - 1.0) * o.l01 + 2.0 * c / (c - 1.0) * o.rb - o.err_pl;
    return o;
}

struct Feasibility {
    bool feasible = false;
    double margin = 0.0;  // min class mass minus the R_B threshold
};

// constraint min_y P(G = y) > max{2/(c-1), 2} * R_B(G)
inline Feasibility unsup_feasible(const NeighborhoodGraph& g, const Labeling& G,
                                  double c) {
    if (!(c > 1.0)) throw std::invalid_argument("unsup_feasible: c <= 1");
    const FinitePopulation& pop = *g.pop;
    G.validate(pop);
    std::vector<double> cm(pop.num_classes, 0.0);
    for (int i = 0; i < pop.size(); ++i) cm[G(i) - 1] += pop.masses[i];
    const double mn = *std::min_element(cm.begin(), cm.end());
    const double thresh =
        std::max(2.0 / (c - 1.0), 2.0) * robust_regularizer(g, G);
    Feasibility f;
    f.margin = mn - thresh;
    f.feasible = f.margin > 0.0;
    return f;
}

// ---- Net-facing surrogate losses ---------------------------------------------

// one power-step adversarial direction maximizing prediction KL, scaled to
// exactly `radius`
inline VectorXd vat_perturbation(const FeedforwardNet& net, const VectorXd& x,
                                 double radius, std::uint64_t seed) {
    if (!(radius > 0.0))
        throw std::invalid_argument("vat_perturbation: radius <= 0");
    Rng rng(seed);
    VectorXd u(x.size());
    for (int k = 0; k < u.size(); ++k) u[k] = gauss(rng);
    if (u.norm() > 0.0) u /= u.norm();
    const VectorXd p_ref = softmax(forward(net, x));
    // the KL gradient vanishes at delta = 0, so step from a small offset
    const VectorXd x0 = x + 1e-6 * radius * u;
    const Perturbation zero = Perturbation::zero(net);
    const ForwardTrace tr = perturbed_forward_trace(net, x0, zero);
    const LossValueGrad kl = kl_loss(tr.logits(), p_ref);
    const Grads g = backward(net, tr, zero, kl.dlogits);
    VectorXd dir = g.dx;
    if (dir.norm() < 1e-14) dir = u;
    dir /= dir.norm();
    return x + radius * dir;
}

struct NetLossWeights {
    double lambda_v = 3.0;     // VAT consistency weight
    double lambda_ent = 0.0;   // min-entropy weight (ignored points)
    double lambda_bal = 1.0;   // class-balance penalty weight
    double rho_target = 0.0;   // target minimum marginal per class
};

struct NetLossBundle {
    double total = 0.0;
    double ce = 0.0;
    double vat_kl = 0.0;
    double minent = 0.0;
    double balance = 0.0;
};

// evaluation-only bundle over the whole population; `ignored[i]` marks
// points whose pseudolabels are dropped (min-entropy applied instead)
inline NetLossBundle net_losses(const FeedforwardNet& net,
                                const FinitePopulation& pop,
                                const Pseudolabeler& pl,
                                const NetLossWeights& weights, double vat_radius,
                                std::uint64_t seed,
                                const std::vector<char>& ignored = {}) {
    if (weights.lambda_v < 0.0 || weights.lambda_ent < 0.0 ||
        weights.lambda_bal < 0.0)
        throw std::invalid_argument("net_losses: negative weight");
    NetLossBundle b;
    VectorXd marginal = VectorXd::Zero(pop.num_classes);
    for (int i = 0; i < pop.size(); ++i) {
        const double m = pop.masses[i];
        const VectorXd z = forward(net, pop.points[i]);
        const bool skip = !ignored.empty() && ignored[i];
        if (!skip)
            b.ce += m * ce_loss(z, pl.labeling(i)).value;
        else if (weights.lambda_ent > 0.0)
            b.minent += m * entropy_loss(z).value;
        if (weights.lambda_v > 0.0 && vat_radius > 0.0) {
            const VectorXd xa = vat_perturbation(net, pop.points[i], vat_radius,
                                                 seed + std::uint64_t(i));
            b.vat_kl += m * kl_loss(forward(net, xa), softmax(z)).value;
        }
        marginal += m * softmax(z);
    }
    for (int k = 0; k < pop.num_classes; ++k)
        b.balance += std::max(0.0, weights.rho_target - marginal[k]);
    b.total = b.ce + weights.lambda_v * b.vat_kl + weights.lambda_ent * b.minent +
              weights.lambda_bal * b.balance;
    return b;
}

}  // namespace explab
