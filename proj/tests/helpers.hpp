#pragma once

// Test-side utilities: small random instances and an independent
// subset-enumeration oracle that avoids the library's bitmask DP path.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "explab/expansion.hpp"
#include "explab/population.hpp"

namespace testutil {

using namespace explab;

struct Instance {
    FinitePopulation pop;
    double radius = 0.0;
    NeighborhoodGraph graph;
};

// Tight same-class clusters, well separated across classes; optionally one
// boundary point per instance to produce nonzero separation.
inline Instance make_cluster_instance(std::uint64_t seed, int K, int n_per_class,
                                      bool boundary_point = false) {
    Rng rng(seed);
    FinitePopulation pop;
    pop.dim = 2;
    pop.num_classes = K;
    const double spread = 0.35;
    std::vector<VectorXd> centers;
    for (int k = 0; k < K; ++k) {
        VectorXd c(2);
        c << 10.0 * std::cos(2 * 3.14159265358979 * k / K),
            10.0 * std::sin(2 * 3.14159265358979 * k / K);
        centers.push_back(c);
    }
    const int total = K * n_per_class;
    for (int k = 0; k < K; ++k)
        for (int t = 0; t < n_per_class; ++t) {
            VectorXd x = centers[k];
            x[0] += spread * gauss(rng);
            x[1] += spread * gauss(rng);
            pop.points.push_back(x);
            pop.masses.push_back(1.0 / total);
            pop.labels.push_back(k + 1);
        }
    if (boundary_point) {
        // drag one class-1 point next to a class-2 point
        pop.points[0] = pop.points[n_per_class];
        pop.points[0][0] += 0.3;
    }
    // normalize masses with a little nonuniformity
    double tot = 0.0;
    for (auto& m : pop.masses) {
        m *= unif(rng, 0.5, 1.5);
        tot += m;
    }
    for (auto& m : pop.masses) m /= tot;
    pop.validate();
    Instance inst;
    inst.pop = std::move(pop);
    inst.radius = 2.0;  // spans each cluster, far below the class separation
    inst.graph = build_neighborhood_graph(inst.pop,
                                          TransformSpec::identity_only(inst.radius));
    return inst;
}

// recursive subset enumeration, independent of the library's bitmask DP
template <typename Fn>
inline void for_each_subset(const std::vector<int>& items, Fn fn) {
    std::vector<int> cur;
    const int n = static_cast<int>(items.size());
    std::function<void(int)> rec = [&](int i) {
        if (i == n) {
            if (!cur.empty()) fn(cur);
            return;
        }
        rec(i + 1);
        cur.push_back(items[i]);
        rec(i + 1);
        cur.pop_back();
    };
    rec(0);
}

inline double subset_mass(const FinitePopulation& pop, const std::vector<int>& S) {
    double m = 0.0;
    for (int i : S) m += pop.masses[i];
    return m;
}

// direct N(V) within a class, by scanning adjacency lists
inline std::vector<int> class_neighborhood(const NeighborhoodGraph& g,
                                           const std::vector<int>& V, int cls) {
    std::vector<char> in(g.pop->size(), 0);
    for (int i : V)
        for (int j : g.n_adj[i])
            if (g.pop->labels[j] == cls) in[j] = 1;
    std::vector<int> out;
    for (int j = 0; j < g.pop->size(); ++j)
        if (in[j]) out.push_back(j);
    return out;
}

struct OracleVerdict {
    bool holds = true;
    double worst = std::numeric_limits<double>::infinity();
};

inline OracleVerdict oracle_mult(const NeighborhoodGraph& g, double a, double c) {
    OracleVerdict v;
    const FinitePopulation& pop = *g.pop;
    for (int cls = 1; cls <= pop.num_classes; ++cls) {
        const double cmass = pop.class_mass(cls);
        for_each_subset(pop.class_indices(cls), [&](const std::vector<int>& V) {
            const double pv = subset_mass(pop, V) / cmass;
            if (pv > a + kMassTol) return;
            const double pnv =
                subset_mass(pop, class_neighborhood(g, V, cls)) / cmass;
            v.worst = std::min(v.worst, pnv / pv);
            if (pnv < std::min(c * pv, 1.0) - kMassTol) v.holds = false;
        });
    }
    return v;
}

inline OracleVerdict oracle_additive(const NeighborhoodGraph& g,
                                     const std::vector<int>& S, double q,
                                     double alpha, int cls = 0) {
    OracleVerdict v;
    const FinitePopulation& pop = *g.pop;
    const double norm = cls > 0 ? pop.class_mass(cls) : 1.0;
    std::vector<char> inS(pop.size(), 0);
    for (int i : S) inS[i] = 1;
    for_each_subset(S, [&](const std::vector<int>& V) {
        const double pv = subset_mass(pop, V) / norm;
        if (!(pv > q + kMassTol)) return;
        double out = 0.0;
        for (int j : restricted_neighborhood(g, V))
            if (!inS[j] && (cls == 0 || pop.labels[j] == cls))
                out += pop.masses[j] / norm;
        const double slack = out - pv - alpha;
        v.worst = std::min(v.worst, slack);
        if (slack < -kMassTol) v.holds = false;
    });
    return v;
}

inline OracleVerdict oracle_constant(const NeighborhoodGraph& g, double q,
                                     double xi) {
    OracleVerdict v;
    const FinitePopulation& pop = *g.pop;
    std::vector<int> all(pop.size());
    std::iota(all.begin(), all.end(), 0);
    for_each_subset(all, [&](const std::vector<int>& S) {
        const double ps = subset_mass(pop, S);
        if (ps < q - kMassTol) return;
        for (int cls = 1; cls <= pop.num_classes; ++cls) {
            double cm = 0.0;
            for (int i : S)
                if (pop.labels[i] == cls) cm += pop.masses[i];
            if (cm > pop.class_mass(cls) / 2 + kMassTol) return;
        }
        std::vector<char> inS(pop.size(), 0);
        for (int i : S) inS[i] = 1;
        double out = 0.0;
        for (int j : restricted_neighborhood(g, S))
            if (!inS[j]) out += pop.masses[j];
        const double slack = out - std::min(xi, ps);
        v.worst = std::min(v.worst, slack);
        if (slack < -kMassTol) v.holds = false;
    });
    return v;
}

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    const int n = static_cast<int>(xs.size());
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        for (int i = 0; i < n; ++i) r[idx[i]] = i;
        return r;
    };
    const auto rx = ranks(xs), ry = ranks(ys);
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += rx[i] / n;
        my += ry[i] / n;
    }
    double num = 0, dx = 0, dy = 0;
    for (int i = 0; i < n; ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx == 0 || dy == 0) return 0.0;
    return num / std::sqrt(dx * dy);
}

}  // namespace testutil
