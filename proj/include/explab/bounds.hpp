#pragma once

// Mechanical theorem checking: evaluate each stated bound's right-hand side,
// measure the left-hand side exactly, verify preconditions first, and emit
// self-contained reports. Unmet preconditions produce refusal records, never
// vacuous passes.

#include "explab/expansion.hpp"
#include "explab/margin.hpp"
#include "explab/objectives.hpp"
#include "explab/selftrain.hpp"

namespace explab {

inline constexpr int kReportSchemaVersion = 1;

struct TheoremCheckReport {
    std::string theorem;
    std::string status = "holds";  // holds | violated | refused | skipped
    bool holds = false;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    nlohmann::json inputs;  // digest: everything needed to re-verify
    bool exact_minimizer = true;
    bool exhaustive_certificate = true;
    bool advisory = false;  // set when any input is non-exact
    std::string note;
};

inline nlohmann::json report_to_json(const TheoremCheckReport& r) {
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["theorem"] = r.theorem;
    j["status"] = r.status;
    j["holds"] = r.holds;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["slack"] = r.slack;
    j["inputs"] = r.inputs;
    j["exact_minimizer"] = r.exact_minimizer;
    j["exhaustive_certificate"] = r.exhaustive_certificate;
    j["advisory"] = r.advisory;
    j["note"] = r.note;
    return j;
}

inline void finalize_verdict(TheoremCheckReport& r) {
    r.slack = r.rhs - r.lhs;
    r.holds = r.slack >= -1e-12;
    r.status = r.holds ? "holds" : "violated";
    r.advisory = !(r.exact_minimizer && r.exhaustive_certificate);
}

// ---- Closed-form bound values ---------------------------------------------------

// denoised self-training error bound: 2/(c-1) err(G_pl) + 2c/(c-1) mu
inline double denoise_bound(double c, double err_pl, double mu) {
    if (!(c > 1.0)) throw std::invalid_argument("denoise_bound: c <= 1");
    return 2.0 / (c - 1.0) * err_pl + 2.0 * c / (c - 1.0) * mu;
}

// unsupervised error bound: max{c/(c-1), 2} mu
inline double unsup_bound(double c, double mu) {
    if (!(c > 1.0)) throw std::invalid_argument("unsup_bound: c <= 1");
    return std::max(c / (c - 1.0), 2.0) * mu;
}

// ---- Precondition helpers --------------------------------------------------------

// Every within-class overlap edge must be witnessed by a population point
// lying in both transformation sets. A purely geometric overlap constrains
// nothing: consistency is only measured at population points, so an
// unwitnessed edge voids the chaining argument the error bounds rest on.
// Finite-sample artifact; treated as a precondition, not a violation.
inline bool within_class_overlaps_witnessed(const NeighborhoodGraph& g) {
    const FinitePopulation& pop = *g.pop;
    const int n = pop.size();
    std::vector<std::vector<char>> in_ball(n, std::vector<char>(n, 0));
    for (int i = 0; i < n; ++i)
        for (int j : g.b_adj[i]) in_ball[i][j] = 1;
    for (int i = 0; i < n; ++i)
        for (int j : g.n_adj[i]) {
            if (j == i || pop.labels[j] != pop.labels[i]) continue;
            bool witnessed = false;
            for (int z = 0; z < n && !witnessed; ++z)
                if (in_ball[i][z] && in_ball[j][z]) witnessed = true;
            if (!witnessed) return false;
        }
    return true;
}

struct DenoisePrecondition {
    bool ok = false;
    double c = 0.0;  // min{1/a_bar, c_bar}
    ExpansionCertificate cert;
    std::string why;
};

// pseudolabel denoising assumption: a_bar < 1/3 and exhaustive
// (a_bar, c_bar)-expansion with c_bar > 3; effective c = min{1/a_bar, c_bar}
inline DenoisePrecondition check_denoise_precondition(const NeighborhoodGraph& g,
                                                      const Pseudolabeler& pl,
                                                      double c_bar) {
    DenoisePrecondition pre;
    if (!(pl.a_bar < 1.0 / 3.0)) {
        pre.why = "a_bar >= 1/3";
        return pre;
    }
    if (!(c_bar > 3.0)) {
        pre.why = "c_bar <= 3";
        return pre;
    }
    if (!within_class_overlaps_witnessed(g)) {
        pre.why = "unwitnessed within-class overlap";
        return pre;
    }
    const double a = pl.a_bar > 0.0 ? pl.a_bar : 1e-9;  // vacuous level at 0
    pre.cert = check_mult_expansion(g, a, c_bar, "exhaustive", 0, 0);
    if (!pre.cert.holds) {
        pre.why = "multiplicative expansion certificate failed";
        return pre;
    }
    pre.c = pl.a_bar > 0.0 ? std::min(1.0 / pl.a_bar, c_bar) : c_bar;
    pre.ok = true;
    return pre;
}

inline nlohmann::json graph_digest(const NeighborhoodGraph& g) {
    return {{"n", g.pop->size()},
            {"num_classes", g.pop->num_classes},
            {"radius", g.radius},
            {"separation", measure_separation(g)}};
}

// ---- Theorem checks ---------------------------------------------------------------

// error of the exact objective minimizer against the denoising bound
inline TheoremCheckReport check_theorem_denoise(const NeighborhoodGraph& g,
                                                const Pseudolabeler& pl,
                                                double c_bar,
                                                bool allow_local_search = false) {
    TheoremCheckReport r;
    r.theorem = "denoise_minimizer";
    const DenoisePrecondition pre = check_denoise_precondition(g, pl, c_bar);
    r.inputs = {{"graph", graph_digest(g)},
                {"a_bar", pl.a_bar},
                {"c_bar", c_bar},
                {"c", pre.c},
                {"err_pl", err(*g.pop, pl.labeling)},
                {"certificate", certificate_to_json(pre.cert)}};
    if (!pre.ok) {
        r.status = "refused";
        r.note = "precondition unmet: " + pre.why;
        return r;
    }
    const MinimizerResult min = brute_force_min_pl(g, pl, pre.c, allow_local_search);
    r.exact_minimizer = min.exact;
    r.lhs = err(*g.pop, min.labeling);
    r.rhs = denoise_bound(pre.c, err(*g.pop, pl.labeling), measure_separation(g));
    r.inputs["minimizer"] = min.labeling.assignment;
    finalize_verdict(r);
    return r;
}

// err(G) <= L(G) for every labeling; records the worst-slack G
inline TheoremCheckReport check_lemma_pop_denoise(const NeighborhoodGraph& g,
                                                  const Pseudolabeler& pl,
                                                  double c_bar) {
    TheoremCheckReport r;
    r.theorem = "pop_denoise_all_labelings";
    const DenoisePrecondition pre = check_denoise_precondition(g, pl, c_bar);
    r.inputs = {{"graph", graph_digest(g)},
                {"a_bar", pl.a_bar},
                {"c_bar", c_bar},
                {"c", pre.c},
                {"certificate", certificate_to_json(pre.cert)}};
    if (!pre.ok) {
        r.status = "refused";
        r.note = "precondition unmet: " + pre.why;
        return r;
    }
    const FinitePopulation& pop = *g.pop;
    const int n = pop.size(), K = pop.num_classes;
    double total = 1.0;
    for (int i = 0; i < n; ++i) {
        total *= K;
        if (total > 2e7) {
            r.status = "refused";
            r.note = "labeling enumeration budget exceeded";
            return r;
        }
    }
    double worst = std::numeric_limits<double>::infinity();
    Labeling worst_G{std::vector<int>(n, 1)};
    Labeling G{std::vector<int>(n, 1)};
    while (true) {
        const double s = pl_objective(g, G, pl, pre.c).value - err(pop, G);
        if (s < worst) {
            worst = s;
            worst_G = G;
        }
        int i = n - 1;
        while (i >= 0 && G.assignment[i] == K) {
            G.assignment[i] = 1;
            --i;
        }
        if (i < 0) break;
        ++G.assignment[i];
    }
    r.lhs = err(pop, worst_G);
    r.rhs = pl_objective(g, worst_G, pl, pre.c).value;
    r.inputs["worst_labeling"] = worst_G.assignment;
    finalize_verdict(r);
    return r;
}

// unsupervised-error bound for the constrained consistency minimizer
inline TheoremCheckReport check_theorem_unsup(const NeighborhoodGraph& g, double c,
                                              bool allow_local_search = false) {
    TheoremCheckReport r;
    r.theorem = "unsup_minimizer";
    const double mu = measure_separation(g);
    const double rho = g.pop->rho();
    const ExpansionCertificate cert =
        check_mult_expansion(g, 0.5, c, "exhaustive", 0, 0);
    r.inputs = {{"graph", graph_digest(g)},
                {"c", c},
                {"rho", rho},
                {"certificate", certificate_to_json(cert)}};
    if (!cert.holds) {
        r.status = "refused";
        r.note = "precondition unmet: (1/2, c) expansion certificate failed";
        return r;
    }
    if (!within_class_overlaps_witnessed(g)) {
        r.status = "refused";
        r.note = "precondition unmet: unwitnessed within-class overlap";
        return r;
    }
    if (!(rho > std::max(2.0 / (c - 1.0), 2.0) * mu)) {
        r.status = "refused";
        r.note = "precondition unmet: rho <= max{2/(c-1), 2} * separation";
        return r;
    }
    const MinimizerResult min = brute_force_min_unsup(g, c, allow_local_search);
    if (!min.feasible_found) {
        r.status = "refused";
        r.note = "no feasible labeling";
        return r;
    }
    r.exact_minimizer = min.exact;
    r.lhs = err_unsup(*g.pop, min.labeling);
    r.rhs = unsup_bound(c, mu);
    r.inputs["minimizer"] = min.labeling.assignment;
    finalize_verdict(r);
    return r;
}

// accuracy guarantee under additive expansion on the mistake set, for a
// supplied classifier G (typically the objective minimizer)
inline TheoremCheckReport check_theorem_additive(const NeighborhoodGraph& g,
                                                 const Pseudolabeler& pl, double q,
                                                 double alpha, const Labeling& G) {
    TheoremCheckReport r;
    r.theorem = "additive_fit";
    const FinitePopulation& pop = *g.pop;
    std::vector<int> M;  // global mistake set of the pseudolabeler
    for (int i = 0; i < pop.size(); ++i)
        if (pl.labeling(i) != pop.labels[i]) M.push_back(i);
    const ExpansionCertificate cert =
        check_additive_expansion(g, M, q, alpha, "exhaustive", 0, 0);
    const double err_pl = err(pop, pl.labeling);
    r.inputs = {{"graph", graph_digest(g)},
                {"q", q},
                {"alpha", alpha},
                {"err_pl", err_pl},
                {"certificate", certificate_to_json(cert)},
                {"G", G.assignment}};
    if (!cert.holds) {
        r.status = "refused";
        r.note = "precondition unmet: additive expansion certificate failed";
        return r;
    }
    if (!within_class_overlaps_witnessed(g)) {
        r.status = "refused";
        r.note = "precondition unmet: unwitnessed within-class overlap";
        return r;
    }
    // hypothesis: E[1(G != G_pl or x not in S_B(G))] <= Err(G_pl) + alpha
    std::vector<char> in_sb(pop.size(), 0);
    for (int i : robust_set(g, G)) in_sb[i] = 1;
    double hyp = 0.0;
    for (int i = 0; i < pop.size(); ++i)
        if (G(i) != pl.labeling(i) || !in_sb[i]) hyp += pop.masses[i];
    r.inputs["hypothesis_lhs"] = hyp;
    if (hyp > err_pl + alpha + kMassTol) {
        r.status = "skipped";
        r.note = "classifier does not fit the pseudolabels tightly enough";
        return r;
    }
    r.lhs = err(pop, G);
    r.rhs = 2.0 * (q + robust_regularizer(g, G)) +
            disagreement(G, pl.labeling, pop.masses) - err_pl;
    finalize_verdict(r);
    return r;
}

// ---- Margin-based generalization bound terms --------------------------------------

struct GenBoundTerms {
    double empirical = 0.0;   // fraction of sample with robust margin <= t
    double complexity = 0.0;  // log(n) log(d) sum_i sqrt(q) ||W_i||_F / (t sqrt(n))
    double zeta = 0.0;
    double total = 0.0;
};

inline double net_frob_sum(const FeedforwardNet& net) {
    double s = 0.0;
    for (const auto& W : net.W) s += W.norm();
    return s;
}

inline int net_q_max(const FeedforwardNet& net) {
    int q = 1;
    for (size_t i = 1; i < net.dims.size(); ++i) q = std::max(q, net.dims[i]);
    return q;
}

// all universal constants set to 1; the poly-log factor instantiated as
// log(n) * log(d) -- values are comparable, not absolute guarantees
inline GenBoundTerms generalization_rhs(const FeedforwardNet& net,
                                        const std::vector<double>& robust_margins,
                                        double t, double delta_conf) {
    if (!(t > 0.0)) throw std::invalid_argument("generalization_rhs: t <= 0");
    if (!(delta_conf > 0.0 && delta_conf < 1.0))
        throw std::invalid_argument("generalization_rhs: delta outside (0,1)");
    if (robust_margins.empty())
        throw std::invalid_argument("generalization_rhs: empty sample");
    const double n = static_cast<double>(robust_margins.size());
    const double d = static_cast<double>(net.in_dim());
    const int p = net.depth();
    GenBoundTerms out;
    for (double m : robust_margins)
        if (m <= t) out.empirical += 1.0;
    out.empirical /= n;
    const double logfac = std::log(std::max(n, 2.0)) * std::log(std::max(d, 2.0));
    out.complexity = logfac * std::sqrt(double(net_q_max(net))) *
                     net_frob_sum(net) / (t * std::sqrt(n));
    out.zeta = std::sqrt((std::log(1.0 / delta_conf) + p * std::log(n)) / n);
    out.total = out.empirical + out.complexity + out.zeta;
    return out;
}

struct EndToEndBound {
    double value = 0.0;
    double b1 = 0.0;  // pl mode only
    double b2 = 0.0;
    double empirical_rob = 0.0;
    double empirical_pl = 0.0;
    double complexity = 0.0;
    double zeta = 0.0;
};

// unsupervised finite-sample bound: max{c/(c-1),2} E[1(m_B <= t)]
// + complexity + zeta, with zeta scaled by 1/(c-1)
inline EndToEndBound end_to_end_rhs_unsup(const FeedforwardNet& net,
                                          const std::vector<double>& robust_margins,
                                          double t, double delta_conf, double c,
                                          int num_classes) {
    if (!(c > 1.0)) throw std::invalid_argument("end_to_end_rhs_unsup: c <= 1");
    const GenBoundTerms g = generalization_rhs(net, robust_margins, t, delta_conf);
    const double n = static_cast<double>(robust_margins.size());
    const int p = net.depth();
    EndToEndBound out;
    out.empirical_rob = g.empirical;
    out.complexity = g.complexity;
    out.zeta = (1.0 / (c - 1.0)) *
               std::sqrt((std::log(num_classes / delta_conf) + p * std::log(n)) / n);
    out.value = std::max(c / (c - 1.0), 2.0) * g.empirical + g.complexity + out.zeta;
    return out;
}

// pseudolabel finite-sample bound via the two-threshold quantities B1, B2
inline EndToEndBound end_to_end_rhs_pl(const FeedforwardNet& net,
                                       const std::vector<double>& robust_margins,
                                       const std::vector<double>& pl_margins,
                                       double t1, double t2, double delta_conf,
                                       double c, int num_classes, double err_pl) {
    if (!(c > 1.0)) throw std::invalid_argument("end_to_end_rhs_pl: c <= 1");
    if (!(t1 > 0.0 && t2 > 0.0))
        throw std::invalid_argument("end_to_end_rhs_pl: thresholds <= 0");
    if (robust_margins.size() != pl_margins.size() || robust_margins.empty())
        throw std::invalid_argument("end_to_end_rhs_pl: sample mismatch");
    const double n = static_cast<double>(robust_margins.size());
    const double d = static_cast<double>(net.in_dim());
    const int p = net.depth();
    EndToEndBound out;
    for (size_t i = 0; i < robust_margins.size(); ++i) {
        if (robust_margins[i] <= t1) out.empirical_rob += 1.0;
        if (pl_margins[i] <= t2) out.empirical_pl += 1.0;
    }
    out.empirical_rob /= n;
    out.empirical_pl /= n;
    const double logfac = std::log(std::max(n, 2.0)) * std::log(std::max(d, 2.0));
    out.complexity = logfac * std::sqrt(double(net_q_max(net))) * net_frob_sum(net) *
                     (1.0 / (t1 * std::sqrt(n)) + 1.0 / (t2 * std::sqrt(n)));
    out.zeta = (1.0 / (c - 1.0)) *
               std::sqrt((std::log(num_classes / delta_conf) + p * std::log(n)) / n);
    out.b1 = 2.0 * out.empirical_rob + out.empirical_pl + out.complexity + out.zeta;
    out.b2 = 4.0 * out.empirical_rob + 3.0 * out.empirical_pl + out.complexity +
             out.zeta;
    out.value = std::max(out.b1 - err_pl,
                         out.b2 - (3.0 - 4.0 / (c - 1.0)) * err_pl);
    return out;
}

}  // namespace explab
