#pragma once

// Expansion certificates: multiplicative, additive, constant. Exhaustive
// verdicts enumerate subsets with bitmask DP; sampled mode searches for
// violations and never claims one without a re-verifiable witness.

#include <bit>
#include <limits>

#include <json.hpp>

#include "explab/population.hpp"

namespace explab {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ExpansionCertificate {
    std::string kind;  // multiplicative | additive | constant
    nlohmann::json params;
    bool holds = true;
    double worst = kInf;  // worst ratio (multiplicative) or worst slack
    std::vector<int> witness;
    std::string mode;  // exhaustive | sampled
    std::uint64_t examined = 0;
};

inline nlohmann::json certificate_to_json(const ExpansionCertificate& c) {
    nlohmann::json j;
    j["kind"] = c.kind;
    j["params"] = c.params;
    j["holds"] = c.holds;
    j["worst"] = std::isfinite(c.worst) ? nlohmann::json(c.worst)
                                        : nlohmann::json("inf");
    j["witness"] = c.witness;
    j["mode"] = c.mode;
    j["examined"] = c.examined;
    return j;
}

// N(S) through the overlap relation.
inline std::vector<int> neighborhood_of_set(const NeighborhoodGraph& g,
                                            const std::vector<int>& S) {
    std::vector<char> in(g.size(), 0);
    for (int i : S) {
        if (i < 0 || i >= g.size())
            throw std::out_of_range("neighborhood_of_set: index");
        for (int j : g.n_adj[i]) in[j] = 1;
    }
    std::vector<int> out;
    for (int j = 0; j < g.size(); ++j)
        if (in[j]) out.push_back(j);
    return out;
}

// N*(S) = union over classes i of N(S cap C_i) cap C_i.
inline std::vector<int> restricted_neighborhood(const NeighborhoodGraph& g,
                                                const std::vector<int>& S) {
    const auto& labels = g.pop->labels;
    std::vector<char> in(g.size(), 0);
    for (int i : S) {
        if (i < 0 || i >= g.size())
            throw std::out_of_range("restricted_neighborhood: index");
        for (int j : g.n_adj[i])
            if (labels[j] == labels[i]) in[j] = 1;
    }
    std::vector<int> out;
    for (int j = 0; j < g.size(); ++j)
        if (in[j]) out.push_back(j);
    return out;
}

namespace detail {

inline std::vector<int> bits_to_indices(std::uint64_t mask,
                                        const std::vector<int>& idx) {
    std::vector<int> out;
    for (std::uint64_t m = mask; m; m &= m - 1)
        out.push_back(idx[std::countr_zero(m)]);
    return out;
}

inline double mask_mass(std::uint64_t mask, const std::vector<double>& w) {
    double s = 0.0;
    for (std::uint64_t m = mask; m; m &= m - 1) s += w[std::countr_zero(m)];
    return s;
}

inline std::uint64_t mask_union_nbrs(std::uint64_t mask,
                                     const std::vector<std::uint64_t>& nbr) {
    std::uint64_t u = 0;
    for (std::uint64_t m = mask; m; m &= m - 1) u |= nbr[std::countr_zero(m)];
    return u;
}

inline std::uint64_t random_mask(int m, double incl, Rng& rng) {
    std::uint64_t mask = 0;
    for (int j = 0; j < m; ++j)
        if (unif(rng) < incl) mask |= (std::uint64_t{1} << j);
    return mask;
}

}  // namespace detail

// Multiplicative (a, c)-expansion, evaluated per class on the class-
// conditional measure with neighborhoods intersected with the class.
inline ExpansionCertificate check_mult_expansion(const NeighborhoodGraph& g,
                                                 double a, double c,
                                                 const std::string& mode,
                                                 std::uint64_t budget,
                                                 std::uint64_t seed) {
    if (!(a > 0.0 && a <= 1.0) || c < 1.0)
        throw std::invalid_argument("check_mult_expansion: need 0<a<=1, c>=1");
    const FinitePopulation& pop = *g.pop;
    ExpansionCertificate cert;
    cert.kind = "multiplicative";
    cert.params = {{"a", a}, {"c", c}};
    cert.mode = mode;

    // among violators, keep the one with the smallest ratio; a subset can
    // satisfy the capped bound while having a smaller ratio than a violator
    double worst_viol = kInf;
    std::vector<int> viol_witness;

    for (int cls = 1; cls <= pop.num_classes; ++cls) {
        std::vector<int> idx = pop.class_indices(cls);
        const int m = static_cast<int>(idx.size());
        const double cmass = pop.class_mass(cls);
        std::vector<double> w(m);  // class-conditional point masses
        for (int j = 0; j < m; ++j) w[j] = pop.masses[idx[j]] / cmass;
        // within-class n-neighbor bitmask per class-local point
        std::vector<int> local(pop.size(), -1);
        for (int j = 0; j < m; ++j) local[idx[j]] = j;
        std::vector<std::uint64_t> nbr(m, 0);
        for (int j = 0; j < m; ++j)
            for (int t : g.n_adj[idx[j]])
                if (local[t] >= 0) nbr[j] |= (std::uint64_t{1} << local[t]);

        auto eval = [&](std::uint64_t vmask, double& pv, double& pnv) {
            pv = detail::mask_mass(vmask, w);
            pnv = detail::mask_mass(detail::mask_union_nbrs(vmask, nbr), w);
        };
        auto record = [&](std::uint64_t vmask, double pv, double pnv) {
            const double ratio = pnv / pv;
            if (ratio < cert.worst) {
                cert.worst = ratio;
                cert.witness = detail::bits_to_indices(vmask, idx);
            }
            if (pnv < std::min(c * pv, 1.0) - kMassTol) {
                cert.holds = false;
                if (ratio < worst_viol) {
                    worst_viol = ratio;
                    viol_witness = detail::bits_to_indices(vmask, idx);
                }
                return true;
            }
            return false;
        };

        if (mode == "exhaustive") {
            if (m > 22)
                throw std::invalid_argument(
                    "check_mult_expansion: exhaustive cap is 22 points/class");
            // subset-sum and neighborhood DP over the class power set; scan
            // everything so `worst` is the true minimum ratio
            std::vector<double> pm(std::size_t{1} << m, 0.0);
            std::vector<std::uint64_t> nv(std::size_t{1} << m, 0);
            for (std::uint64_t v = 1; v < (std::uint64_t{1} << m); ++v) {
                const int low = std::countr_zero(v);
                pm[v] = pm[v & (v - 1)] + w[low];
                nv[v] = nv[v & (v - 1)] | nbr[low];
                ++cert.examined;
                if (pm[v] > a + kMassTol) continue;
                record(v, pm[v], detail::mask_mass(nv[v], w));
            }
        } else if (mode == "sampled") {
            Rng rng(seed + static_cast<std::uint64_t>(cls));
            const std::uint64_t per_class = budget / pop.num_classes + 1;
            for (std::uint64_t t = 0; t < per_class; ++t) {
                std::uint64_t v = (m <= 63)
                                      ? detail::random_mask(m, unif(rng), rng)
                                      : 0;
                if (m > 63)
                    throw std::invalid_argument(
                        "check_mult_expansion: sampled bitmask cap is 63");
                if (v == 0) continue;
                double pv, pnv;
                eval(v, pv, pnv);
                // greedy shrink: drop points while the ratio decreases and
                // the subset stays qualifying
                bool improved = true;
                while (improved && v) {
                    improved = false;
                    for (std::uint64_t b = v; b; b &= b - 1) {
                        const std::uint64_t cand = v & ~(b & (~b + 1));
                        if (cand == 0) continue;
                        double cpv, cpnv;
                        eval(cand, cpv, cpnv);
                        if (cpnv / cpv < pnv / pv) {
                            v = cand;
                            pv = cpv;
                            pnv = cpnv;
                            improved = true;
                            break;
                        }
                    }
                }
                ++cert.examined;
                if (pv > a + kMassTol) continue;
                if (record(v, pv, pnv)) {
                    cert.witness = viol_witness;
                    return cert;
                }
            }
        } else {
            throw std::invalid_argument("check_mult_expansion: unknown mode");
        }
    }
    if (!cert.holds) cert.witness = viol_witness;
    return cert;
}

// Additive (q, alpha)-expansion on S: P(N*(V)\S) > P(V) + alpha for all
// V subseteq S with P(V) > q. `cls = 0` uses the global measure; `cls > 0`
// restricts to the class-conditional measure of that class (S must then lie
// inside the class).
inline ExpansionCertificate check_additive_expansion(
    const NeighborhoodGraph& g, const std::vector<int>& S, double q,
    double alpha, const std::string& mode, std::uint64_t budget,
    std::uint64_t seed, int cls = 0) {
    const FinitePopulation& pop = *g.pop;
    ExpansionCertificate cert;
    cert.kind = "additive";
    cert.params = {{"q", q}, {"alpha", alpha}, {"S", S}, {"cls", cls}};
    cert.mode = mode;

    const int m = static_cast<int>(S.size());
    double norm = 1.0;
    if (cls > 0) norm = pop.class_mass(cls);
    std::vector<double> w(m);
    for (int j = 0; j < m; ++j) {
        if (S[j] < 0 || S[j] >= pop.size())
            throw std::out_of_range("check_additive_expansion: index");
        if (cls > 0 && pop.labels[S[j]] != cls)
            throw std::invalid_argument(
                "check_additive_expansion: S leaves the class");
        w[j] = pop.masses[S[j]] / norm;
    }
    std::vector<char> inS(pop.size(), 0);
    for (int i : S) inS[i] = 1;

    // mass of N*(V)\S under the chosen measure
    auto outside_mass = [&](std::uint64_t vmask) {
        std::vector<int> V = detail::bits_to_indices(vmask, S);
        double out = 0.0;
        for (int j : restricted_neighborhood(g, V))
            if (!inS[j] && (cls == 0 || pop.labels[j] == cls))
                out += pop.masses[j] / norm;
        return out;
    };
    auto record = [&](std::uint64_t vmask, double pv) {
        const double slack = outside_mass(vmask) - pv - alpha;
        if (slack < cert.worst) {
            cert.worst = slack;
            cert.witness = detail::bits_to_indices(vmask, S);
        }
        if (slack < -kMassTol) {
            cert.holds = false;
            return true;
        }
        return false;
    };

    if (mode == "exhaustive") {
        if (m > 22)
            throw std::invalid_argument(
                "check_additive_expansion: exhaustive cap is |S| <= 22");
        std::vector<double> pm(std::size_t{1} << m, 0.0);
        for (std::uint64_t v = 1; v < (std::uint64_t{1} << m); ++v) {
            const int low = std::countr_zero(v);
            pm[v] = pm[v & (v - 1)] + w[low];
            ++cert.examined;
            if (!(pm[v] > q + kMassTol)) continue;
            record(v, pm[v]);  // full scan: `worst` is the true minimum slack
        }
    } else if (mode == "sampled") {
        if (m > 63)
            throw std::invalid_argument(
                "check_additive_expansion: sampled bitmask cap is 63");
        Rng rng(seed);
        for (std::uint64_t t = 0; t < budget; ++t) {
            std::uint64_t v = detail::random_mask(m, unif(rng), rng);
            if (v == 0) continue;
            double pv = detail::mask_mass(v, w);
            ++cert.examined;
            if (!(pv > q + kMassTol)) continue;
            if (record(v, pv)) return cert;
        }
    } else {
        throw std::invalid_argument("check_additive_expansion: unknown mode");
    }
    return cert;
}

// Constant (q, xi)-expansion: P(N*(S)\S) >= min{xi, P(S)} for all S with
// P(S) >= q and P(S cap C_i) <= P(C_i)/2 for every class i.
inline ExpansionCertificate check_constant_expansion(const NeighborhoodGraph& g,
                                                     double q, double xi,
                                                     const std::string& mode,
                                                     std::uint64_t budget,
                                                     std::uint64_t seed) {
    const FinitePopulation& pop = *g.pop;
    const int n = pop.size();
    ExpansionCertificate cert;
    cert.kind = "constant";
    cert.params = {{"q", q}, {"xi", xi}};
    cert.mode = mode;

    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::vector<double> half(pop.num_classes + 1, 0.0);
    for (int cls = 1; cls <= pop.num_classes; ++cls)
        half[cls] = pop.class_mass(cls) / 2.0;
    // same-class n-neighbor bitmask per point
    std::vector<std::uint64_t> rnbr(n, 0);
    for (int i = 0; i < n; ++i)
        for (int j : g.n_adj[i])
            if (pop.labels[j] == pop.labels[i])
                rnbr[i] |= (std::uint64_t{1} << j);

    auto class_masses = [&](std::uint64_t smask, std::vector<double>& cm) {
        std::fill(cm.begin(), cm.end(), 0.0);
        for (std::uint64_t m = smask; m; m &= m - 1) {
            const int i = std::countr_zero(m);
            cm[pop.labels[i]] += pop.masses[i];
        }
    };
    auto record = [&](std::uint64_t smask, double ps, std::uint64_t nstar) {
        const double out = detail::mask_mass(nstar & ~smask, pop.masses);
        const double slack = out - std::min(xi, ps);
        if (slack < cert.worst) {
            cert.worst = slack;
            cert.witness = detail::bits_to_indices(smask, idx);
        }
        if (slack < -kMassTol) {
            cert.holds = false;
            return true;
        }
        return false;
    };

    std::vector<double> cm(pop.num_classes + 1);
    if (mode == "exhaustive") {
        if (n > 22)
            throw std::invalid_argument(
                "check_constant_expansion: exhaustive cap is 22 points");
        std::vector<double> pm(std::size_t{1} << n, 0.0);
        std::vector<std::uint64_t> ns(std::size_t{1} << n, 0);
        for (std::uint64_t s = 1; s < (std::uint64_t{1} << n); ++s) {
            const int low = std::countr_zero(s);
            pm[s] = pm[s & (s - 1)] + pop.masses[low];
            ns[s] = ns[s & (s - 1)] | rnbr[low];
            ++cert.examined;
            if (pm[s] < q - kMassTol) continue;
            class_masses(s, cm);
            bool ok = true;
            for (int cls = 1; cls <= pop.num_classes; ++cls)
                if (cm[cls] > half[cls] + kMassTol) ok = false;
            if (!ok) continue;
            record(s, pm[s], ns[s]);  // full scan: `worst` is the true minimum
        }
    } else if (mode == "sampled") {
        if (n > 63)
            throw std::invalid_argument(
                "check_constant_expansion: sampled bitmask cap is 63");
        Rng rng(seed);
        for (std::uint64_t t = 0; t < budget; ++t) {
            std::uint64_t s = detail::random_mask(n, unif(rng), rng);
            if (s == 0) continue;
            ++cert.examined;
            const double ps = detail::mask_mass(s, pop.masses);
            if (ps < q - kMassTol) continue;
            class_masses(s, cm);
            bool ok = true;
            for (int cls = 1; cls <= pop.num_classes; ++cls)
                if (cm[cls] > half[cls] + kMassTol) ok = false;
            if (!ok) continue;
            if (record(s, ps, detail::mask_union_nbrs(s, rnbr))) return cert;
        }
    } else {
        throw std::invalid_argument("check_constant_expansion: unknown mode");
    }
    return cert;
}

// Multiplicative (a, c) expansion of a class measure yields additive
// expansion on the mistake set of class-conditional mass `mistake_mass`.
inline std::pair<double, double> mult_to_additive(double c, double beta,
                                                  double mistake_mass) {
    if (!(c > 1.0)) throw std::invalid_argument("mult_to_additive: c <= 1");
    if (!(beta > 0.0 && beta <= c - 1.0))
        throw std::invalid_argument("mult_to_additive: beta outside (0, c-1]");
    return {beta * mistake_mass / (c - 1.0), (beta - 1.0) * mistake_mass};
}

// (1/2, c) multiplicative expansion yields (q, xi)-constant expansion.
inline double mult_to_constant(double c, double xi) {
    if (!(c > 1.0)) throw std::invalid_argument("mult_to_constant: c <= 1");
    if (!(xi > 0.0)) throw std::invalid_argument("mult_to_constant: xi <= 0");
    return xi / (c - 1.0);
}

// ---- Standard normal CDF / quantile, halfspace profile ----------------------

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Acklam's rational approximation polished by Newton steps on the CDF.
inline double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("std_normal_quantile: p outside (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double cc[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double x;
    if (p < plow) {
        const double u = std::sqrt(-2 * std::log(p));
        x = (((((cc[0] * u + cc[1]) * u + cc[2]) * u + cc[3]) * u + cc[4]) * u + cc[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1);
    } else if (p <= phigh) {
        const double u = p - 0.5, t = u * u;
        x = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * u /
            (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1);
    } else {
        const double u = std::sqrt(-2 * std::log(1 - p));
        x = -(((((cc[0] * u + cc[1]) * u + cc[2]) * u + cc[3]) * u + cc[4]) * u + cc[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1);
    }
    for (int it = 0; it < 3; ++it) {  // Newton refinement to ~1e-15
        const double e = std_normal_cdf(x) - p;
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
        x -= e / pdf;
    }
    return x;
}

// Halfspace enlargement ratio Phi(Phi^{-1}(p) + sigma)/p over a grid in (0, 0.5].
inline std::vector<double> halfspace_expansion_profile(
    double enlargement_sigma, const std::vector<double>& p_grid) {
    if (enlargement_sigma < 0.0)
        throw std::invalid_argument("halfspace profile: sigma < 0");
    std::vector<double> out;
    out.reserve(p_grid.size());
    for (double p : p_grid) {
        if (!(p > 0.0 && p <= 0.5))
            throw std::invalid_argument("halfspace profile: p outside (0, 0.5]");
        out.push_back(std_normal_cdf(std_normal_quantile(p) + enlargement_sigma) / p);
    }
    return out;
}

}  // namespace explab
