#pragma once

// Finite metric-probability spaces: weighted labeled point clouds, synthetic
// generators, and the transformation/neighborhood structure B(x), N(x).

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "explab/common.hpp"

namespace explab {

// A weighted labeled point cloud standing in for the population distribution.
// Labels are 1-based class indices in {1..num_classes}.
struct FinitePopulation {
    std::vector<VectorXd> points;
    std::vector<double> masses;
    std::vector<int> labels;
    int dim = 0;
    int num_classes = 0;

    int size() const { return static_cast<int>(points.size()); }

    void validate() const {
        if (points.size() != masses.size() || points.size() != labels.size())
            throw std::invalid_argument("population: field lengths differ");
        if (points.empty()) throw std::invalid_argument("population: empty");
        double total = 0.0;
        std::vector<int> class_count(num_classes, 0);
        for (int i = 0; i < size(); ++i) {
            if (points[i].size() != dim)
                throw std::invalid_argument("population: point dim mismatch");
            if (!(masses[i] > 0.0))
                throw std::invalid_argument("population: nonpositive mass");
            if (labels[i] < 1 || labels[i] > num_classes)
                throw std::invalid_argument("population: label out of range");
            total += masses[i];
            class_count[labels[i] - 1]++;
        }
        if (std::abs(total - 1.0) > kMassTol)
            throw std::invalid_argument("population: masses do not sum to 1");
        for (int k = 0; k < num_classes; ++k)
            if (class_count[k] == 0)
                throw std::invalid_argument("population: empty class " +
                                            std::to_string(k + 1));
    }

    double class_mass(int cls) const {
        double m = 0.0;
        for (int i = 0; i < size(); ++i)
            if (labels[i] == cls) m += masses[i];
        return m;
    }

    std::vector<int> class_indices(int cls) const {
        std::vector<int> idx;
        for (int i = 0; i < size(); ++i)
            if (labels[i] == cls) idx.push_back(i);
        return idx;
    }

    // Mass of the smallest ground-truth class.
    double rho() const {
        double r = 1.0;
        for (int k = 1; k <= num_classes; ++k) r = std::min(r, class_mass(k));
        return r;
    }
};

// B(x) = { x' : exists T in augmentations with ||x' - T(x)|| <= radius }.
struct TransformSpec {
    double radius = 0.0;
    std::vector<std::function<VectorXd(const VectorXd&)>> augmentations;

    static TransformSpec identity_only(double r) {
        TransformSpec t;
        t.radius = r;
        t.augmentations.push_back([](const VectorXd& x) { return x; });
        return t;
    }

    void validate() const {
        if (radius < 0.0) throw std::invalid_argument("transform: radius < 0");
        if (augmentations.empty())
            throw std::invalid_argument("transform: no augmentations");
    }
};

// Materialized B(x)-membership (directed) and N(x)-overlap (symmetric)
// relations over a finite population.
struct NeighborhoodGraph {
    const FinitePopulation* pop = nullptr;
    double radius = 0.0;
    std::vector<std::vector<int>> b_adj;  // j in b_adj[i]  <=>  x_j in B(x_i)
    std::vector<std::vector<int>> n_adj;  // overlap B(x_i) cap B(x_j) != empty

    int size() const { return static_cast<int>(b_adj.size()); }
};

inline NeighborhoodGraph build_neighborhood_graph(const FinitePopulation& pop,
                                                  const TransformSpec& t) {
    t.validate();
    const int n = pop.size();
    NeighborhoodGraph g;
    g.pop = &pop;
    g.radius = t.radius;
    g.b_adj.assign(n, {});
    g.n_adj.assign(n, {});

    std::vector<std::vector<VectorXd>> aug(n);
    for (int i = 0; i < n; ++i) {
        for (const auto& T : t.augmentations) {
            VectorXd y = T(pop.points[i]);
            if (y.size() != pop.dim)
                throw std::invalid_argument("augmentation changed dimension");
            aug[i].push_back(std::move(y));
        }
    }

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            // x_j in B(x_i): min over T of ||x_j - T(x_i)||
            double dmin = std::numeric_limits<double>::infinity();
            for (const auto& ti : aug[i])
                dmin = std::min(dmin, (pop.points[j] - ti).norm());
            if (dmin <= t.radius + kDistTol) g.b_adj[i].push_back(j);
            if (j < i) continue;
            // overlap: min over pairs (T, T') of ||T(x_i) - T'(x_j)|| <= 2r
            double omin = std::numeric_limits<double>::infinity();
            for (const auto& ti : aug[i])
                for (const auto& tj : aug[j])
                    omin = std::min(omin, (ti - tj).norm());
            if (omin <= 2.0 * t.radius + kDistTol) {
                g.n_adj[i].push_back(j);
                if (j != i) g.n_adj[j].push_back(i);
            }
        }
    }
    for (auto& row : g.n_adj) std::sort(row.begin(), row.end());
    return g;
}

// Empirical separation: mass of points with a b-edge into another class.
// Equals R_B of the ground-truth labeling.
inline double measure_separation(const NeighborhoodGraph& g) {
    const FinitePopulation& pop = *g.pop;
    double mu = 0.0;
    for (int i = 0; i < g.size(); ++i) {
        for (int j : g.b_adj[i]) {
            if (pop.labels[j] != pop.labels[i]) {
                mu += pop.masses[i];
                break;
            }
        }
    }
    return mu;
}

// ---- Generators ------------------------------------------------------------

// Mixture of K isotropic Gaussians N(tau_i, I/d). Point mass = w_i / n.
inline FinitePopulation gen_gaussian_mixture(int K, int d,
                                             const std::vector<VectorXd>& means,
                                             const std::vector<double>& mass_weights,
                                             int n, std::uint64_t seed) {
    if (K < 1 || d < 1 || n < 1)
        throw std::invalid_argument("gen_gaussian_mixture: bad K/d/n");
    if (static_cast<int>(means.size()) != K ||
        static_cast<int>(mass_weights.size()) != K)
        throw std::invalid_argument("gen_gaussian_mixture: K mismatch");
    for (const auto& m : means)
        if (m.size() != d)
            throw std::invalid_argument("gen_gaussian_mixture: mean dim mismatch");
    double wsum = std::accumulate(mass_weights.begin(), mass_weights.end(), 0.0);
    if (!(wsum > 0.0))
        throw std::invalid_argument("gen_gaussian_mixture: weights sum <= 0");

    Rng rng(seed);
    FinitePopulation pop;
    pop.dim = d;
    pop.num_classes = K;
    const double sigma = 1.0 / std::sqrt(static_cast<double>(d));
    for (int k = 0; k < K; ++k) {
        for (int t = 0; t < n; ++t) {
            VectorXd x(d);
            for (int c = 0; c < d; ++c) x[c] = means[k][c] + sigma * gauss(rng);
            pop.points.push_back(std::move(x));
            pop.masses.push_back(mass_weights[k] / wsum / n);
            pop.labels.push_back(k + 1);
        }
    }
    pop.validate();
    return pop;
}

// A latent-to-ambient generator with a declared bi-Lipschitz constant.
struct ManifoldGenerator {
    std::function<VectorXd(const VectorXd&)> map;
    double declared_kappa = 1.0;
};

// Built-in family: per-coordinate smooth monotone map z -> z + amp*tanh(z),
// embedded into ambient dim and composed with a fixed rotation.
// Derivative range [1, 1+amp] per coordinate, rotation is an isometry, so
// kappa = 1 + amp in closed form.
inline ManifoldGenerator make_tanh_warp_generator(int latent_dim, int ambient_dim,
                                                  double amp, double declared_kappa,
                                                  std::uint64_t rot_seed) {
    if (ambient_dim < latent_dim)
        throw std::invalid_argument("manifold generator: ambient < latent dim");
    if (amp < 0.0) throw std::invalid_argument("manifold generator: amp < 0");
    const double kappa = 1.0 + amp;
    if (kappa > declared_kappa + kDistTol)
        throw std::invalid_argument(
            "manifold generator: closed-form kappa exceeds declared bound");
    // Fixed rotation from a seeded QR factorization.
    Rng rng(rot_seed);
    MatrixXd A(ambient_dim, ambient_dim);
    for (int i = 0; i < ambient_dim; ++i)
        for (int j = 0; j < ambient_dim; ++j) A(i, j) = gauss(rng);
    MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(A).householderQ();

    ManifoldGenerator gen;
    gen.declared_kappa = declared_kappa;
    gen.map = [latent_dim, ambient_dim, amp, Q](const VectorXd& z) {
        VectorXd e = VectorXd::Zero(ambient_dim);
        for (int c = 0; c < latent_dim; ++c) e[c] = z[c] + amp * std::tanh(z[c]);
        return VectorXd(Q * e);
    };
    return gen;
}

// Linear generator Q(z) = A z (declared kappa must dominate the singular
// value range of A).
inline ManifoldGenerator make_linear_generator(const MatrixXd& A,
                                               double declared_kappa) {
    Eigen::JacobiSVD<MatrixXd> svd(A);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (smin <= 0.0)
        throw std::invalid_argument("linear generator: not injective");
    const double kappa = std::max(smax, 1.0 / smin);
    if (kappa > declared_kappa + kDistTol)
        throw std::invalid_argument(
            "linear generator: kappa exceeds declared bound");
    ManifoldGenerator gen;
    gen.declared_kappa = declared_kappa;
    gen.map = [A](const VectorXd& z) { return VectorXd(A * z); };
    return gen;
}

// Mixture of manifolds: class-i point = Q_i(z), z ~ N(0, I/d).
inline FinitePopulation gen_manifold_mixture(int K, int latent_dim, int ambient_dim,
                                             const std::vector<ManifoldGenerator>& gens,
                                             int n, std::uint64_t seed) {
    if (static_cast<int>(gens.size()) != K)
        throw std::invalid_argument("gen_manifold_mixture: K mismatch");
    if (ambient_dim < latent_dim)
        throw std::invalid_argument("gen_manifold_mixture: ambient < latent");
    Rng rng(seed);
    FinitePopulation pop;
    pop.dim = ambient_dim;
    pop.num_classes = K;
    const double sigma = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    for (int k = 0; k < K; ++k) {
        for (int t = 0; t < n; ++t) {
            VectorXd z(latent_dim);
            for (int c = 0; c < latent_dim; ++c) z[c] = sigma * gauss(rng);
            VectorXd x = gens[k].map(z);
            if (x.size() != ambient_dim)
                throw std::invalid_argument("generator output dim mismatch");
            pop.points.push_back(std::move(x));
            pop.masses.push_back(1.0 / (K * static_cast<double>(n)));
            pop.labels.push_back(k + 1);
        }
    }
    pop.validate();
    return pop;
}

// Interleaved half-circles with Gaussian noise, n points per class.
// `shift` translates the whole cloud (a "target domain" copy when nonzero).
inline FinitePopulation gen_two_moons(int n, double noise, const VectorXd& shift,
                                      std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_two_moons: n < 1");
    if (shift.size() != 2)
        throw std::invalid_argument("gen_two_moons: shift must be 2-D");
    Rng rng(seed);
    FinitePopulation pop;
    pop.dim = 2;
    pop.num_classes = 2;
    const double pi = 3.14159265358979323846;
    for (int cls = 0; cls < 2; ++cls) {
        for (int t = 0; t < n; ++t) {
            const double ang = pi * (t + 0.5) / n;
            VectorXd x(2);
            if (cls == 0) {
                x << std::cos(ang), std::sin(ang);
            } else {
                x << 1.0 - std::cos(ang), 0.5 - std::sin(ang);
            }
            x[0] += noise * gauss(rng);
            x[1] += noise * gauss(rng);
            x += shift;
            pop.points.push_back(std::move(x));
            pop.masses.push_back(1.0 / (2.0 * n));
            pop.labels.push_back(cls + 1);
        }
    }
    pop.validate();
    return pop;
}

// ---- Serialization ----------------------------------------------------------

inline nlohmann::json population_to_json(const FinitePopulation& pop) {
    nlohmann::json j;
    j["dim"] = pop.dim;
    j["num_classes"] = pop.num_classes;
    j["points"] = nlohmann::json::array();
    for (const auto& p : pop.points) {
        std::vector<double> row(p.data(), p.data() + p.size());
        j["points"].push_back(row);
    }
    j["masses"] = pop.masses;
    j["labels"] = pop.labels;
    return j;
}

inline FinitePopulation population_from_json(const nlohmann::json& j) {
    FinitePopulation pop;
    pop.dim = j.at("dim").get<int>();
    pop.num_classes = j.at("num_classes").get<int>();
    for (const auto& row : j.at("points")) {
        VectorXd p(row.size());
        for (size_t c = 0; c < row.size(); ++c) p[c] = row[c].get<double>();
        pop.points.push_back(std::move(p));
    }
    pop.masses = j.at("masses").get<std::vector<double>>();
    pop.labels = j.at("labels").get<std::vector<int>>();
    pop.validate();
    return pop;
}

}  // namespace explab
