#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace explab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Absolute tolerance for adjacency / mass comparisons. Keeps exhaustive
// verdicts reproducible across architectures.
inline constexpr double kDistTol = 1e-9;
inline constexpr double kMassTol = 1e-12;

using Rng = std::mt19937_64;

inline double gauss(Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(rng);
}

inline double unif(Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

// argmax with lexicographic tie-break: smallest index among maxima.
inline int argmax_lex(const VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace explab
