#pragma once

// All-layer margin: the smallest joint perturbation norm that flips the
// prediction away from y, its robust (ball-minimized) variant, and a
// closed-form lower bound from layer norms and Jacobian operator norms.

#include <functional>
#include <limits>
#include <optional>

#include "explab/net.hpp"

namespace explab {

struct MarginOpt {
    int restarts = 5;
    int steps = 300;
    double lambda_init = 1.0;
    double lambda_max = 1024.0;
    double slack = 1e-6;       // push strictly past the decision boundary
    int bisect_iters = 60;
    std::uint64_t seed = 1;
};

struct MarginReport {
    double value = 0.0;
    Perturbation minimizer;
    bool converged = false;
    std::optional<double> lower_bound;
    int restarts_used = 0;
};

namespace detail {

// strict misclassification under the lexicographic tie-break
inline bool flips(const VectorXd& z, int y) { return argmax_lex(z) != y - 1; }

// scale the best feasible perturbation down to the flip threshold
inline void bisect_scale(const FeedforwardNet& net, const VectorXd& x, int y,
                         Perturbation& best, int iters) {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < iters; ++it) {
        const double mid = 0.5 * (lo + hi);
        Perturbation p = best;
        p *= mid;
        if (flips(perturbed_forward(net, x, p), y))
            hi = mid;
        else
            lo = mid;
    }
    best *= hi;
}

}  // namespace detail

// m(F, x, y) = min ||delta|| such that argmax F(x, delta) != y.
// Penalty-method descent with a doubling penalty weight, several restarts
// (one seeded by the exact last-layer flip), then a bisection polish.
inline MarginReport all_layer_margin(const FeedforwardNet& net, const VectorXd& x,
                                     int y, const MarginOpt& opt = {}) {
    MarginReport rep;
    rep.minimizer = Perturbation::zero(net);
    const VectorXd z0 = forward(net, x);
    if (detail::flips(z0, y)) {
        rep.value = 0.0;
        rep.converged = true;
        return rep;
    }

    const int p = net.depth();
    const ForwardTrace clean = perturbed_forward_trace(net, x, rep.minimizer);
    const double last_norm = clean.norms[p - 1];

    // exact last-layer flip: delta_p = s (e_j - e_y) moves the j-vs-y gap by
    // 2 s ||h_{p-1}||; gives a guaranteed feasible starting point
    Perturbation best = Perturbation::zero(net);
    double best_norm = std::numeric_limits<double>::infinity();
    if (last_norm > 0.0) {
        for (int j = 1; j <= net.out_dim(); ++j) {
            if (j == y) continue;
            const double gap = z0[y - 1] - z0[j - 1];
            const double s = (gap + opt.slack) / (2.0 * last_norm);
            Perturbation cand = Perturbation::zero(net);
            cand.delta[p - 1][j - 1] = s;
            cand.delta[p - 1][y - 1] = -s;
            if (detail::flips(perturbed_forward(net, x, cand), y) &&
                cand.norm() < best_norm) {
                best = cand;
                best_norm = best.norm();
            }
        }
    }
    if (!std::isfinite(best_norm)) {
        rep.converged = false;
        rep.value = std::numeric_limits<double>::quiet_NaN();
        return rep;
    }

    Rng rng(opt.seed);
    for (int r = 0; r < opt.restarts; ++r) {
        ++rep.restarts_used;
        Perturbation d = Perturbation::zero(net);
        if (r == 1) {
            d = best;
            d *= 0.9;
        } else if (r >= 2) {
            for (auto& v : d.delta)
                for (int k = 0; k < v.size(); ++k) v[k] = gauss(rng);
            const double n = d.norm();
            if (n > 0.0) d *= best_norm * unif(rng, 0.3, 1.0) / n;
        }
        for (double lam = opt.lambda_init; lam <= opt.lambda_max; lam *= 2.0) {
            for (int t = 0; t < opt.steps; ++t) {
                const ForwardTrace tr = perturbed_forward_trace(net, x, d);
                const LossValueGrad hinge =
                    margin_hinge_loss(tr.logits(), y, opt.slack);
                const Grads g = backward(net, tr, d, lam * hinge.dlogits);
                // objective ||d||^2 + lam * hinge; normalized descent step
                double gn2 = 0.0;
                for (size_t i = 0; i < d.delta.size(); ++i)
                    gn2 += (2.0 * d.delta[i] + g.ddelta[i]).squaredNorm();
                const double gn = std::sqrt(gn2);
                if (gn < 1e-14) break;
                const double eta =
                    0.05 * std::max(best_norm, 1e-8) / (1.0 + 4.0 * t / opt.steps);
                for (size_t i = 0; i < d.delta.size(); ++i)
                    d.delta[i] -= eta * (2.0 * d.delta[i] + g.ddelta[i]) / gn;
                if (detail::flips(perturbed_forward_trace(net, x, d).logits(), y) &&
                    d.norm() < best_norm) {
                    best = d;
                    best_norm = d.norm();
                }
            }
        }
    }

    detail::bisect_scale(net, x, y, best, opt.bisect_iters);
    rep.minimizer = best;
    rep.value = best.norm();
    rep.converged = true;
    return rep;
}

// m_B(F, x) = min over x' in B(x) of m(F, x', argmax F(x)). B(x) is the
// continuous radius-r ball around each augmented center.
inline MarginReport robust_all_layer_margin(
    const FeedforwardNet& net, const VectorXd& x, double ball_radius,
    const MarginOpt& opt = {},
    const std::vector<std::function<VectorXd(const VectorXd&)>>& augmentations = {}) {
    if (ball_radius < 0.0)
        throw std::invalid_argument("robust margin: radius < 0");
    const int y = argmax_lex(forward(net, x)) + 1;

    std::vector<VectorXd> centers;
    if (augmentations.empty())
        centers.push_back(x);
    else
        for (const auto& T : augmentations) centers.push_back(T(x));

    MarginReport out;
    out.minimizer = Perturbation::zero(net);
    out.value = std::numeric_limits<double>::infinity();
    out.converged = true;

    Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
    for (const VectorXd& c : centers) {
        // phase 1: look for a delta = 0 flip inside the ball (projected
        // gradient ascent on the logit gap)
        VectorXd xp = c;
        double worst_gap = -std::numeric_limits<double>::infinity();
        VectorXd worst_x = c;
        for (int rs = 0; rs < 3; ++rs) {
            VectorXd cur = c;
            if (rs > 0 && ball_radius > 0.0) {
                VectorXd dir(c.size());
                for (int k = 0; k < dir.size(); ++k) dir[k] = gauss(rng);
                if (dir.norm() > 0.0)
                    cur += ball_radius * unif(rng, 0.1, 1.0) * dir / dir.norm();
            }
            for (int t = 0; t < 200 && ball_radius > 0.0; ++t) {
                const Perturbation z = Perturbation::zero(net);
                const ForwardTrace tr = perturbed_forward_trace(net, cur, z);
                const LossValueGrad hinge = margin_hinge_loss(tr.logits(), y, 1.0);
                const Grads g = backward(net, tr, z, hinge.dlogits);
                const double gn = g.dx.norm();
                if (gn < 1e-14) break;
                cur += (ball_radius / 20.0) * g.dx / gn;  // ascent on the gap
                VectorXd off = cur - c;
                if (off.norm() > ball_radius) cur = c + ball_radius * off / off.norm();
            }
            const double gap = logit_gap(forward(net, cur), y);
            if (gap > worst_gap) {
                worst_gap = gap;
                worst_x = cur;
            }
            if (detail::flips(forward(net, cur), y)) break;
        }
        if (detail::flips(forward(net, worst_x), y)) {
            out.value = 0.0;
            out.minimizer = Perturbation::zero(net);
            return out;
        }
        xp = worst_x;

        // phase 2: margin at the hardest point found, then a joint
        // refinement over (x', delta)
        MarginOpt inner = opt;
        inner.restarts = std::max(2, opt.restarts - 2);
        MarginReport rep = all_layer_margin(net, xp, y, inner);
        if (!rep.converged) {
            out.converged = false;
            continue;
        }
        Perturbation d = rep.minimizer;
        double best_norm = rep.value;
        VectorXd best_x = xp;
        for (double lam = opt.lambda_init; lam <= opt.lambda_max; lam *= 2.0) {
            for (int t = 0; t < opt.steps / 2; ++t) {
                const ForwardTrace tr = perturbed_forward_trace(net, xp, d);
                const LossValueGrad hinge =
                    margin_hinge_loss(tr.logits(), y, opt.slack);
                const Grads g = backward(net, tr, d, lam * hinge.dlogits);
                double gn2 = g.dx.squaredNorm();
                for (size_t i = 0; i < d.delta.size(); ++i)
                    gn2 += (2.0 * d.delta[i] + g.ddelta[i]).squaredNorm();
                const double gn = std::sqrt(gn2);
                if (gn < 1e-14) break;
                const double eta =
                    0.05 * std::max(best_norm, 1e-8) / (1.0 + 4.0 * t / opt.steps);
                for (size_t i = 0; i < d.delta.size(); ++i)
                    d.delta[i] -= eta * (2.0 * d.delta[i] + g.ddelta[i]) / gn;
                xp -= eta * g.dx / gn;
                VectorXd off = xp - c;
                if (off.norm() > ball_radius) {
                    if (ball_radius > 0.0)
                        xp = c + ball_radius * off / off.norm();
                    else
                        xp = c;
                }
                if (detail::flips(perturbed_forward(net, xp, d), y) &&
                    d.norm() < best_norm) {
                    best_norm = d.norm();
                    best_x = xp;
                    rep.minimizer = d;
                }
            }
        }
        Perturbation polished = rep.minimizer;
        if (detail::flips(perturbed_forward(net, best_x, polished), y))
            detail::bisect_scale(net, best_x, y, polished, opt.bisect_iters);
        const double v = polished.norm();
        if (v < out.value) {
            out.value = v;
            out.minimizer = polished;
        }
    }
    return out;
}

// ---- Closed-form lower bound --------------------------------------------------

// Layer indexing for the bound: outputs o_0 = x, o_{2t-1} = W_t-applied
// pre-activation, o_{2t} = phi(o_{2t-1}), L = 2p-1 layers total.
struct MarginBoundDetail {
    double bound = 0.0;
    double gamma = 0.0;
    std::vector<double> kappa;  // per weight layer i = 1..p
    std::vector<double> psi;
    std::vector<double> s;      // s_0..s_{p-1}
};

namespace detail {

inline double opnorm(const MatrixXd& M) {
    if (M.rows() == 0 || M.cols() == 0) return 0.0;
    return Eigen::JacobiSVD<MatrixXd>(M).singularValues()(0);
}

}  // namespace detail

inline MarginBoundDetail margin_lower_bound_detail(const FeedforwardNet& net,
                                                   const VectorXd& x, int y) {
    net.validate();
    const int p = net.depth();
    const int L = 2 * p - 1;
    const Perturbation zero = Perturbation::zero(net);
    const ForwardTrace tr = perturbed_forward_trace(net, x, zero);
    const VectorXd& z = tr.logits();
    const double gamma = -logit_gap(z, y, nullptr);
    if (!(gamma > 0.0))
        throw std::invalid_argument("margin_lower_bound: nonpositive clean gap");
    const double kbar = act_kappa_bar(net.act);

    // per-layer Jacobians
    std::vector<MatrixXd> J(L + 1);  // J[k] = d o_k / d o_{k-1}
    for (int t = 1; t <= p; ++t) {
        J[2 * t - 1] = net.W[t - 1];
        if (2 * t <= L) {
            const VectorXd dphi = act_dphi_vec(net.act, tr.h[t - 1]);
            J[2 * t] = MatrixXd(dphi.asDiagonal());
        }
    }
    // cumulative Jacobians M[a][b] = J_b ... J_a (output of layer b w.r.t.
    // output of layer a-1), 1 <= a <= b <= L
    std::vector<std::vector<MatrixXd>> M(L + 2, std::vector<MatrixXd>(L + 1));
    for (int a = 1; a <= L; ++a) {
        M[a][a] = J[a];
        for (int b = a + 1; b <= L; ++b) M[a][b] = J[b] * M[a][b - 1];
    }
    auto nu = [&](int a, int b) -> double {
        if (a > b) return 1.0;  // identity / degenerate index
        return detail::opnorm(M[a][b]);
    };
    // margin-sensitive top factor: worst logit-gap row of the end Jacobian
    auto nu_top = [&](int a) -> double {
        double best = 0.0;
        for (int j = 1; j <= net.out_dim(); ++j) {
            if (j == y) continue;
            VectorXd row;
            if (a > L) {
                row = VectorXd::Zero(net.out_dim());
                row[y - 1] = 1.0;
                row[j - 1] -= 1.0;
            } else {
                row = M[a][L].row(y - 1) - M[a][L].row(j - 1);
            }
            best = std::max(best, row.norm());
        }
        return best;
    };
    auto safe_div = [](double num, double den) -> double {
        if (den < 1e-300) return num < 1e-300 ? 0.0 : 1e300;
        return num / den;
    };

    MarginBoundDetail out;
    out.gamma = gamma;
    out.s.resize(p);
    out.s[0] = tr.norms[0];
    for (int i = 1; i < p; ++i) out.s[i] = tr.h[i - 1].norm();

    out.kappa.resize(p);
    out.psi.resize(p);
    for (int i = 1; i <= p; ++i) {
        double psi = 0.0;
        for (int j = i; j <= p - 1; ++j)
            psi += safe_div(out.s[i - 1] * nu(2 * i, 2 * j), out.s[j]);
        for (int jp = 2 * i - 1; jp <= L; ++jp)
            for (int j = 1; j <= 2 * i - 1; ++j)
                psi += safe_div(nu(2 * i, jp) * nu(j, 2 * i - 2), nu(j, jp));
        for (int j = 1; j <= L; ++j)
            for (int jp = j; jp <= L; ++jp)
                for (int jpp = std::max(2 * i, j); jpp <= jp; ++jpp) {
                    if (jpp % 2 != 0) continue;
                    psi += safe_div(kbar * nu(jpp + 1, jp) * nu(2 * i, jpp - 1) *
                                        nu(j, jpp - 1) * out.s[i - 1],
                                    nu(j, jp));
                }
        out.psi[i - 1] = psi;
        out.kappa[i - 1] = out.s[i - 1] * nu_top(2 * i) / gamma + psi;
    }
    double k2 = 0.0;
    for (double k : out.kappa) k2 += k * k;
    out.bound = 1.0 / std::sqrt(k2);
    return out;
}

inline double margin_lower_bound(const FeedforwardNet& net, const VectorXd& x,
                                 int y) {
    return margin_lower_bound_detail(net, x, y).bound;
}

}  // namespace explab
