#pragma once

// Minimizers of the population objectives (exact enumeration and local
// search over labelings) and the net training loop: pseudolabel fitting
// with VAT consistency, hidden-layer adversarial perturbations, and
// EMA-quantile pseudolabel dropping with entropy minimization.

#include <deque>
#include <sstream>

#include "explab/objectives.hpp"

namespace explab {

struct TrainConfig {
    int steps = 400;
    int batch_size = 64;
    double lr = 0.1;            // cosine-decayed
    double weight_decay = 5e-4;
    bool vat_enabled = true;
    double lambda_v = 3.0;      // grid {3, 10, 30}
    double vat_radius = 1.0;    // unit l2 perturbation norm
    bool amo_enabled = false;
    double amo_lr = 1.0;        // single ascent step on hidden perturbations
    double tau_final = 0.0;     // fraction of pseudolabels dropped at the end
    double ema_decay = 0.999;   // weight EMA and loss-quantile EMA
    double lambda_ent = 0.3;    // entropy weight on dropped / unlabeled points
    double lambda_bal = 1.0;
    double rho_target = 0.0;
    int eval_every = 20;
    std::uint64_t seed = 0;

    void validate() const {
        if (steps < 1 || batch_size < 1) throw ConfigError("train: steps/batch");
        if (!(lr > 0.0)) throw ConfigError("train: lr <= 0");
        if (weight_decay < 0.0) throw ConfigError("train: weight decay < 0");
        if (!(tau_final >= 0.0 && tau_final < 1.0))
            throw ConfigError("train: tau_final outside [0, 1)");
        if (!(ema_decay > 0.0 && ema_decay < 1.0))
            throw ConfigError("train: ema decay outside (0, 1)");
        if (vat_enabled && !(vat_radius > 0.0))
            throw ConfigError("train: vat radius <= 0");
    }
};

struct EmaState {
    FeedforwardNet shadow;
    double loss_quantile = 0.0;
    bool quantile_init = false;
    std::vector<double> raw_quantiles;  // per-step inputs to the quantile EMA

    void update_weights(const FeedforwardNet& net, double decay) {
        for (size_t i = 0; i < shadow.W.size(); ++i)
            shadow.W[i] = decay * shadow.W[i] + (1.0 - decay) * net.W[i];
    }
};

struct HistoryRow {
    int step = 0;
    double loss = 0.0;
    double err = 0.0;
    double err_unsup = 0.0;
    double disagreement_pl = 0.0;
    double r_b_estimate = 0.0;
    double tau_i = 0.0;
    double ignored_fraction = 0.0;
};

struct TrainHistory {
    std::vector<HistoryRow> rows;

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "step,loss,err,err_unsup,disagreement_pl,r_b_estimate,tau_i,"
              "ignored_fraction\n";
        for (const auto& r : rows)
            os << r.step << ',' << r.loss << ',' << r.err << ',' << r.err_unsup
               << ',' << r.disagreement_pl << ',' << r.r_b_estimate << ','
               << r.tau_i << ',' << r.ignored_fraction << '\n';
        return os.str();
    }
};

// ---- Controlled pseudolabelers -------------------------------------------------

// Flip a per-class mass of approximately `a_bar_target` (never exceeding it
// by more than a tolerance; within one point mass from below). `clustered`
// flips an n-connected ball grown by BFS to stress expansion.
inline Pseudolabeler make_pseudolabeler(const FinitePopulation& pop,
                                        double a_bar_target, std::uint64_t seed,
                                        const std::string& mode = "random",
                                        const NeighborhoodGraph* graph = nullptr) {
    if (a_bar_target < 0.0 || a_bar_target >= 1.0)
        throw std::invalid_argument("make_pseudolabeler: target outside [0,1)");
    if (mode == "clustered" && graph == nullptr)
        throw std::invalid_argument("make_pseudolabeler: clustered needs a graph");
    Rng rng(seed);
    Labeling lab = Labeling::ground_truth(pop);
    for (int cls = 1; cls <= pop.num_classes; ++cls) {
        const double cmass = pop.class_mass(cls);
        if (a_bar_target >= 1.0 - kMassTol)
            throw std::invalid_argument("make_pseudolabeler: target flips class");
        std::vector<int> order = pop.class_indices(cls);
        if (mode == "random") {
            std::shuffle(order.begin(), order.end(), rng);
        } else if (mode == "clustered") {
            // BFS over within-class n-edges from a random seed point
            std::vector<int> idx = order;
            const int start = idx[rng() % idx.size()];
            std::vector<char> seen(pop.size(), 0);
            std::deque<int> q{start};
            seen[start] = 1;
            order.clear();
            while (!q.empty()) {
                const int cur = q.front();
                q.pop_front();
                order.push_back(cur);
                for (int nb : graph->n_adj[cur])
                    if (!seen[nb] && pop.labels[nb] == cls) {
                        seen[nb] = 1;
                        q.push_back(nb);
                    }
            }
            for (int i : idx)  // disconnected leftovers, appended last
                if (!seen[i]) order.push_back(i);
        } else {
            throw std::invalid_argument("make_pseudolabeler: unknown mode");
        }
        double flipped = 0.0;
        for (int i : order) {
            const double w = pop.masses[i] / cmass;
            if (flipped + w > a_bar_target + kMassTol) continue;
            flipped += w;
            int to = 1 + static_cast<int>(rng() % pop.num_classes);
            if (to == cls) to = (cls % pop.num_classes) + 1;
            lab.assignment[i] = to;
        }
    }
    return Pseudolabeler::from_labeling(pop, lab);
}

// ---- Exact and local-search minimizers -----------------------------------------

struct MinimizerResult {
    Labeling labeling;
    double value = 0.0;
    bool exact = true;
    bool feasible_found = true;  // unsup mode only
};

namespace detail {

inline bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

template <typename Eval>
MinimizerResult enumerate_labelings(const NeighborhoodGraph& g, Eval eval) {
    const FinitePopulation& pop = *g.pop;
    const int n = pop.size(), K = pop.num_classes;
    double total = 1.0;
    for (int i = 0; i < n; ++i) {
        total *= K;
        if (total > 2e7)
            throw std::invalid_argument("enumerate_labelings: K^n budget exceeded");
    }
    MinimizerResult best;
    best.value = std::numeric_limits<double>::infinity();
    best.feasible_found = false;
    Labeling G{std::vector<int>(n, 1)};
    while (true) {
        double v;
        if (eval(G, v)) {  // feasible
            // strict improvement keeps the lexicographically smallest argmin
            if (v < best.value - kMassTol ||
                (!best.feasible_found && std::isinf(best.value))) {
                best.value = v;
                best.labeling = G;
                best.feasible_found = true;
            }
        }
        // odometer increment in lexicographic order
        int i = n - 1;
        while (i >= 0 && G.assignment[i] == K) {
            G.assignment[i] = 1;
            --i;
        }
        if (i < 0) break;
        ++G.assignment[i];
    }
    return best;
}

template <typename Eval>
MinimizerResult local_search_labelings(const NeighborhoodGraph& g, Eval eval,
                                       std::uint64_t seed, int restarts = 20) {
    const FinitePopulation& pop = *g.pop;
    const int n = pop.size(), K = pop.num_classes;
    Rng rng(seed);
    MinimizerResult best;
    best.value = std::numeric_limits<double>::infinity();
    best.exact = false;
    best.feasible_found = false;
    for (int r = 0; r < restarts; ++r) {
        Labeling G{std::vector<int>(n)};
        if (r == 0)
            G = Labeling::ground_truth(pop);
        else
            for (int i = 0; i < n; ++i)
                G.assignment[i] = 1 + static_cast<int>(rng() % K);
        double cur;
        bool cur_ok = eval(G, cur);
        bool improved = true;
        while (improved) {
            improved = false;
            for (int i = 0; i < n && !improved; ++i) {
                const int old = G.assignment[i];
                for (int k = 1; k <= K && !improved; ++k) {
                    if (k == old) continue;
                    G.assignment[i] = k;
                    double v;
                    if (eval(G, v) && (!cur_ok || v < cur - kMassTol)) {
                        cur = v;
                        cur_ok = true;
                        improved = true;  // first improvement
                    } else {
                        G.assignment[i] = old;
                    }
                }
            }
        }
        if (cur_ok && (cur < best.value || !best.feasible_found)) {
            best.value = cur;
            best.labeling = G;
            best.feasible_found = true;
        }
    }
    return best;
}

}  // namespace detail

// global argmin of the weighted pseudolabel objective
inline MinimizerResult brute_force_min_pl(const NeighborhoodGraph& g,
                                          const Pseudolabeler& pl, double c,
                                          bool allow_local_search = true,
                                          std::uint64_t seed = 0) {
    auto eval = [&](const Labeling& G, double& v) {
        v = pl_objective(g, G, pl, c).value;
        return true;
    };
    const int n = g.pop->size(), K = g.pop->num_classes;
    if (std::pow(double(K), double(n)) <= 2e7)
        return detail::enumerate_labelings(g, eval);
    if (!allow_local_search)
        throw std::invalid_argument("brute_force_min_pl: budget exceeded");
    return detail::local_search_labelings(g, eval, seed);
}

// argmin of R_B(G) over labelings satisfying the class-mass constraint
inline MinimizerResult brute_force_min_unsup(const NeighborhoodGraph& g, double c,
                                             bool allow_local_search = true,
                                             std::uint64_t seed = 0) {
    auto eval = [&](const Labeling& G, double& v) {
        if (!unsup_feasible(g, G, c).feasible) return false;
        v = robust_regularizer(g, G);
        return true;
    };
    const int n = g.pop->size(), K = g.pop->num_classes;
    if (std::pow(double(K), double(n)) <= 2e7)
        return detail::enumerate_labelings(g, eval);
    if (!allow_local_search)
        throw std::invalid_argument("brute_force_min_unsup: budget exceeded");
    return detail::local_search_labelings(g, eval, seed);
}

// ---- Adversarial steps -----------------------------------------------------------

// one ascent step (from zero) on hidden-layer perturbations for the
// consistency loss KL(p_ref || F(x, delta)); the output layer stays clean
inline Perturbation amo_step(const FeedforwardNet& net, const VectorXd& x,
                             const VectorXd& p_ref, double amo_lr) {
    Perturbation d = Perturbation::zero(net);
    const ForwardTrace tr = perturbed_forward_trace(net, x, d);
    const LossValueGrad kl = kl_loss(tr.logits(), p_ref);
    const Grads g = backward(net, tr, d, kl.dlogits);
    for (int i = 0; i + 1 < net.depth(); ++i) d.delta[i] = amo_lr * g.ddelta[i];
    return d;
}

namespace detail {

// joint VAT + AMO direction from a single backward pass at a seeded offset:
// input part normalized to the radius, hidden part one lr-1 ascent step
struct ConsistencyTarget {
    VectorXd x_adv;
    Perturbation hidden;  // zero when AMO disabled
};

inline ConsistencyTarget consistency_target(const FeedforwardNet& net,
                                            const VectorXd& x, double radius,
                                            bool amo, double amo_lr,
                                            std::uint64_t seed) {
    Rng rng(seed);
    VectorXd u(x.size());
    for (int k = 0; k < u.size(); ++k) u[k] = gauss(rng);
    if (u.norm() > 0.0) u /= u.norm();
    const VectorXd p_ref = softmax(forward(net, x));
    const VectorXd x0 = x + 1e-6 * radius * u;
    const Perturbation zero = Perturbation::zero(net);
    const ForwardTrace tr = perturbed_forward_trace(net, x0, zero);
    const LossValueGrad kl = kl_loss(tr.logits(), p_ref);
    const Grads g = backward(net, tr, zero, kl.dlogits);
    ConsistencyTarget out;
    VectorXd dir = g.dx;
    if (dir.norm() < 1e-14) dir = u;
    dir /= dir.norm();
    out.x_adv = x + radius * dir;
    out.hidden = Perturbation::zero(net);
    if (amo)
        for (int i = 0; i + 1 < net.depth(); ++i)
            out.hidden.delta[i] = amo_lr * g.ddelta[i];
    return out;
}

inline double cosine_lr(double lr0, int t, int steps) {
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t / steps));
}

inline Labeling net_labeling(const FeedforwardNet& net, const FinitePopulation& pop) {
    Labeling G{std::vector<int>(pop.size())};
    for (int i = 0; i < pop.size(); ++i) G.assignment[i] = predict(net, pop.points[i]);
    return G;
}

// fraction of points whose prediction flips at the adversarial point:
// a continuous-ball estimate of R_B for the net's labeling
inline double rb_estimate(const FeedforwardNet& net, const FinitePopulation& pop,
                          double radius, std::uint64_t seed) {
    if (!(radius > 0.0)) return 0.0;
    double r = 0.0;
    for (int i = 0; i < pop.size(); ++i) {
        const VectorXd xa =
            vat_perturbation(net, pop.points[i], radius, seed + std::uint64_t(i));
        if (predict(net, xa) != predict(net, pop.points[i])) r += pop.masses[i];
    }
    return r;
}

}  // namespace detail

// ---- Training loops ----------------------------------------------------------------

inline TrainHistory train_pseudolabel(FeedforwardNet& net,
                                      const FinitePopulation& pop,
                                      const Pseudolabeler& pl,
                                      const TrainConfig& cfg,
                                      EmaState* ema_out = nullptr) {
    cfg.validate();
    net.validate();
    const int n = pop.size();
    Rng rng(cfg.seed);
    EmaState ema{net};
    std::vector<double> ema_loss(n, 0.0);
    std::vector<char> ignored(n, 0);
    const bool minent = cfg.tau_final > 0.0;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    int cursor = 0;
    TrainHistory hist;

    for (int t = 0; t < cfg.steps; ++t) {
        const double lr = detail::cosine_lr(cfg.lr, t, cfg.steps);
        const double tau_i = cfg.tau_final * t / std::max(1, cfg.steps - 1);

        if (minent) {
            // per-example cross-entropy under the EMA model; pseudolabels in
            // the top tau_i loss quantile are dropped this step
            std::vector<double> losses(n);
            for (int i = 0; i < n; ++i)
                losses[i] = ce_loss(forward(ema.shadow, pop.points[i]),
                                    pl.labeling(i)).value;
            std::vector<double> sorted = losses;
            std::sort(sorted.begin(), sorted.end());
            const int pos = std::min(
                n - 1, static_cast<int>(std::floor((1.0 - tau_i) * (n - 1))));
            const double q = sorted[pos];
            ema.raw_quantiles.push_back(q);
            if (!ema.quantile_init) {
                ema.loss_quantile = q;
                ema.quantile_init = true;
            } else {
                ema.loss_quantile =
                    cfg.ema_decay * ema.loss_quantile + (1.0 - cfg.ema_decay) * q;
            }
            for (int i = 0; i < n; ++i) {
                ema_loss[i] = losses[i];
                ignored[i] = tau_i > 0.0 && losses[i] > ema.loss_quantile;
            }
        }

        // minibatch
        std::vector<int> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == n) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }

        Grads acc = Grads::zero(net);
        double batch_loss = 0.0;
        std::vector<VectorXd> batch_p;  // softmax outputs for the balance term
        const Perturbation zero = Perturbation::zero(net);
        for (int i : batch) {
            const VectorXd& x = pop.points[i];
            const ForwardTrace tr = perturbed_forward_trace(net, x, zero);
            batch_p.push_back(softmax(tr.logits()));
            if (!ignored[i]) {
                const LossValueGrad ce = ce_loss(tr.logits(), pl.labeling(i));
                batch_loss += ce.value;
                acc.axpy(1.0, backward(net, tr, zero, ce.dlogits));
            } else if (cfg.lambda_ent > 0.0) {
                const LossValueGrad ent = entropy_loss(tr.logits());
                batch_loss += cfg.lambda_ent * ent.value;
                acc.axpy(cfg.lambda_ent, backward(net, tr, zero, ent.dlogits));
            }
            if (cfg.vat_enabled) {
                const auto ct = detail::consistency_target(
                    net, x, cfg.vat_radius, cfg.amo_enabled, cfg.amo_lr,
                    cfg.seed ^ (std::uint64_t(t) * 0x100000001b3ull + i));
                const VectorXd p_ref = softmax(tr.logits());
                const ForwardTrace ta =
                    perturbed_forward_trace(net, ct.x_adv, ct.hidden);
                const LossValueGrad kl = kl_loss(ta.logits(), p_ref);
                batch_loss += cfg.lambda_v * kl.value;
                acc.axpy(cfg.lambda_v, backward(net, ta, ct.hidden, kl.dlogits));
            }
        }
        if (cfg.lambda_bal > 0.0 && cfg.rho_target > 0.0) {
            VectorXd pbar = VectorXd::Zero(pop.num_classes);
            for (const auto& p : batch_p) pbar += p / double(batch.size());
            VectorXd v = VectorXd::Zero(pop.num_classes);
            for (int k = 0; k < pop.num_classes; ++k) {
                batch_loss += cfg.lambda_bal *
                              std::max(0.0, cfg.rho_target - pbar[k]) *
                              double(batch.size());
                if (pbar[k] < cfg.rho_target) v[k] = -1.0;
            }
            for (size_t b = 0; b < batch.size(); ++b) {
                const VectorXd& p = batch_p[b];
                const VectorXd dz =
                    (cfg.lambda_bal / double(batch.size())) *
                    (p.cwiseProduct(v) - p.dot(v) * p);
                const ForwardTrace tr =
                    perturbed_forward_trace(net, pop.points[batch[b]], zero);
                acc.axpy(1.0, backward(net, tr, zero, dz));
            }
        }
        batch_loss /= batch.size();
        if (!std::isfinite(batch_loss))
            throw std::runtime_error("train_pseudolabel: loss diverged (NaN)");
        for (int l = 0; l < net.depth(); ++l) {
            net.W[l] -= lr * (acc.dW[l] / double(batch.size()) +
                              cfg.weight_decay * net.W[l]);
        }
        ema.update_weights(net, cfg.ema_decay);

        if (t % cfg.eval_every == 0 || t == cfg.steps - 1) {
            HistoryRow row;
            row.step = t;
            row.loss = batch_loss;
            const Labeling G = detail::net_labeling(net, pop);
            row.err = err(pop, G);
            row.err_unsup = err_unsup(pop, G);
            row.disagreement_pl = disagreement(G, pl.labeling, pop.masses);
            row.r_b_estimate = detail::rb_estimate(
                net, pop, cfg.vat_enabled ? cfg.vat_radius : 0.0, cfg.seed + t);
            row.tau_i = tau_i;
            double ig = 0.0;
            for (int i = 0; i < n; ++i) ig += ignored[i] ? 1.0 : 0.0;
            row.ignored_fraction = ig / n;
            hist.rows.push_back(row);
        }
    }
    if (ema_out) *ema_out = ema;
    return hist;
}

// unlabeled objective: consistency + entropy confidence + class balance
inline TrainHistory train_unsup(FeedforwardNet& net, const FinitePopulation& pop,
                                const TrainConfig& cfg) {
    cfg.validate();
    net.validate();
    const int n = pop.size();
    Rng rng(cfg.seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    int cursor = 0;
    TrainHistory hist;
    const Perturbation zero = Perturbation::zero(net);

    for (int t = 0; t < cfg.steps; ++t) {
        const double lr = detail::cosine_lr(cfg.lr, t, cfg.steps);
        std::vector<int> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == n) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        Grads acc = Grads::zero(net);
        double batch_loss = 0.0;
        std::vector<VectorXd> batch_p;
        for (int i : batch) {
            const VectorXd& x = pop.points[i];
            const ForwardTrace tr = perturbed_forward_trace(net, x, zero);
            batch_p.push_back(softmax(tr.logits()));
            if (cfg.lambda_ent > 0.0) {
                const LossValueGrad ent = entropy_loss(tr.logits());
                batch_loss += cfg.lambda_ent * ent.value;
                acc.axpy(cfg.lambda_ent, backward(net, tr, zero, ent.dlogits));
            }
            if (cfg.vat_enabled) {
                const auto ct = detail::consistency_target(
                    net, x, cfg.vat_radius, cfg.amo_enabled, cfg.amo_lr,
                    cfg.seed ^ (std::uint64_t(t) * 0x100000001b3ull + i));
                const VectorXd p_ref = softmax(tr.logits());
                const ForwardTrace ta =
                    perturbed_forward_trace(net, ct.x_adv, ct.hidden);
                const LossValueGrad kl = kl_loss(ta.logits(), p_ref);
                batch_loss += cfg.lambda_v * kl.value;
                acc.axpy(cfg.lambda_v, backward(net, ta, ct.hidden, kl.dlogits));
            }
        }
        {
            VectorXd pbar = VectorXd::Zero(pop.num_classes);
            for (const auto& p : batch_p) pbar += p / double(batch.size());
            VectorXd v = VectorXd::Zero(pop.num_classes);
            for (int k = 0; k < pop.num_classes; ++k) {
                batch_loss += cfg.lambda_bal *
                              std::max(0.0, cfg.rho_target - pbar[k]) *
                              double(batch.size());
                if (pbar[k] < cfg.rho_target) v[k] = -1.0;
            }
            for (size_t b = 0; b < batch.size(); ++b) {
                const VectorXd& p = batch_p[b];
                const VectorXd dz =
                    (cfg.lambda_bal / double(batch.size())) *
                    (p.cwiseProduct(v) - p.dot(v) * p);
                const ForwardTrace tr =
                    perturbed_forward_trace(net, pop.points[batch[b]], zero);
                acc.axpy(1.0, backward(net, tr, zero, dz));
            }
        }
        batch_loss /= batch.size();
        if (!std::isfinite(batch_loss))
            throw std::runtime_error("train_unsup: loss diverged (NaN)");
        for (int l = 0; l < net.depth(); ++l)
            net.W[l] -= lr * (acc.dW[l] / double(batch.size()) +
                              cfg.weight_decay * net.W[l]);

        if (t % cfg.eval_every == 0 || t == cfg.steps - 1) {
            HistoryRow row;
            row.step = t;
            row.loss = batch_loss;
            const Labeling G = detail::net_labeling(net, pop);
            row.err = err(pop, G);
            row.err_unsup = err_unsup(pop, G);
            row.disagreement_pl = row.err;
            row.r_b_estimate = detail::rb_estimate(
                net, pop, cfg.vat_enabled ? cfg.vat_radius : 0.0, cfg.seed + t);
            row.tau_i = 0.0;
            row.ignored_fraction = 0.0;
            hist.rows.push_back(row);
        }
    }
    return hist;
}

// ---- Mistake-distance analysis ------------------------------------------------

struct CorrectionBin {
    double dist_lo = 0.0;
    double dist_hi = 0.0;
    int count = 0;
    double correction_rate = 0.0;
};

// Bins mistakenly pseudolabeled points by distance to the nearest correctly
// pseudolabeled point of the same ground-truth class (equal-count bins) and
// reports the fraction the trained net assigns the true label.
inline std::vector<CorrectionBin> distance_vs_correction(
    const FinitePopulation& pop, const Pseudolabeler& pl,
    const FeedforwardNet& net, int bins) {
    if (bins < 1) throw std::invalid_argument("distance_vs_correction: bins < 1");
    struct Item {
        double dist;
        bool corrected;
    };
    std::vector<Item> items;
    for (int i = 0; i < pop.size(); ++i) {
        if (pl.labeling(i) == pop.labels[i]) continue;
        double dmin = std::numeric_limits<double>::infinity();
        for (int j = 0; j < pop.size(); ++j) {
            if (j == i || pop.labels[j] != pop.labels[i]) continue;
            if (pl.labeling(j) != pop.labels[j]) continue;
            dmin = std::min(dmin, (pop.points[i] - pop.points[j]).norm());
        }
        if (!std::isfinite(dmin)) continue;
        items.push_back({dmin, predict(net, pop.points[i]) == pop.labels[i]});
    }
    std::sort(items.begin(), items.end(),
              [](const Item& a, const Item& b) { return a.dist < b.dist; });
    std::vector<CorrectionBin> out;
    if (items.empty()) return out;
    const int nb = std::min<int>(bins, static_cast<int>(items.size()));
    for (int b = 0; b < nb; ++b) {
        const size_t lo = items.size() * b / nb;
        const size_t hi = items.size() * (b + 1) / nb;
        if (lo == hi) continue;
        CorrectionBin bin;
        bin.dist_lo = items[lo].dist;
        bin.dist_hi = items[hi - 1].dist;
        bin.count = static_cast<int>(hi - lo);
        double c = 0.0;
        for (size_t k = lo; k < hi; ++k) c += items[k].corrected ? 1.0 : 0.0;
        bin.correction_rate = c / bin.count;
        out.push_back(bin);
    }
    return out;
}

}  // namespace explab
