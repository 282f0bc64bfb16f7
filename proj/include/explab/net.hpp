#pragma once

// Small dense feedforward nets with smooth activations, the perturbed
// forward recurrence h_i = W_i phi(h_{i-1}) + delta_i ||h_{i-1}||, and exact
// reverse-mode gradients (including through the norm factors).

#include <cmath>

#include <json.hpp>

#include "explab/common.hpp"

namespace explab {

enum class Activation { softplus, tanh_act };

inline std::string activation_name(Activation a) {
    return a == Activation::softplus ? "softplus" : "tanh";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "softplus") return Activation::softplus;
    if (s == "tanh") return Activation::tanh_act;
    throw std::invalid_argument("unknown activation: " + s);
}

inline double act_phi(Activation a, double z) {
    if (a == Activation::softplus) {
        // stable softplus
        return z > 30.0 ? z : std::log1p(std::exp(z > -30.0 ? z : -30.0));
    }
    return std::tanh(z);
}

inline double act_dphi(Activation a, double z) {
    if (a == Activation::softplus) return 1.0 / (1.0 + std::exp(-z));
    const double t = std::tanh(z);
    return 1.0 - t * t;
}

// Lipschitz constant of the activation derivative.
inline double act_kappa_bar(Activation a) {
    if (a == Activation::softplus) return 0.25;           // max sigmoid'
    return 4.0 / (3.0 * std::sqrt(3.0));                  // max |tanh''|
}

inline VectorXd act_phi_vec(Activation a, const VectorXd& z) {
    VectorXd out(z.size());
    for (int i = 0; i < z.size(); ++i) out[i] = act_phi(a, z[i]);
    return out;
}

inline VectorXd act_dphi_vec(Activation a, const VectorXd& z) {
    VectorXd out(z.size());
    for (int i = 0; i < z.size(); ++i) out[i] = act_dphi(a, z[i]);
    return out;
}

// F(x) = W_p phi( ... phi(W_1 x)). dims = {d, q_1, ..., q_{p-1}, K}.
struct FeedforwardNet {
    std::vector<int> dims;
    Activation act = Activation::softplus;
    std::vector<MatrixXd> W;

    int depth() const { return static_cast<int>(W.size()); }
    int in_dim() const { return dims.front(); }
    int out_dim() const { return dims.back(); }

    void validate() const {
        if (dims.size() < 2 || W.size() + 1 != dims.size())
            throw std::invalid_argument("net: dims/weights mismatch");
        for (size_t i = 0; i < W.size(); ++i)
            if (W[i].rows() != dims[i + 1] || W[i].cols() != dims[i])
                throw std::invalid_argument("net: weight shape mismatch");
    }
};

inline FeedforwardNet net_random(const std::vector<int>& dims, Activation act,
                                 std::uint64_t seed, double scale = -1.0) {
    FeedforwardNet net;
    net.dims = dims;
    net.act = act;
    Rng rng(seed);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        const double s = scale > 0.0 ? scale : std::sqrt(2.0 / dims[i]);
        MatrixXd m(dims[i + 1], dims[i]);
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) m(r, c) = s * gauss(rng);
        net.W.push_back(std::move(m));
    }
    net.validate();
    return net;
}

// delta_i matches the width of the i-th post-weight layer.
struct Perturbation {
    std::vector<VectorXd> delta;

    static Perturbation zero(const FeedforwardNet& net) {
        Perturbation p;
        for (int i = 1; i < static_cast<int>(net.dims.size()); ++i)
            p.delta.push_back(VectorXd::Zero(net.dims[i]));
        return p;
    }
    double norm() const {
        double s = 0.0;
        for (const auto& d : delta) s += d.squaredNorm();
        return std::sqrt(s);
    }
    Perturbation& operator*=(double a) {
        for (auto& d : delta) d *= a;
        return *this;
    }
};

struct ForwardTrace {
    VectorXd x;
    std::vector<VectorXd> h;       // perturbed pre-activations h_1..h_p
    std::vector<double> norms;     // ||x||, ||h_1||, ..., ||h_{p-1}||
    const VectorXd& logits() const { return h.back(); }
};

inline ForwardTrace perturbed_forward_trace(const FeedforwardNet& net,
                                            const VectorXd& x,
                                            const Perturbation& pert) {
    net.validate();
    if (x.size() != net.in_dim())
        throw std::invalid_argument("forward: input dim mismatch");
    if (pert.delta.size() != net.W.size())
        throw std::invalid_argument("forward: perturbation depth mismatch");
    ForwardTrace tr;
    tr.x = x;
    VectorXd cur = x;
    for (int i = 0; i < net.depth(); ++i) {
        if (pert.delta[i].size() != net.dims[i + 1])
            throw std::invalid_argument("forward: perturbation width mismatch");
        const VectorXd inp = (i == 0) ? cur : act_phi_vec(net.act, cur);
        const double nrm = cur.norm();
        tr.norms.push_back(nrm);
        cur = net.W[i] * inp + pert.delta[i] * nrm;
        tr.h.push_back(cur);
    }
    return tr;
}

inline VectorXd perturbed_forward(const FeedforwardNet& net, const VectorXd& x,
                                  const Perturbation& pert) {
    return perturbed_forward_trace(net, x, pert).logits();
}

inline VectorXd forward(const FeedforwardNet& net, const VectorXd& x) {
    return perturbed_forward(net, x, Perturbation::zero(net));
}

inline int predict(const FeedforwardNet& net, const VectorXd& x) {
    return argmax_lex(forward(net, x)) + 1;  // classes are 1-based
}

struct Grads {
    std::vector<MatrixXd> dW;
    std::vector<VectorXd> ddelta;
    VectorXd dx;

    static Grads zero(const FeedforwardNet& net) {
        Grads g;
        for (int i = 0; i < net.depth(); ++i) {
            g.dW.push_back(MatrixXd::Zero(net.W[i].rows(), net.W[i].cols()));
            g.ddelta.push_back(VectorXd::Zero(net.dims[i + 1]));
        }
        g.dx = VectorXd::Zero(net.in_dim());
        return g;
    }
    void axpy(double a, const Grads& o) {
        for (size_t i = 0; i < dW.size(); ++i) {
            dW[i] += a * o.dW[i];
            ddelta[i] += a * o.ddelta[i];
        }
        dx += a * o.dx;
    }
};

// Reverse-mode through the perturbed recurrence. gout = dL/dlogits.
inline Grads backward(const FeedforwardNet& net, const ForwardTrace& tr,
                      const Perturbation& pert, const VectorXd& gout) {
    Grads g = Grads::zero(net);
    VectorXd gi = gout;  // dL/dh_i
    for (int i = net.depth() - 1; i >= 0; --i) {
        const VectorXd& prev = (i == 0) ? tr.x : tr.h[i - 1];
        const VectorXd inp = (i == 0) ? prev : act_phi_vec(net.act, prev);
        const double nrm = tr.norms[i];
        g.dW[i] = gi * inp.transpose();
        g.ddelta[i] = gi * nrm;
        VectorXd gprev = net.W[i].transpose() * gi;
        if (i > 0) gprev = act_dphi_vec(net.act, prev).cwiseProduct(gprev);
        // the ||h_{i-1}|| factor also depends on the previous layer
        if (nrm > 0.0) gprev += (gi.dot(pert.delta[i]) / nrm) * prev;
        if (i == 0) {
            g.dx = gprev;
        } else {
            gi = std::move(gprev);
        }
    }
    return g;
}

// ---- Losses on logits --------------------------------------------------------

inline VectorXd softmax(const VectorXd& z) {
    const double m = z.maxCoeff();
    VectorXd e = (z.array() - m).exp();
    return e / e.sum();
}

inline double logsumexp(const VectorXd& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

struct LossValueGrad {
    double value = 0.0;
    VectorXd dlogits;
};

// cross-entropy to a hard label y in {1..K}
inline LossValueGrad ce_loss(const VectorXd& z, int y) {
    if (y < 1 || y > z.size()) throw std::invalid_argument("ce_loss: label");
    LossValueGrad out;
    out.value = logsumexp(z) - z[y - 1];
    out.dlogits = softmax(z);
    out.dlogits[y - 1] -= 1.0;
    return out;
}

// KL(p_ref || softmax(z)); p_ref treated as a constant
inline LossValueGrad kl_loss(const VectorXd& z, const VectorXd& p_ref) {
    if (p_ref.size() != z.size()) throw std::invalid_argument("kl_loss: dims");
    LossValueGrad out;
    const double lse = logsumexp(z);
    out.value = 0.0;
    for (int i = 0; i < z.size(); ++i)
        if (p_ref[i] > 0.0)
            out.value += p_ref[i] * (std::log(p_ref[i]) - (z[i] - lse));
    out.dlogits = softmax(z) - p_ref;
    return out;
}

// entropy of softmax(z)
inline LossValueGrad entropy_loss(const VectorXd& z) {
    LossValueGrad out;
    const VectorXd p = softmax(z);
    double h = 0.0;
    for (int i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    out.value = h;
    out.dlogits = VectorXd(z.size());
    for (int i = 0; i < p.size(); ++i)
        out.dlogits[i] = p[i] > 0.0 ? -p[i] * (std::log(p[i]) + h) : 0.0;
    return out;
}

// gamma(z, y) = max_{j != y} z_j - z_y (positive iff a wrong class wins)
inline double logit_gap(const VectorXd& z, int y, int* arg = nullptr) {
    int best = -1;
    for (int j = 0; j < z.size(); ++j) {
        if (j == y - 1) continue;
        if (best < 0 || z[j] > z[best]) best = j;
    }
    if (arg) *arg = best;
    return z[best] - z[y - 1];
}

// hinge max(0, gamma(z,y) + slack) with subgradient
inline LossValueGrad margin_hinge_loss(const VectorXd& z, int y, double slack) {
    LossValueGrad out;
    int j;
    const double gap = logit_gap(z, y, &j);
    out.dlogits = VectorXd::Zero(z.size());
    out.value = std::max(0.0, gap + slack);
    if (gap + slack > 0.0) {
        out.dlogits[j] = 1.0;
        out.dlogits[y - 1] = -1.0;
    }
    return out;
}

// ---- Serialization -----------------------------------------------------------

inline nlohmann::json net_to_json(const FeedforwardNet& net) {
    nlohmann::json j;
    j["dims"] = net.dims;
    j["activation"] = activation_name(net.act);
    j["weights"] = nlohmann::json::array();
    for (const auto& W : net.W) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < W.rows(); ++r) {
            std::vector<double> row(W.cols());
            for (int c = 0; c < W.cols(); ++c) row[c] = W(r, c);
            rows.push_back(row);
        }
        j["weights"].push_back(rows);
    }
    return j;
}

inline FeedforwardNet net_from_json(const nlohmann::json& j) {
    FeedforwardNet net;
    net.dims = j.at("dims").get<std::vector<int>>();
    net.act = activation_from_name(j.at("activation").get<std::string>());
    for (const auto& rows : j.at("weights")) {
        MatrixXd W(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (size_t r = 0; r < rows.size(); ++r)
            for (size_t c = 0; c < rows[r].size(); ++c)
                W(r, c) = rows[r][c].get<double>();
        net.W.push_back(std::move(W));
    }
    net.validate();
    return net;
}

}  // namespace explab
