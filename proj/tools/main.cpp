// Batch experiment runner: population generation, expansion certificates,
// theorem verification, self-training runs, and margin sweeps. One process,
// no services; every command is deterministic given (config, seed).
//
// Exit codes: 0 success, 2 config error, 3 refused precondition, 4 internal.

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "explab/bounds.hpp"

namespace fs = std::filesystem;
using namespace explab;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRefused = 3;
constexpr int kExitInternal = 4;

struct Refused : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& ctx) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
    }
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    return j;
}

template <typename T>
T get_or(const json& j, const char* key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

// temp-and-rename so partial output never lands under the final name
void atomic_write(const fs::path& path, const std::string& text) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

// work queue over [0, count); results must be collected by index so that
// output order never depends on the job count
void parallel_for(int jobs, int count, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, count));
    if (jobs <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

// ---- Dataset construction ---------------------------------------------------

FinitePopulation make_population(const json& cfg) {
    reject_unknown(cfg,
                   {"kind", "k", "d", "n", "noise", "shift", "seed", "means",
                    "weights"},
                   "gen");
    const std::string kind = get_or<std::string>(cfg, "kind", "gaussian");
    const std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);
    const int n = get_or<int>(cfg, "n", 100);
    if (kind == "two-moons") {
        VectorXd shift = VectorXd::Zero(2);
        if (cfg.contains("shift")) {
            const auto v = cfg.at("shift").get<std::vector<double>>();
            if (v.size() != 2) throw ConfigError("gen: shift must have 2 entries");
            shift << v[0], v[1];
        }
        return gen_two_moons(n, get_or<double>(cfg, "noise", 0.1), shift, seed);
    }
    if (kind == "gaussian") {
        const int K = get_or<int>(cfg, "k", 2);
        const int d = get_or<int>(cfg, "d", 2);
        std::vector<VectorXd> means;
        if (cfg.contains("means")) {
            for (const auto& row : cfg.at("means")) {
                const auto v = row.get<std::vector<double>>();
                VectorXd m(v.size());
                for (size_t c = 0; c < v.size(); ++c) m[c] = v[c];
                means.push_back(std::move(m));
            }
        } else {
            for (int k = 0; k < K; ++k) {
                VectorXd m = VectorXd::Zero(d);
                m[k % d] = 4.0;
                means.push_back(std::move(m));
            }
        }
        std::vector<double> weights =
            get_or<std::vector<double>>(cfg, "weights", std::vector<double>(K, 1.0));
        return gen_gaussian_mixture(K, d, means, weights, n, seed);
    }
    throw ConfigError("gen: unknown kind '" + kind + "'");
}

FinitePopulation load_population(const json& cfg) {
    if (cfg.contains("population")) {
        const std::string path = cfg.at("population").get<std::string>();
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open population: " + path);
        json j;
        in >> j;
        return population_from_json(j.contains("population") ? j.at("population")
                                                             : j);
    }
    if (cfg.contains("gen")) return make_population(cfg.at("gen"));
    throw ConfigError("expected 'population' path or inline 'gen' block");
}

// tight clusters on a circle with mildly nonuniform masses: the workhorse
// for random qualifying instances (spread well under the graph radius so
// within-class overlaps stay witnessed)
FinitePopulation make_cluster_population(std::uint64_t seed, int K,
                                         int n_per_class) {
    Rng rng(seed);
    FinitePopulation pop;
    pop.dim = 2;
    pop.num_classes = K;
    const int total = K * n_per_class;
    for (int k = 0; k < K; ++k) {
        const double ang = 2.0 * 3.14159265358979 * k / K;
        for (int t = 0; t < n_per_class; ++t) {
            VectorXd x(2);
            x << 10.0 * std::cos(ang) + 0.35 * gauss(rng),
                10.0 * std::sin(ang) + 0.35 * gauss(rng);
            pop.points.push_back(std::move(x));
            pop.masses.push_back(unif(rng, 0.5, 1.5) / total);
            pop.labels.push_back(k + 1);
        }
    }
    double tot = std::accumulate(pop.masses.begin(), pop.masses.end(), 0.0);
    for (auto& m : pop.masses) m /= tot;
    pop.validate();
    return pop;
}

// ---- gen -------------------------------------------------------------------

int cmd_gen(const json& cfg, const std::string& out_dir) {
    reject_unknown(cfg,
                   {"kind", "k", "d", "n", "noise", "shift", "seed", "means",
                    "weights", "radius", "out"},
                   "gen");
    json gen_cfg = cfg;
    gen_cfg.erase("radius");
    gen_cfg.erase("out");
    const FinitePopulation pop = make_population(gen_cfg);
    const double radius = get_or<double>(cfg, "radius", 0.5);
    const auto graph =
        build_neighborhood_graph(pop, TransformSpec::identity_only(radius));
    json out;
    out["config"] = cfg;
    out["population"] = population_to_json(pop);
    atomic_write(fs::path(out_dir) / "population.json", out.dump(2) + "\n");
    std::printf("gen: n=%d K=%d d=%d radius=%.6g separation=%.6g\n", pop.size(),
                pop.num_classes, pop.dim, radius, measure_separation(graph));
    return kExitOk;
}

// ---- expansion -------------------------------------------------------------

int cmd_expansion(const json& cfg, const std::string& out_dir,
                  const std::string& mode) {
    reject_unknown(cfg,
                   {"population", "gen", "radius", "kind", "a", "c", "q", "alpha",
                    "xi", "S", "cls", "mode", "budget", "seed", "out"},
                   "expansion");
    const FinitePopulation pop = load_population(cfg);
    const double radius = get_or<double>(cfg, "radius", 0.5);
    const auto graph =
        build_neighborhood_graph(pop, TransformSpec::identity_only(radius));
    const std::string kind = get_or<std::string>(cfg, "kind", "multiplicative");
    const std::uint64_t budget = get_or<std::uint64_t>(cfg, "budget", 100000);
    const std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);

    ExpansionCertificate cert;
    if (kind == "multiplicative") {
        if (mode == "exhaustive")
            for (int k = 1; k <= pop.num_classes; ++k)
                if (static_cast<int>(pop.class_indices(k).size()) > 22)
                    throw Refused("exhaustive multiplicative check capped at 22 "
                                  "points per class");
        cert = check_mult_expansion(graph, get_or<double>(cfg, "a", 0.5),
                                    get_or<double>(cfg, "c", 2.0), mode, budget,
                                    seed);
    } else if (kind == "additive") {
        if (!cfg.contains("S")) throw ConfigError("expansion: additive needs S");
        const auto S = cfg.at("S").get<std::vector<int>>();
        if (mode == "exhaustive" && S.size() > 22)
            throw Refused("exhaustive additive check capped at |S| <= 22");
        cert = check_additive_expansion(graph, S, get_or<double>(cfg, "q", 0.0),
                                        get_or<double>(cfg, "alpha", 0.0), mode,
                                        budget, seed, get_or<int>(cfg, "cls", 0));
    } else if (kind == "constant") {
        if (mode == "exhaustive" && pop.size() > 22)
            throw Refused("exhaustive constant check capped at 22 points");
        cert = check_constant_expansion(graph, get_or<double>(cfg, "q", 0.0),
                                        get_or<double>(cfg, "xi", 0.0), mode,
                                        budget, seed);
    } else {
        throw ConfigError("expansion: unknown kind '" + kind + "'");
    }

    json out;
    out["config"] = cfg;
    out["config"]["mode"] = mode;
    out["certificate"] = certificate_to_json(cert);
    atomic_write(fs::path(out_dir) / "certificate.json", out.dump(2) + "\n");
    std::printf("expansion: kind=%s holds=%d examined=%llu\n", kind.c_str(),
                cert.holds ? 1 : 0,
                static_cast<unsigned long long>(cert.examined));
    return kExitOk;
}

// ---- verify-theorems -------------------------------------------------------

int cmd_verify_theorems(const json& cfg, const std::string& out_dir, int jobs) {
    reject_unknown(cfg,
                   {"instances", "n_per_class", "k_values", "c_bar", "c_unsup",
                    "a_bar_target", "alpha", "seed", "out", "jobs"},
                   "verify-theorems");
    const int instances = get_or<int>(cfg, "instances", 1);
    if (instances < 1) throw ConfigError("verify-theorems: instances < 1");
    const auto k_values =
        get_or<std::vector<int>>(cfg, "k_values", std::vector<int>{2, 3});
    const double c_bar = get_or<double>(cfg, "c_bar", 4.0);
    const double c_unsup = get_or<double>(cfg, "c_unsup", 2.0);
    const double a_bar_target = get_or<double>(cfg, "a_bar_target", 0.2);
    const double alpha = get_or<double>(cfg, "alpha", 0.05);
    const std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);

    std::vector<std::string> lines(instances);
    std::atomic<int> n_holds{0}, n_refused{0}, n_violated{0};
    parallel_for(jobs, instances, [&](int i) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
        const int K = k_values[i % k_values.size()];
        const int npc = get_or<int>(cfg, "n_per_class", 12 / K);
        const FinitePopulation pop = make_cluster_population(s, K, npc);
        const auto graph =
            build_neighborhood_graph(pop, TransformSpec::identity_only(2.0));
        const Pseudolabeler pl =
            make_pseudolabeler(pop, a_bar_target, s + 1000);

        std::vector<TheoremCheckReport> reports;
        reports.push_back(check_lemma_pop_denoise(graph, pl, c_bar));
        reports.push_back(check_theorem_denoise(graph, pl, c_bar));
        reports.push_back(check_theorem_unsup(graph, c_unsup));
        // the additive check takes the denoising minimizer when available
        Labeling G{pop.labels};
        if (reports[1].status == "holds" || reports[1].status == "violated")
            G.assignment = reports[1].inputs.at("minimizer").get<std::vector<int>>();
        double mistake_mass = 0.0;
        for (int j = 0; j < pop.size(); ++j)
            if (pl.labeling(j) != pop.labels[j]) mistake_mass += pop.masses[j];
        reports.push_back(
            check_theorem_additive(graph, pl, mistake_mass, alpha, G));

        std::string block;
        for (const auto& r : reports) {
            json line = report_to_json(r);
            line["instance"] = i;
            line["instance_seed"] = s;
            line["config"] = cfg;
            block += line.dump() + "\n";
            if (r.status == "holds") ++n_holds;
            if (r.status == "refused") ++n_refused;
            if (r.status == "violated") ++n_violated;
        }
        lines[i] = std::move(block);
    });

    std::string all;
    for (const auto& b : lines) all += b;
    atomic_write(fs::path(out_dir) / "theorems.jsonl", all);
    std::printf("verify-theorems: instances=%d holds=%d refused=%d violated=%d\n",
                instances, n_holds.load(), n_refused.load(), n_violated.load());
    if (n_violated.load() > 0) {
        std::fprintf(stderr, "verify-theorems: proved inequality violated -- "
                             "implementation bug\n");
        return kExitInternal;
    }
    if (n_holds.load() == 0 && n_refused.load() > 0) {
        std::fprintf(stderr, "verify-theorems: every check refused its "
                             "precondition\n");
        return kExitRefused;
    }
    return kExitOk;
}

// ---- selftrain -------------------------------------------------------------

TrainConfig train_config_from_json(const json& j) {
    reject_unknown(j,
                   {"steps", "batch_size", "lr", "weight_decay", "vat_enabled",
                    "lambda_v", "vat_radius", "amo_enabled", "amo_lr",
                    "tau_final", "ema_decay", "lambda_ent", "lambda_bal",
                    "rho_target", "eval_every", "seed"},
                   "train");
    TrainConfig c;
    c.steps = get_or<int>(j, "steps", c.steps);
    c.batch_size = get_or<int>(j, "batch_size", c.batch_size);
    c.lr = get_or<double>(j, "lr", c.lr);
    c.weight_decay = get_or<double>(j, "weight_decay", c.weight_decay);
    c.vat_enabled = get_or<bool>(j, "vat_enabled", c.vat_enabled);
    c.lambda_v = get_or<double>(j, "lambda_v", c.lambda_v);
    c.vat_radius = get_or<double>(j, "vat_radius", c.vat_radius);
    c.amo_enabled = get_or<bool>(j, "amo_enabled", c.amo_enabled);
    c.amo_lr = get_or<double>(j, "amo_lr", c.amo_lr);
    c.tau_final = get_or<double>(j, "tau_final", c.tau_final);
    c.ema_decay = get_or<double>(j, "ema_decay", c.ema_decay);
    c.lambda_ent = get_or<double>(j, "lambda_ent", c.lambda_ent);
    c.lambda_bal = get_or<double>(j, "lambda_bal", c.lambda_bal);
    c.rho_target = get_or<double>(j, "rho_target", c.rho_target);
    c.eval_every = get_or<int>(j, "eval_every", c.eval_every);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.validate();
    return c;
}

TrainConfig variant_config(TrainConfig base, const std::string& name) {
    const double tau = base.tau_final > 0.0 ? base.tau_final : 0.2;
    base.vat_enabled = false;
    base.amo_enabled = false;
    base.tau_final = 0.0;
    if (name == "pl") return base;
    base.vat_enabled = true;
    if (name == "pl+vat") return base;
    base.amo_enabled = true;
    if (name == "pl+vat+amo") return base;
    base.tau_final = tau;
    if (name == "pl+vat+amo+minent") return base;
    throw ConfigError("selftrain: unknown variant '" + name + "'");
}

int cmd_selftrain(const json& cfg, const std::string& out_dir, int jobs) {
    reject_unknown(cfg,
                   {"gen", "population", "radius", "noise_frac", "pl_mode",
                    "net_dims", "activation", "train", "variants", "seeds",
                    "num_seeds", "bins", "bins_variant", "seed", "out", "jobs"},
                   "selftrain");
    json data_cfg = cfg.contains("gen")
                        ? cfg
                        : json{{"gen",
                                {{"kind", "two-moons"}, {"n", 200},
                                 {"noise", 0.1}}}};
    if (cfg.contains("population")) data_cfg = cfg;
    const double radius = get_or<double>(cfg, "radius", 0.25);
    const double noise_frac = get_or<double>(cfg, "noise_frac", 0.2);
    const std::string pl_mode = get_or<std::string>(cfg, "pl_mode", "clustered");
    const auto net_dims = get_or<std::vector<int>>(cfg, "net_dims",
                                                   std::vector<int>{2, 32, 2});
    const Activation act =
        activation_from_name(get_or<std::string>(cfg, "activation", "softplus"));
    const TrainConfig base = train_config_from_json(
        cfg.contains("train") ? cfg.at("train") : json::object());
    const auto variants = get_or<std::vector<std::string>>(
        cfg, "variants",
        std::vector<std::string>{"pl", "pl+vat", "pl+vat+amo",
                                 "pl+vat+amo+minent"});
    std::vector<std::uint64_t> seeds;
    if (cfg.contains("seeds"))
        seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
    else
        for (int s = 0; s < get_or<int>(cfg, "num_seeds", 5); ++s)
            seeds.push_back(get_or<std::uint64_t>(cfg, "seed", 0) + s);
    const int bins = get_or<int>(cfg, "bins", 8);
    std::string bins_variant = get_or<std::string>(cfg, "bins_variant", "pl+vat");
    if (std::find(variants.begin(), variants.end(), bins_variant) ==
        variants.end())
        bins_variant = variants.front();

    struct RunOut {
        double final_err = 0.0;
        double final_err_unsup = 0.0;
        double pl_err = 0.0;
        std::string history_csv;
        std::string bins_csv;
    };
    const int total = static_cast<int>(variants.size() * seeds.size());
    std::vector<RunOut> runs(total);
    parallel_for(jobs, total, [&](int task) {
        const std::string& variant = variants[task / seeds.size()];
        const std::uint64_t seed = seeds[task % seeds.size()];
        json dc = data_cfg;
        if (dc.contains("gen")) dc["gen"]["seed"] = seed;
        const FinitePopulation pop = load_population(dc);
        const auto graph =
            build_neighborhood_graph(pop, TransformSpec::identity_only(radius));
        const Pseudolabeler pl = make_pseudolabeler(pop, noise_frac, seed + 500,
                                                    pl_mode, &graph);
        TrainConfig tc = variant_config(base, variant);
        tc.seed = seed;
        FeedforwardNet net = net_random(net_dims, act, seed + 100);
        const TrainHistory hist = train_pseudolabel(net, pop, pl, tc);
        RunOut out;
        out.final_err = hist.rows.back().err;
        out.final_err_unsup = hist.rows.back().err_unsup;
        out.pl_err = err(pop, pl.labeling);
        out.history_csv = hist.to_csv();
        if (variant == bins_variant) {
            const auto bb = distance_vs_correction(pop, pl, net, bins);
            std::ostringstream os;
            os.precision(17);
            os << "dist_lo,dist_hi,count,correction_rate\n";
            for (const auto& b : bb)
                os << b.dist_lo << ',' << b.dist_hi << ',' << b.count << ','
                   << b.correction_rate << '\n';
            out.bins_csv = os.str();
        }
        runs[task] = std::move(out);
    });

    json report;
    report["config"] = cfg;
    report["table"] = json::array();
    for (size_t v = 0; v < variants.size(); ++v) {
        double mean_acc = 0.0;
        json per_seed = json::array();
        for (size_t s = 0; s < seeds.size(); ++s) {
            const RunOut& r = runs[v * seeds.size() + s];
            mean_acc += (1.0 - r.final_err) / seeds.size();
            per_seed.push_back({{"seed", seeds[s]},
                                {"err", r.final_err},
                                {"err_unsup", r.final_err_unsup},
                                {"pl_err", r.pl_err}});
            const std::string stem =
                "history_" + variants[v] + "_s" + std::to_string(seeds[s]);
            atomic_write(fs::path(out_dir) / (stem + ".csv"), r.history_csv);
            if (!r.bins_csv.empty())
                atomic_write(fs::path(out_dir) /
                                 ("bins_s" + std::to_string(seeds[s]) + ".csv"),
                             r.bins_csv);
        }
        report["table"].push_back({{"variant", variants[v]},
                                   {"mean_accuracy", mean_acc},
                                   {"runs", per_seed}});
        std::printf("selftrain: %-18s mean_accuracy=%.4f\n",
                    variants[v].c_str(), mean_acc);
    }
    atomic_write(fs::path(out_dir) / "report.json", report.dump(2) + "\n");
    return kExitOk;
}

// ---- margins ---------------------------------------------------------------

int cmd_margins(const json& cfg, const std::string& out_dir, int jobs) {
    reject_unknown(cfg,
                   {"gen", "population", "net", "count", "radius", "t_grid",
                    "delta", "seed", "out", "jobs"},
                   "margins");
    const FinitePopulation pop = load_population(cfg);
    const json net_cfg = cfg.contains("net") ? cfg.at("net") : json::object();
    reject_unknown(net_cfg, {"dims", "activation", "seed", "path"}, "margins.net");
    FeedforwardNet net;
    if (net_cfg.contains("path")) {
        std::ifstream in(net_cfg.at("path").get<std::string>());
        if (!in) throw ConfigError("cannot open net file");
        json j;
        in >> j;
        net = net_from_json(j);
    } else {
        net = net_random(
            get_or<std::vector<int>>(net_cfg, "dims",
                                     std::vector<int>{pop.dim, 16, pop.num_classes}),
            activation_from_name(
                get_or<std::string>(net_cfg, "activation", "softplus")),
            get_or<std::uint64_t>(net_cfg, "seed", 0));
    }
    if (net.in_dim() != pop.dim)
        throw ConfigError("margins: net input dim does not match data");
    const int count = std::min<int>(get_or<int>(cfg, "count", 40), pop.size());
    const std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);

    struct Row {
        int index = 0, y = 0;
        double margin = 0.0, lower = 0.0;
        bool converged = false, violation = false;
    };
    std::vector<Row> rows(count);
    parallel_for(jobs, count, [&](int i) {
        Row r;
        r.index = i;
        const VectorXd& x = pop.points[i];
        r.y = predict(net, x);
        MarginOpt opt;
        opt.seed = seed + static_cast<std::uint64_t>(i);
        const MarginReport rep = all_layer_margin(net, x, r.y, opt);
        r.margin = rep.value;
        r.converged = rep.converged;
        const double gap = -logit_gap(forward(net, x), r.y);
        r.lower = gap > 0.0 ? margin_lower_bound(net, x, r.y)
                            : std::numeric_limits<double>::quiet_NaN();
        r.violation =
            r.converged && std::isfinite(r.lower) && r.lower > r.margin + 1e-6;
        rows[i] = r;
    });

    std::ostringstream os;
    os.precision(17);
    os << "index,label,margin,converged,lower_bound,violation\n";
    int violations = 0;
    std::vector<double> margins;
    for (const auto& r : rows) {
        os << r.index << ',' << r.y << ',' << r.margin << ',' << (r.converged ? 1 : 0)
           << ',' << r.lower << ',' << (r.violation ? 1 : 0) << '\n';
        if (r.violation) ++violations;
        if (r.converged) margins.push_back(r.margin);
    }
    atomic_write(fs::path(out_dir) / "margins.csv", os.str());

    // generalization-bound sweep over the margin thresholds
    const auto t_grid = get_or<std::vector<double>>(
        cfg, "t_grid", std::vector<double>{0.05, 0.1, 0.2, 0.4, 0.8});
    const double delta = get_or<double>(cfg, "delta", 0.05);
    std::ostringstream sweep;
    sweep.precision(17);
    sweep << "t,empirical,complexity,zeta,total\n";
    if (!margins.empty())
        for (double t : t_grid) {
            const GenBoundTerms g = generalization_rhs(net, margins, t, delta);
            sweep << t << ',' << g.empirical << ',' << g.complexity << ','
                  << g.zeta << ',' << g.total << '\n';
        }
    atomic_write(fs::path(out_dir) / "bound_sweep.csv", sweep.str());

    json summary;
    summary["config"] = cfg;
    summary["rows"] = count;
    summary["converged"] = static_cast<int>(margins.size());
    summary["bound_violations"] = violations;
    atomic_write(fs::path(out_dir) / "margins_summary.json",
                 summary.dump(2) + "\n");
    std::printf("margins: rows=%d converged=%d bound_violations=%d\n", count,
                static_cast<int>(margins.size()), violations);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"expansion-based self-training experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", mode = "exhaustive";
    std::uint64_t seed = 0;
    int jobs = 1;

    struct SubFlags {
        CLI::Option *cfg, *seed, *out, *jobs, *mode;
    };
    std::map<std::string, SubFlags> flags;
    auto add_common = [&](CLI::App* sub) {
        SubFlags f;
        f.cfg = sub->add_option("--config", config_path, "JSON config file");
        f.seed = sub->add_option("--seed", seed, "seed override");
        f.out = sub->add_option("--out", out_dir, "output directory");
        f.jobs = sub->add_option("--jobs", jobs, "worker threads");
        f.mode = sub->add_option("--mode", mode, "exhaustive|sampled")
                     ->check(CLI::IsMember({"exhaustive", "sampled"}));
        flags[sub->get_name()] = f;
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a population file");
    add_common(gen);
    std::string gen_kind;
    int gen_k = 0, gen_d = 0, gen_n = 0;
    double gen_noise = -1.0, gen_radius = -1.0;
    auto* f_kind = gen->add_option("--kind", gen_kind, "gaussian|two-moons");
    auto* f_k = gen->add_option("--k", gen_k, "classes");
    auto* f_d = gen->add_option("--d", gen_d, "dimension");
    auto* f_n = gen->add_option("--n", gen_n, "points per class");
    auto* f_noise = gen->add_option("--noise", gen_noise, "noise level");
    auto* f_radius = gen->add_option("--radius", gen_radius, "graph radius");

    CLI::App* expansion =
        app.add_subcommand("expansion", "check an expansion property");
    add_common(expansion);
    CLI::App* verify =
        app.add_subcommand("verify-theorems", "batch theorem checks");
    add_common(verify);
    CLI::App* selftrain =
        app.add_subcommand("selftrain", "training runs and ablation ladder");
    add_common(selftrain);
    CLI::App* margins = app.add_subcommand("margins", "margin and bound sweep");
    add_common(margins);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        json cfg = load_config(config_path);
        const SubFlags& f = flags[sub->get_name()];
        if (f.seed->count()) cfg["seed"] = seed;
        if (!f.out->count() && cfg.contains("out"))
            out_dir = cfg.at("out").get<std::string>();
        if (!f.jobs->count()) jobs = get_or<int>(cfg, "jobs", 1);
        // execution-only knobs: they cannot change results, so they are kept
        // out of the embedded config to make re-runs byte-comparable
        cfg.erase("out");
        cfg.erase("jobs");
        if (jobs < 1) throw ConfigError("jobs < 1");
        if (!f.mode->count() && cfg.contains("mode"))
            mode = cfg.at("mode").get<std::string>();
        if (mode != "exhaustive" && mode != "sampled")
            throw ConfigError("mode must be exhaustive or sampled");

        if (sub == gen) {
            if (f_kind->count()) cfg["kind"] = gen_kind;
            if (f_k->count()) cfg["k"] = gen_k;
            if (f_d->count()) cfg["d"] = gen_d;
            if (f_n->count()) cfg["n"] = gen_n;
            if (f_noise->count()) cfg["noise"] = gen_noise;
            if (f_radius->count()) cfg["radius"] = gen_radius;
            return cmd_gen(cfg, out_dir);
        }
        if (sub == expansion) return cmd_expansion(cfg, out_dir, mode);
        if (sub == verify) return cmd_verify_theorems(cfg, out_dir, jobs);
        if (sub == selftrain) return cmd_selftrain(cfg, out_dir, jobs);
        if (sub == margins) return cmd_margins(cfg, out_dir, jobs);
        return kExitInternal;
    } catch (const Refused& e) {
        std::fprintf(stderr, "refused: %s\n", e.what());
        return kExitRefused;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
}
