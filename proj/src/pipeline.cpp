#include "kmfm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "kmfm/rng.hpp"

namespace kmfm {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------- config plumbing ----------------

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ConfigError("config section '" + section + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown key '" + it.key() + "' in config section '" + section + "'");
    }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

void get_path(const json& j, const char* key, fs::path& out) {
    std::string s = out.string();
    get_to(j, key, s);
    out = s;
}

void get_index(const json& j, const char* key, Index& out) {
    long long v = static_cast<long long>(out);
    get_to(j, key, v);
    out = static_cast<Index>(v);
}

void parse_train_section(const json& j, const std::string& name, TrainConfig& t) {
    check_keys(j, name,
               {"epochs", "batch_size", "learning_rate", "optimizer", "momentum", "adam_beta1",
                "adam_beta2", "adam_eps"});
    get_to(j, "epochs", t.epochs);
    get_index(j, "batch_size", t.batch_size);
    get_to(j, "learning_rate", t.learning_rate);
    if (j.contains("optimizer")) {
        std::string o;
        get_to(j, "optimizer", o);
        if (o == "sgd")
            t.optimizer = OptimizerKind::sgd;
        else if (o == "momentum")
            t.optimizer = OptimizerKind::momentum;
        else if (o == "adam")
            t.optimizer = OptimizerKind::adam;
        else
            throw ConfigError("unknown optimizer '" + o + "' (expected sgd, momentum or adam)");
    }
    get_to(j, "momentum", t.momentum);
    get_to(j, "adam_beta1", t.adam_beta1);
    get_to(j, "adam_beta2", t.adam_beta2);
    get_to(j, "adam_eps", t.adam_eps);
}

json train_to_json(const TrainConfig& t) {
    const char* opt = t.optimizer == OptimizerKind::sgd       ? "sgd"
                      : t.optimizer == OptimizerKind::momentum ? "momentum"
                                                               : "adam";
    return {{"epochs", t.epochs},
            {"batch_size", static_cast<long long>(t.batch_size)},
            {"learning_rate", t.learning_rate},
            {"optimizer", opt},
            {"momentum", t.momentum},
            {"adam_beta1", t.adam_beta1},
            {"adam_beta2", t.adam_beta2},
            {"adam_eps", t.adam_eps}};
}

void validate_config(const PipelineConfig& cfg) {
    const auto& d = cfg.dataset;
    if (d.source != "uci" && d.source != "csv" && d.source != "synthetic")
        throw ConfigError("dataset.source must be uci, csv or synthetic");
    if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0))
        throw ConfigError("dataset.train_fraction must lie in (0,1)");
    if (cfg.network.kappa1 < 1 || cfg.network.kappa2 < 1)
        throw ConfigError("network depths kappa1/kappa2 must be >= 1");
    if (cfg.network.latent1 < 0 || cfg.network.latent2 < 0)
        throw ConfigError("latent widths must be >= 0 (0 = derive)");
    if (!(cfg.objective.alpha > 0.0 && cfg.objective.alpha < 1.0))
        throw ConfigError("objective.alpha must lie in (0,1)");
    if (!(cfg.objective.beta > 0.0)) throw ConfigError("objective.beta must be > 0");
    if (cfg.embedding.L < 1) throw ConfigError("embedding.L must be >= 1");
    if (cfg.embedding.kernel.degree < 1) throw ConfigError("embedding.degree must be >= 1");
    if (cfg.embedding.kernel.knn < 0) throw ConfigError("embedding.knn must be >= 0");
    if (cfg.clustering.k < 1) throw ConfigError("clustering.k must be >= 1");
    if (cfg.clustering.restarts < 1) throw ConfigError("clustering.restarts must be >= 1");
    if (cfg.clustering.max_iters < 1) throw ConfigError("clustering.max_iters must be >= 1");
    if (cfg.mode.name != "two_stage" && cfg.mode.name != "alternating")
        throw ConfigError("mode.name must be two_stage or alternating");
    if (cfg.mode.outer_rounds < 1) throw ConfigError("mode.outer_rounds must be >= 1");
    if (cfg.mode.epochs_per_round < 1) throw ConfigError("mode.epochs_per_round must be >= 1");
    if (cfg.train_num.epochs < 1 || cfg.train_cat.epochs < 1)
        throw ConfigError("train.epochs must be >= 1");
    if (cfg.train_num.batch_size < 1 || cfg.train_cat.batch_size < 1)
        throw ConfigError("train.batch_size must be >= 1");
}

/// Latent widths unset in the config derive from the feature dimension.
/// Each net gets L latent units so the concatenation is 2L wide and the
/// projection genuinely truncates: keeping all directions would reduce it
/// to a power-equalizing change of basis that lets noise directions drown
/// the informative ones.
std::pair<Index, Index> resolve_latents(const PipelineConfig& cfg) {
    Index l1 = cfg.network.latent1;
    Index l2 = cfg.network.latent2;
    const Index derived = std::max<Index>(1, cfg.embedding.L);
    if (l1 == 0) l1 = derived;
    if (l2 == 0) l2 = derived;
    if (cfg.embedding.L > l1 + l2)
        throw InvalidSpec("embedding.L exceeds the concatenated latent width");
    return {l1, l2};
}

/// Encoder width chain from d0 to the latent width over `depth` layers,
/// geometrically interpolated (monotone in either direction).
std::vector<Index> width_chain(Index d0, Index dlat, int depth) {
    std::vector<Index> dims(static_cast<std::size_t>(depth) + 1);
    dims[0] = d0;
    for (int i = 1; i <= depth; ++i) {
        double t = static_cast<double>(i) / static_cast<double>(depth);
        double w = static_cast<double>(d0) *
                   std::pow(static_cast<double>(dlat) / static_cast<double>(d0), t);
        dims[static_cast<std::size_t>(i)] = std::max<Index>(1, llround(w));
    }
    dims.back() = dlat;
    return dims;
}

std::vector<std::pair<Index, Index>> softmax_blocks_of(const MixedSchema& schema) {
    std::vector<std::pair<Index, Index>> blocks;
    std::size_t ci = 0;
    for (const auto& col : schema.columns()) {
        if (col.kind != ColumnKind::categorical) continue;
        blocks.emplace_back(schema.block_offset(ci), static_cast<Index>(col.levels.size()));
        ++ci;
    }
    return blocks;
}

// ---------------- trained stack ----------------

struct TrainedStack {
    MixedDataset data;
    EncoderDecoderNet net_num, net_cat;
    TrainConfig tc_num, tc_cat;  // block layout resolved; used to evaluate losses
    LossHistory loss_num, loss_cat;
    LatentEmbedding W;
    KernelMatrix S;
    LppSolution lpp_full;  // all eigenpairs; runs truncate
    double ridge = 0.0;
    std::vector<std::pair<std::string, std::uint64_t>> seeds;
    StageSeconds secs;
    bool converged = true;
    int rounds_used = 0;
};

void refresh_embedding(TrainedStack& st) {
    Matrix y_num = encode_all(st.net_num, st.data.numerical);
    Matrix y_cat = encode_all(st.net_cat, st.data.categorical);
    st.W = concat_latents(y_num, y_cat);
}

void solve_full_lpp(TrainedStack& st, const PipelineConfig& cfg) {
    auto t0 = Clock::now();
    if (cfg.embedding.ridge >= 0.0)
        st.ridge = cfg.embedding.ridge;
    else
        st.ridge = default_ridge(st.W.W, degree_vector(st.S));
    st.lpp_full = solve_lpp(st.W.W, st.S, st.W.latent_dim(), st.ridge);
    st.lpp_full.kernel_spec = cfg.embedding.kernel;
    st.secs.lpp += elapsed(t0);
}

TrainedStack build_stack(const PipelineConfig& cfg, const MixedDataset& data) {
    if (data.schema.p1() < 1 || data.schema.p2() < 1)
        throw SchemaMismatch("pipeline needs at least one numerical and one categorical column");
    auto [l1, l2] = resolve_latents(cfg);
    if (cfg.embedding.L > l1 + l2)
        throw BadL("embedding.L exceeds the concatenated latent width");

    TrainedStack st;
    st.data = data;
    auto seed_of = [&](const char* label) {
        std::uint64_t s = rng::derive_seed(cfg.master_seed, label);
        st.seeds.emplace_back(label, s);
        return s;
    };

    SplitSpec split_spec{cfg.dataset.train_fraction, seed_of("split")};
    auto [train_part, val_part] = split(st.data, split_spec);

    st.tc_num = cfg.train_num;
    st.tc_num.blockwise_softmax = true;
    st.tc_num.softmax_blocks = softmax_blocks_of(st.data.schema);
    st.tc_num.shuffle_seed = seed_of("net_num_shuffle");
    st.net_num = build_network(width_chain(st.data.schema.p1(), l1, cfg.network.kappa1),
                               HeadKind::softmax_categorical, st.data.schema.p2(),
                               cfg.network.use_bias, seed_of("net_num_init"));
    auto t0 = Clock::now();
    st.loss_num = train(st.net_num, train_part.numerical, train_part.categorical,
                        val_part.numerical, val_part.categorical, st.tc_num);
    st.secs.train_num = elapsed(t0);

    st.tc_cat = cfg.train_cat;
    st.tc_cat.shuffle_seed = seed_of("net_cat_shuffle");
    st.net_cat = build_network(width_chain(st.data.schema.p2(), l2, cfg.network.kappa2),
                               HeadKind::mse_numerical, st.data.schema.p1(),
                               cfg.network.use_bias, seed_of("net_cat_init"));
    t0 = Clock::now();
    st.loss_cat = train(st.net_cat, train_part.categorical, train_part.numerical,
                        val_part.categorical, val_part.numerical, st.tc_cat);
    st.secs.train_cat = elapsed(t0);

    refresh_embedding(st);

    t0 = Clock::now();
    st.S = build_kernel(st.data.encoded_rows(), cfg.embedding.kernel);
    st.secs.kernel = elapsed(t0);

    solve_full_lpp(st, cfg);
    return st;
}

double full_objective(const TrainedStack& st, const PipelineConfig& cfg, const Matrix& Vl,
                      double* j1_out = nullptr, double* j2_out = nullptr, double* p_out = nullptr) {
    const double n = static_cast<double>(st.data.n());
    double j1 = evaluate_loss(st.net_num, st.data.numerical, st.data.categorical, st.tc_num) * n;
    double j2 = evaluate_loss(st.net_cat, st.data.categorical, st.data.numerical, st.tc_cat);
    double p = locality_penalty(Vl, st.W.W, st.S);
    if (j1_out) *j1_out = j1;
    if (j2_out) *j2_out = j2;
    if (p_out) *p_out = p;
    return cfg.objective.alpha * j1 + (1.0 - cfg.objective.alpha) * j2 + cfg.objective.beta * p;
}

/// Joint refinement: gradient epochs on alpha*J1 + (1-alpha)*J2 + beta*P
/// with V fixed, then a re-solve of the projection; repeated until the
/// combined objective settles or the round cap is hit.
void refine_alternating(TrainedStack& st, const PipelineConfig& cfg) {
    const Index n = st.data.n();
    const Index L = cfg.embedding.L;
    const double alpha = cfg.objective.alpha;
    const double beta = cfg.objective.beta;
    const Index dk_cat = st.net_cat.latent_dim();  // top block of W
    const Index dk_num = st.net_num.latent_dim();  // bottom block

    Matrix Vl = st.lpp_full.V.leftCols(L);
    double prev = full_objective(st, cfg, Vl);

    Optimizer opt_num(st.net_num, st.tc_num);
    Optimizer opt_cat(st.net_cat, st.tc_cat);
    rng::Sampler shuffler(rng::derive_seed(cfg.master_seed, "alt_shuffle"));
    st.seeds.emplace_back("alt_shuffle", rng::derive_seed(cfg.master_seed, "alt_shuffle"));

    st.converged = false;
    st.rounds_used = cfg.mode.outer_rounds;
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});

    for (int round = 1; round <= cfg.mode.outer_rounds; ++round) {
        for (int epoch = 0; epoch < cfg.mode.epochs_per_round; ++epoch) {
            refresh_embedding(st);
            Matrix G = locality_latent_gradient(Vl, st.W.W, st.S);  // d x n
            shuffler.shuffle(perm);
            const Index bs = st.tc_num.batch_size;
            for (Index start = 0; start < n; start += bs) {
                const Index stop = std::min(n, start + bs);
                std::vector<Index> idx(perm.begin() + start, perm.begin() + stop);

                ForwardCache cache = forward_batch(st.net_num, st.data.numerical(idx, Eigen::all));
                auto [l1, d_out1] = head_loss_grad(HeadKind::softmax_categorical, cache.output,
                                                   st.data.categorical(idx, Eigen::all), st.tc_num);
                d_out1 *= alpha;
                Matrix extra1 =
                    beta * G.bottomRows(dk_num)(Eigen::all, idx).transpose();  // B x dk_num
                opt_num.step(st.net_num, backward(st.net_num, cache, d_out1, &extra1));

                cache = forward_batch(st.net_cat, st.data.categorical(idx, Eigen::all));
                auto [l2, d_out2] = head_loss_grad(HeadKind::mse_numerical, cache.output,
                                                   st.data.numerical(idx, Eigen::all), st.tc_cat);
                d_out2 *= (1.0 - alpha) / static_cast<double>(n);
                Matrix extra2 = beta * G.topRows(dk_cat)(Eigen::all, idx).transpose();
                opt_cat.step(st.net_cat, backward(st.net_cat, cache, d_out2, &extra2));
            }
            double e1 = evaluate_loss(st.net_num, st.data.numerical, st.data.categorical, st.tc_num);
            double e2 = evaluate_loss(st.net_cat, st.data.categorical, st.data.numerical, st.tc_cat);
            st.loss_num.train.push_back(e1);
            st.loss_num.validation.push_back(e1);  // trains on all rows; no held-out split
            st.loss_cat.train.push_back(e2);
            st.loss_cat.validation.push_back(e2);
        }
        refresh_embedding(st);
        auto t0 = Clock::now();
        st.lpp_full = solve_lpp(st.W.W, st.S, st.W.latent_dim(), st.ridge);
        st.lpp_full.kernel_spec = cfg.embedding.kernel;
        st.secs.lpp += elapsed(t0);
        Vl = st.lpp_full.V.leftCols(L);
        double obj = full_objective(st, cfg, Vl);
        if (std::abs(prev - obj) <= cfg.mode.tol * std::max(std::abs(prev), 1e-12)) {
            st.converged = true;
            st.rounds_used = round;
            break;
        }
        prev = obj;
    }
}

json resolved_config_json(const PipelineConfig& cfg, Index l1, Index l2, double ridge) {
    PipelineConfig resolved = cfg;
    resolved.network.latent1 = l1;
    resolved.network.latent2 = l2;
    resolved.embedding.ridge = ridge;
    return config_to_json(resolved);
}

RunReport finish_run(TrainedStack& st, const PipelineConfig& cfg, Index L, int k) {
    if (L < 1 || L > st.W.latent_dim())
        throw BadL("feature dimension must lie in [1, latent dim]");
    RunReport rep;
    rep.n = st.data.n();
    rep.L = L;
    rep.k = k;
    rep.loss_num = st.loss_num;
    rep.loss_cat = st.loss_cat;
    rep.converged = st.converged;
    rep.rounds_used = st.rounds_used;
    rep.seconds = st.secs;

    Matrix Vl = st.lpp_full.V.leftCols(L);
    rep.eigenvalues = st.lpp_full.eigenvalues.head(L);
    rep.features = project_all(Vl, st.W.W);

    auto t0 = Clock::now();
    KMeansSpec ks = cfg.clustering;
    ks.k = k;
    ks.seed = rng::derive_seed(cfg.master_seed, "kmeans");
    rep.clusters = kmeans(rep.features, ks);
    rep.seconds.cluster = elapsed(t0);

    if (st.data.truth_labels) {
        rep.ri = rand_index(rep.clusters.labels, *st.data.truth_labels);
        rep.nmi = nmi(rep.clusters.labels, *st.data.truth_labels);
    }

    rep.objective = full_objective(st, cfg, Vl, &rep.j1_sum, &rep.j2_mean, &rep.penalty);

    rep.seeds = st.seeds;
    rep.seeds.emplace_back("kmeans", ks.seed);
    auto [l1, l2] = resolve_latents(cfg);
    rep.resolved_config = resolved_config_json(cfg, l1, l2, st.ridge);
    rep.resolved_config["embedding"]["L"] = static_cast<long long>(L);
    rep.resolved_config["clustering"]["k"] = k;

    rep.net_num = st.net_num;
    rep.net_cat = st.net_cat;
    rep.lpp.V = Vl;
    rep.lpp.eigenvalues = rep.eigenvalues;
    rep.lpp.degrees = st.lpp_full.degrees;
    rep.lpp.ridge = st.ridge;
    rep.lpp.kernel_spec = cfg.embedding.kernel;
    return rep;
}

struct BenchDefaults {
    int kappa1, kappa2;
    Index L;
    int knn;
    double reported_ri, reported_nmi;
};

const std::map<std::string, BenchDefaults>& bench_table() {
    // Externally reported reference results for the bundled datasets,
    // shown next to computed scores for comparison.
    static const std::map<std::string, BenchDefaults> table = {
        {"heart", {5, 7, 30, 0, 0.7162, 0.3454}},
        {"credit", {3, 5, 79, 0, 0.7034, 0.3389}},
        {"german", {4, 4, 14, 0, 0.5501, 0.0218}},
        {"adult", {5, 6, 90, 50, 0.6202, 0.0924}},
    };
    return table;
}

}  // namespace

// ---------------- config API ----------------

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig parse_config(const json& j) {
    PipelineConfig cfg = default_config();
    check_keys(j, "config",
               {"dataset", "network", "train", "train_num", "train_cat", "objective", "embedding",
                "clustering", "mode", "master_seed", "output_dir"});
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        check_keys(d, "dataset",
                   {"source", "name", "csv_path", "label_column", "cache_dir", "train_fraction",
                    "synthetic"});
        get_to(d, "source", cfg.dataset.source);
        get_to(d, "name", cfg.dataset.name);
        get_path(d, "csv_path", cfg.dataset.csv_path);
        get_to(d, "label_column", cfg.dataset.label_column);
        get_path(d, "cache_dir", cfg.dataset.cache_dir);
        get_to(d, "train_fraction", cfg.dataset.train_fraction);
        if (d.contains("synthetic")) {
            const json& s = d.at("synthetic");
            check_keys(s, "dataset.synthetic",
                       {"n", "numerical", "categorical", "clusters", "levels", "separation",
                        "purity"});
            get_index(s, "n", cfg.dataset.synth_n);
            get_to(s, "numerical", cfg.dataset.synth_numerical);
            get_to(s, "categorical", cfg.dataset.synth_categorical);
            get_to(s, "clusters", cfg.dataset.synth_clusters);
            get_to(s, "levels", cfg.dataset.synth_levels);
            get_to(s, "separation", cfg.dataset.synth_separation);
            get_to(s, "purity", cfg.dataset.synth_purity);
        }
    }
    if (j.contains("network")) {
        const json& n = j.at("network");
        check_keys(n, "network", {"kappa1", "kappa2", "latent1", "latent2", "use_bias"});
        get_to(n, "kappa1", cfg.network.kappa1);
        get_to(n, "kappa2", cfg.network.kappa2);
        get_index(n, "latent1", cfg.network.latent1);
        get_index(n, "latent2", cfg.network.latent2);
        get_to(n, "use_bias", cfg.network.use_bias);
    }
    if (j.contains("train")) {
        parse_train_section(j.at("train"), "train", cfg.train_num);
        parse_train_section(j.at("train"), "train", cfg.train_cat);
    }
    if (j.contains("train_num")) parse_train_section(j.at("train_num"), "train_num", cfg.train_num);
    if (j.contains("train_cat")) parse_train_section(j.at("train_cat"), "train_cat", cfg.train_cat);
    if (j.contains("objective")) {
        const json& o = j.at("objective");
        check_keys(o, "objective", {"alpha", "beta"});
        get_to(o, "alpha", cfg.objective.alpha);
        get_to(o, "beta", cfg.objective.beta);
    }
    if (j.contains("embedding")) {
        const json& e = j.at("embedding");
        check_keys(e, "embedding", {"L", "degree", "offset", "row_normalize", "knn", "ridge"});
        get_index(e, "L", cfg.embedding.L);
        get_to(e, "degree", cfg.embedding.kernel.degree);
        get_to(e, "offset", cfg.embedding.kernel.offset);
        get_to(e, "row_normalize", cfg.embedding.kernel.row_normalize);
        get_to(e, "knn", cfg.embedding.kernel.knn);
        if (e.contains("ridge")) {
            if (e.at("ridge").is_string()) {
                if (e.at("ridge").get<std::string>() != "auto")
                    throw ConfigError("embedding.ridge must be a number or \"auto\"");
                cfg.embedding.ridge = -1.0;
            } else {
                get_to(e, "ridge", cfg.embedding.ridge);
                if (cfg.embedding.ridge < 0.0)
                    throw ConfigError("embedding.ridge must be >= 0 or \"auto\"");
            }
        }
    }
    if (j.contains("clustering")) {
        const json& c = j.at("clustering");
        check_keys(c, "clustering", {"k", "restarts", "max_iters", "tol"});
        get_to(c, "k", cfg.clustering.k);
        get_to(c, "restarts", cfg.clustering.restarts);
        get_to(c, "max_iters", cfg.clustering.max_iters);
        get_to(c, "tol", cfg.clustering.tol);
    }
    if (j.contains("mode")) {
        const json& m = j.at("mode");
        check_keys(m, "mode", {"name", "outer_rounds", "epochs_per_round", "tol"});
        get_to(m, "name", cfg.mode.name);
        get_to(m, "outer_rounds", cfg.mode.outer_rounds);
        get_to(m, "epochs_per_round", cfg.mode.epochs_per_round);
        get_to(m, "tol", cfg.mode.tol);
    }
    get_to(j, "master_seed", cfg.master_seed);
    get_path(j, "output_dir", cfg.output_dir);
    validate_config(cfg);
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

json config_to_json(const PipelineConfig& cfg) {
    json j;
    j["dataset"] = {{"source", cfg.dataset.source},
                    {"name", cfg.dataset.name},
                    {"csv_path", cfg.dataset.csv_path.string()},
                    {"label_column", cfg.dataset.label_column},
                    {"cache_dir", cfg.dataset.cache_dir.string()},
                    {"train_fraction", cfg.dataset.train_fraction},
                    {"synthetic",
                     {{"n", static_cast<long long>(cfg.dataset.synth_n)},
                      {"numerical", cfg.dataset.synth_numerical},
                      {"categorical", cfg.dataset.synth_categorical},
                      {"clusters", cfg.dataset.synth_clusters},
                      {"levels", cfg.dataset.synth_levels},
                      {"separation", cfg.dataset.synth_separation},
                      {"purity", cfg.dataset.synth_purity}}}};
    j["network"] = {{"kappa1", cfg.network.kappa1},
                    {"kappa2", cfg.network.kappa2},
                    {"latent1", static_cast<long long>(cfg.network.latent1)},
                    {"latent2", static_cast<long long>(cfg.network.latent2)},
                    {"use_bias", cfg.network.use_bias}};
    j["train_num"] = train_to_json(cfg.train_num);
    j["train_cat"] = train_to_json(cfg.train_cat);
    j["objective"] = {{"alpha", cfg.objective.alpha}, {"beta", cfg.objective.beta}};
    j["embedding"] = {{"L", static_cast<long long>(cfg.embedding.L)},
                      {"degree", cfg.embedding.kernel.degree},
                      {"offset", cfg.embedding.kernel.offset},
                      {"row_normalize", cfg.embedding.kernel.row_normalize},
                      {"knn", cfg.embedding.kernel.knn}};
    if (cfg.embedding.ridge < 0.0)
        j["embedding"]["ridge"] = "auto";
    else
        j["embedding"]["ridge"] = cfg.embedding.ridge;
    j["clustering"] = {{"k", cfg.clustering.k},
                       {"restarts", cfg.clustering.restarts},
                       {"max_iters", cfg.clustering.max_iters},
                       {"tol", cfg.clustering.tol}};
    j["mode"] = {{"name", cfg.mode.name},
                 {"outer_rounds", cfg.mode.outer_rounds},
                 {"epochs_per_round", cfg.mode.epochs_per_round},
                 {"tol", cfg.mode.tol}};
    j["master_seed"] = cfg.master_seed;
    j["output_dir"] = cfg.output_dir.string();
    return j;
}

void apply_override(json& doc, const std::string& dotted_assignment) {
    auto eq = dotted_assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like section.key=value: " + dotted_assignment);
    std::string path = dotted_assignment.substr(0, eq);
    std::string value = dotted_assignment.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // bare strings stay strings
    }
    json* cursor = &doc;
    std::size_t start = 0;
    while (true) {
        auto dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("empty key segment in override: " + dotted_assignment);
        if (dot == std::string::npos) {
            (*cursor)[key] = parsed;
            return;
        }
        cursor = &(*cursor)[key];
        start = dot + 1;
    }
}

// ---------------- data sources ----------------

MixedDataset make_planted_mixed(Index n, int numerical_vars, int categorical_vars, int clusters,
                                int levels_per_var, double separation, double purity,
                                std::uint64_t seed) {
    if (n < 2) throw InvalidSpec("planted dataset needs n >= 2");
    if (numerical_vars < 1 || categorical_vars < 1)
        throw InvalidSpec("planted dataset needs both column kinds");
    if (clusters < 1 || clusters > n) throw InvalidSpec("planted cluster count out of range");
    if (levels_per_var < 2) throw InvalidSpec("categorical variables need >= 2 levels");
    if (!(purity >= 0.0 && purity <= 1.0)) throw InvalidSpec("purity must lie in [0,1]");

    rng::Sampler s(seed);
    Matrix centers(clusters, numerical_vars);
    if (clusters == 2) {
        centers.row(0).setConstant(-separation);
        centers.row(1).setConstant(separation);
    } else {
        for (Index c = 0; c < clusters; ++c)
            for (Index d = 0; d < numerical_vars; ++d) centers(c, d) = separation * s.normal();
    }

    std::vector<int> truth(static_cast<std::size_t>(n));
    Matrix raw(n, numerical_vars);
    std::vector<std::vector<Index>> chosen_level(
        static_cast<std::size_t>(n), std::vector<Index>(static_cast<std::size_t>(categorical_vars)));
    for (Index i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % clusters);
        truth[static_cast<std::size_t>(i)] = c;
        for (Index d = 0; d < numerical_vars; ++d) raw(i, d) = centers(c, d) + s.normal();
        for (int v = 0; v < categorical_vars; ++v) {
            Index level;
            if (s.uniform() < purity)
                level = static_cast<Index>((c + v) % levels_per_var);
            else
                level = static_cast<Index>(s.below(static_cast<std::uint64_t>(levels_per_var)));
            chosen_level[static_cast<std::size_t>(i)][static_cast<std::size_t>(v)] = level;
        }
    }

    // Same standardization contract as the CSV loader.
    for (Index d = 0; d < numerical_vars; ++d) {
        const double mean = raw.col(d).mean();
        const double var = (raw.col(d).array() - mean).square().sum() / static_cast<double>(n);
        const double sd = std::sqrt(var);
        if (sd < 1e-12)
            raw.col(d).setZero();
        else
            raw.col(d) = (raw.col(d).array() - mean) / sd;
    }

    std::vector<ColumnSpec> columns;
    for (Index d = 0; d < numerical_vars; ++d)
        columns.push_back(ColumnSpec::numerical("x" + std::to_string(d)));
    std::vector<std::string> levels;
    for (int l = 0; l < levels_per_var; ++l) levels.push_back("l" + std::to_string(l));
    for (int v = 0; v < categorical_vars; ++v)
        columns.push_back(ColumnSpec::categorical("c" + std::to_string(v), levels));

    MixedDataset data;
    data.schema = MixedSchema(std::move(columns));
    data.numerical = raw;
    data.categorical = Matrix::Zero(n, data.schema.p2());
    for (Index i = 0; i < n; ++i)
        for (int v = 0; v < categorical_vars; ++v) {
            Index off = data.schema.block_offset(static_cast<std::size_t>(v));
            data.categorical(i, off + chosen_level[static_cast<std::size_t>(i)]
                                                  [static_cast<std::size_t>(v)]) = 1.0;
        }
    data.row_ids.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) data.row_ids.push_back(std::to_string(i));
    data.truth_labels = truth;
    return data;
}

MixedSchema infer_csv_schema(const fs::path& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw EmptyDataset("no header row in " + path.string());
    std::vector<std::string> header = csv::split_line(line, options.delimiter);

    auto is_missing = [&](const std::string& v) {
        return std::find(options.missing_markers.begin(), options.missing_markers.end(), v) !=
               options.missing_markers.end();
    };
    std::vector<bool> numeric(header.size(), true);
    std::vector<std::set<std::string>> values(header.size());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields = csv::split_line(line, options.delimiter);
        if (fields.size() != header.size())
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected " + std::to_string(header.size()) + " fields");
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (is_missing(fields[c])) continue;
            if (numeric[c]) {
                char* end = nullptr;
                std::strtod(fields[c].c_str(), &end);
                if (end == fields[c].c_str() || *end != '\0') numeric[c] = false;
            }
            values[c].insert(fields[c]);
        }
    }
    std::vector<ColumnSpec> columns;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (options.label_column && header[c] == *options.label_column) continue;
        if (numeric[c] && !values[c].empty())
            columns.push_back(ColumnSpec::numerical(header[c]));
        else
            columns.push_back(ColumnSpec::categorical(
                header[c], std::vector<std::string>(values[c].begin(), values[c].end())));
    }
    return MixedSchema(std::move(columns));
}

MixedDataset load_pipeline_dataset(const PipelineConfig& cfg) {
    const auto& d = cfg.dataset;
    if (d.source == "uci") return load_uci(parse_uci_name(d.name), d.cache_dir);
    if (d.source == "csv") {
        if (d.csv_path.empty()) throw ConfigError("dataset.csv_path is required for csv source");
        CsvOptions options;
        if (!d.label_column.empty()) options.label_column = d.label_column;
        MixedSchema schema = infer_csv_schema(d.csv_path, options);
        return load_csv(d.csv_path, schema, MissingPolicy::drop_row, options);
    }
    if (d.source == "synthetic")
        return make_planted_mixed(d.synth_n, d.synth_numerical, d.synth_categorical,
                                  d.synth_clusters, d.synth_levels, d.synth_separation,
                                  d.synth_purity, rng::derive_seed(cfg.master_seed, "synthetic"));
    throw ConfigError("dataset.source must be uci, csv or synthetic");
}

// ---------------- runs ----------------

RunReport run_kmfm(const PipelineConfig& cfg) {
    return run_kmfm(cfg, load_pipeline_dataset(cfg));
}

RunReport run_kmfm(const PipelineConfig& cfg, const MixedDataset& data) {
    validate_config(cfg);
    auto t0 = Clock::now();
    TrainedStack st = build_stack(cfg, data);
    if (cfg.mode.name == "alternating") refine_alternating(st, cfg);
    RunReport rep = finish_run(st, cfg, cfg.embedding.L, cfg.clustering.k);
    rep.seconds.total = elapsed(t0);
    return rep;
}

std::vector<SweepRow> sweep_feature_dim(const PipelineConfig& cfg,
                                        const std::vector<Index>& L_values) {
    return sweep_feature_dim(cfg, load_pipeline_dataset(cfg), L_values);
}

std::vector<SweepRow> sweep_feature_dim(const PipelineConfig& cfg, const MixedDataset& data,
                                        const std::vector<Index>& L_values) {
    validate_config(cfg);
    if (L_values.empty()) throw ConfigError("feature-dimension sweep needs at least one value");
    TrainedStack st = build_stack(cfg, data);
    if (cfg.mode.name == "alternating") refine_alternating(st, cfg);
    std::vector<SweepRow> rows;
    rows.reserve(L_values.size());
    for (Index L : L_values) {
        RunReport rep = finish_run(st, cfg, L, cfg.clustering.k);
        rows.push_back({static_cast<double>(L), rep.ri, rep.nmi});
    }
    return rows;
}

std::vector<SweepRow> sweep_clusters(const PipelineConfig& cfg, const std::vector<int>& k_values) {
    return sweep_clusters(cfg, load_pipeline_dataset(cfg), k_values);
}

std::vector<SweepRow> sweep_clusters(const PipelineConfig& cfg, const MixedDataset& data,
                                     const std::vector<int>& k_values) {
    validate_config(cfg);
    if (k_values.empty()) throw ConfigError("cluster sweep needs at least one value");
    for (int k : k_values)
        if (k < 1 || static_cast<Index>(k) > data.n())
            throw DegenerateInput("cluster sweep k out of range [1, n]");
    TrainedStack st = build_stack(cfg, data);
    if (cfg.mode.name == "alternating") refine_alternating(st, cfg);
    std::vector<SweepRow> rows;
    rows.reserve(k_values.size());
    for (int k : k_values) {
        RunReport rep = finish_run(st, cfg, cfg.embedding.L, k);
        rows.push_back({static_cast<double>(k), rep.ri, rep.nmi});
    }
    return rows;
}

std::vector<BenchmarkRow> benchmark(const std::vector<std::string>& names, const json& overrides) {
    std::vector<BenchmarkRow> rows;
    for (const std::string& name : names) {
        auto it = bench_table().find(name);
        if (it == bench_table().end()) throw ConfigError("no benchmark defaults for '" + name + "'");
        json doc = config_to_json(default_config());
        doc["dataset"]["source"] = "uci";
        doc["dataset"]["name"] = name;
        doc["network"]["kappa1"] = it->second.kappa1;
        doc["network"]["kappa2"] = it->second.kappa2;
        doc["embedding"]["L"] = static_cast<long long>(it->second.L);
        doc["embedding"]["knn"] = it->second.knn;
        doc["clustering"]["k"] = 2;
        if (!overrides.is_null() && !overrides.empty()) doc.merge_patch(overrides);
        PipelineConfig cfg = parse_config(doc);
        auto t0 = Clock::now();
        RunReport rep = run_kmfm(cfg);
        rows.push_back({name, rep.ri, rep.nmi, it->second.reported_ri, it->second.reported_nmi,
                        elapsed(t0)});
    }
    return rows;
}

// ---------------- artifacts ----------------

namespace {

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
    if (!out.good()) throw IoError("short write to " + path.string());
}

std::string curves_csv(const LossHistory& h) {
    std::ostringstream out;
    out << "epoch,train_loss,validation_loss\n";
    for (std::size_t i = 0; i < h.train.size(); ++i)
        out << (i + 1) << ',' << fmt(h.train[i]) << ',' << fmt(h.validation[i]) << '\n';
    return out.str();
}

std::string dataset_tag(const json& resolved) {
    const json& d = resolved.at("dataset");
    std::string source = d.at("source").get<std::string>();
    return source == "uci" ? d.at("name").get<std::string>() : source;
}

constexpr char kCheckpointMagic[] = "KMFMRUN1";

}  // namespace

void emit_loss_curves(const RunReport& report, const fs::path& out_dir) {
    if (report.loss_num.train.size() != report.loss_num.validation.size() ||
        report.loss_cat.train.size() != report.loss_cat.validation.size())
        throw IoError("loss history columns disagree in length");
    write_text(out_dir / "curves_num.csv", curves_csv(report.loss_num));
    write_text(out_dir / "curves_cat.csv", curves_csv(report.loss_cat));
}

void write_metrics_csv(const RunReport& report, const fs::path& path) {
    std::ostringstream out;
    out << "dataset,mode,n,L,k,ri,nmi,j1_sum,j2_mean,locality_penalty,objective,rounds_used,"
           "converged\n";
    out << dataset_tag(report.resolved_config) << ','
        << report.resolved_config.at("mode").at("name").get<std::string>() << ',' << report.n << ','
        << report.L << ',' << report.k << ',' << fmt(report.ri) << ',' << fmt(report.nmi) << ','
        << fmt(report.j1_sum) << ',' << fmt(report.j2_mean) << ',' << fmt(report.penalty) << ','
        << fmt(report.objective) << ',' << report.rounds_used << ','
        << (report.converged ? "true" : "false") << '\n';
    write_text(path, out.str());
}

void write_report_json(const RunReport& report, const fs::path& path) {
    json j;
    j["config"] = report.resolved_config;
    json seeds = json::object();
    for (const auto& [label, seed] : report.seeds) seeds[label] = seed;
    j["seeds"] = seeds;
    j["metrics"] = {{"ri", report.ri},
                    {"nmi", report.nmi},
                    {"j1_sum", report.j1_sum},
                    {"j2_mean", report.j2_mean},
                    {"locality_penalty", report.penalty},
                    {"objective", report.objective}};
    j["eigenvalues"] = std::vector<double>(report.eigenvalues.data(),
                                           report.eigenvalues.data() + report.eigenvalues.size());
    j["loss_num"] = {{"train", report.loss_num.train}, {"validation", report.loss_num.validation}};
    j["loss_cat"] = {{"train", report.loss_cat.train}, {"validation", report.loss_cat.validation}};
    j["clusters"] = {{"inertia", report.clusters.inertia},
                     {"iterations", report.clusters.iterations_used},
                     {"restart_index", report.clusters.restart_index},
                     {"empty_cluster_reseeds", report.clusters.empty_cluster_reseeds}};
    j["rounds_used"] = report.rounds_used;
    j["converged"] = report.converged;
    j["seconds"] = {{"train_num", report.seconds.train_num},
                    {"train_cat", report.seconds.train_cat},
                    {"kernel", report.seconds.kernel},
                    {"lpp", report.seconds.lpp},
                    {"cluster", report.seconds.cluster},
                    {"total", report.seconds.total}};
    write_text(path, j.dump(2) + "\n");
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& x_name,
                     const fs::path& path) {
    std::ostringstream out;
    out << x_name << ",ri,nmi\n";
    for (const SweepRow& r : rows)
        out << fmt(r.x) << ',' << fmt(r.ri) << ',' << fmt(r.nmi) << '\n';
    write_text(path, out.str());
}

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, const fs::path& path) {
    std::ostringstream out;
    out << "dataset,ri,nmi,reported_ri,reported_nmi,seconds\n";
    for (const BenchmarkRow& r : rows)
        out << r.dataset << ',' << fmt(r.ri) << ',' << fmt(r.nmi) << ',' << fmt(r.reported_ri)
            << ',' << fmt(r.reported_nmi) << ',' << fmt(r.seconds) << '\n';
    write_text(path, out.str());
}

void save_checkpoint(const RunReport& report, const fs::path& path) {
    io::BinaryWriter w(path);
    w.str(kCheckpointMagic);
    w.str(report.resolved_config.dump());
    w.u32(static_cast<std::uint32_t>(report.seeds.size()));
    for (const auto& [label, seed] : report.seeds) {
        w.str(label);
        w.u64(seed);
    }
    serialize_network(report.net_num, w);
    serialize_network(report.net_cat, w);
    serialize_lpp(report.lpp, w);
}

Checkpoint load_checkpoint(const fs::path& path) {
    io::BinaryReader r(path);
    if (r.str() != kCheckpointMagic) throw IntegrityError("not a run checkpoint: " + path.string());
    Checkpoint ck;
    try {
        ck.resolved_config = json::parse(r.str());
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("corrupt checkpoint config: ") + e.what());
    }
    const auto n_seeds = r.u32();
    for (std::uint32_t i = 0; i < n_seeds; ++i) {
        std::string label = r.str();
        std::uint64_t seed = r.u64();
        ck.seeds.emplace_back(std::move(label), seed);
    }
    ck.net_num = deserialize_network(r);
    ck.net_cat = deserialize_network(r);
    ck.lpp = deserialize_lpp(r);
    return ck;
}

RunReport replay_checkpoint(const Checkpoint& ck, const MixedDataset& data) {
    PipelineConfig cfg = parse_config(ck.resolved_config);
    if (data.schema.p1() != ck.net_num.input_dim() || data.schema.p2() != ck.net_cat.input_dim())
        throw SchemaMismatch("checkpoint networks do not fit this dataset's column layout");

    RunReport rep;
    rep.resolved_config = ck.resolved_config;
    rep.seeds = ck.seeds;
    rep.net_num = ck.net_num;
    rep.net_cat = ck.net_cat;
    rep.lpp = ck.lpp;
    rep.n = data.n();
    rep.L = ck.lpp.V.cols();
    rep.k = cfg.clustering.k;
    rep.eigenvalues = ck.lpp.eigenvalues;

    Matrix y_num = encode_all(ck.net_num, data.numerical);
    Matrix y_cat = encode_all(ck.net_cat, data.categorical);
    LatentEmbedding W = concat_latents(y_num, y_cat);
    rep.features = project_all(ck.lpp.V, W.W);

    KMeansSpec ks = cfg.clustering;
    ks.seed = rng::derive_seed(cfg.master_seed, "kmeans");
    for (const auto& [label, seed] : ck.seeds)
        if (label == "kmeans") ks.seed = seed;
    rep.clusters = kmeans(rep.features, ks);
    if (data.truth_labels) {
        rep.ri = rand_index(rep.clusters.labels, *data.truth_labels);
        rep.nmi = nmi(rep.clusters.labels, *data.truth_labels);
    }
    return rep;
}

std::uint64_t file_fnv1a(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash " + path.string());
    std::uint64_t h = 14695981039346656037ull;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (got < static_cast<std::streamsize>(sizeof buf)) break;
    }
    return h;
}

void write_run_artifacts(const RunReport& report, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output dir " + out_dir.string());

    write_metrics_csv(report, out_dir / "metrics.csv");
    emit_loss_curves(report, out_dir);
    save_checkpoint(report, out_dir / "checkpoint.bin");
    write_report_json(report, out_dir / "report.json");

    json manifest;
    manifest["config"] = report.resolved_config;
    json seeds = json::object();
    for (const auto& [label, seed] : report.seeds) seeds[label] = seed;
    manifest["seeds"] = seeds;
    manifest["metrics"] = {{"ri", report.ri}, {"nmi", report.nmi}, {"objective", report.objective}};
    json artifacts = json::object();
    for (const char* name : {"metrics.csv", "curves_num.csv", "curves_cat.csv", "checkpoint.bin",
                             "report.json"}) {
        char hex[32];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(file_fnv1a(out_dir / name)));
        artifacts[name] = hex;
    }
    manifest["artifacts"] = artifacts;
    manifest["seconds"] = {{"total", report.seconds.total}};
    manifest["notes"] = json::array(
        {"default benchmark hyperparameters were tuned against ground-truth RI/NMI; "
         "scores follow that protocol and are not blind model selection"});
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace kmfm
