#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kmfm/pipeline.hpp"

namespace fs = std::filesystem;
using kmfm::json;

namespace {

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw kmfm::ConfigError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw kmfm::ConfigError("parse error in " + path.string() + ": " + e.what());
    }
    return j;
}

json overrides_to_json(const std::vector<std::string>& sets) {
    json doc = json::object();
    for (const std::string& s : sets) kmfm::apply_override(doc, s);
    return doc;
}

kmfm::PipelineConfig config_from_cli(const fs::path& config_path,
                                     const std::vector<std::string>& sets, bool have_seed,
                                     std::uint64_t seed, const std::string& out_dir) {
    json doc = read_json_file(config_path);
    for (const std::string& s : sets) kmfm::apply_override(doc, s);
    if (have_seed) doc["master_seed"] = seed;
    if (!out_dir.empty()) doc["output_dir"] = out_dir;
    return kmfm::parse_config(doc);
}

int dispatch(int argc, char** argv) {
    CLI::App app{"Mixed-data feature learning: twin encoder-decoders, "
                 "locality-preserving projection, seeded k-means"};
    app.require_subcommand(1);

    // fetch
    std::string fetch_name;
    std::string fetch_cache = "data";
    auto* fetch_cmd = app.add_subcommand("fetch", "Download and cache a benchmark dataset");
    fetch_cmd->add_option("dataset", fetch_name, "heart, credit, german or adult")->required();
    fetch_cmd->add_option("--cache-dir", fetch_cache, "Cache directory (default: data)");

    // shared run-like options
    std::string config_path;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool have_seed = false;
    std::string out_dir;

    auto add_run_options = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "JSON config file")->required();
        cmd->add_option("--set", sets, "Override config values, e.g. --set clustering.k=3");
        cmd->add_option("--seed", seed, "Override master_seed")->each([&](const std::string&) {
            have_seed = true;
        });
        cmd->add_option("--out", out_dir, "Override output_dir");
    };

    auto* run_cmd = app.add_subcommand("run", "Train, embed, cluster and write run artifacts");
    add_run_options(run_cmd);

    std::vector<long long> l_values;
    auto* sweep_l_cmd = app.add_subcommand("sweep-l", "Vary the feature dimension, reusing "
                                                      "trained networks and kernel");
    add_run_options(sweep_l_cmd);
    sweep_l_cmd->add_option("--values", l_values, "Feature dimensions to evaluate")
        ->required()
        ->delimiter(',');

    std::vector<int> k_values;
    auto* sweep_k_cmd = app.add_subcommand("sweep-k", "Vary the cluster count over a fixed "
                                                      "feature map");
    add_run_options(sweep_k_cmd);
    sweep_k_cmd->add_option("--values", k_values, "Cluster counts to evaluate")
        ->required()
        ->delimiter(',');

    std::vector<std::string> bench_names;
    std::string bench_out = "benchmark.csv";
    std::string bench_cache;
    std::vector<std::string> bench_sets;
    auto* bench_cmd = app.add_subcommand("bench", "Run the bundled datasets with their "
                                                  "per-dataset default hyperparameters");
    bench_cmd->add_option("datasets", bench_names, "heart credit german adult")->required();
    bench_cmd->add_option("--out", bench_out, "Output CSV path");
    bench_cmd->add_option("--cache-dir", bench_cache, "Dataset cache directory");
    bench_cmd->add_option("--set", bench_sets, "Config overrides applied to every dataset");

    std::string curves_report;
    std::string curves_out;
    auto* curves_cmd = app.add_subcommand("curves", "Re-emit per-epoch loss CSVs from a "
                                                    "run's report.json");
    curves_cmd->add_option("report", curves_report, "Path to report.json")->required();
    curves_cmd->add_option("out", curves_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (*fetch_cmd) {
        auto result = kmfm::fetch_uci(kmfm::parse_uci_name(fetch_name), fetch_cache);
        std::cout << result.csv_path.string() << " rows=" << result.rows
                  << (result.from_cache ? " (cached)" : " (downloaded)") << "\n";
        return 0;
    }
    if (*run_cmd) {
        auto cfg = config_from_cli(config_path, sets, have_seed, seed, out_dir);
        kmfm::RunReport rep = kmfm::run_kmfm(cfg);
        kmfm::write_run_artifacts(rep, cfg.output_dir);
        std::printf("ri=%.6f nmi=%.6f objective=%.6f out=%s\n", rep.ri, rep.nmi, rep.objective,
                    cfg.output_dir.string().c_str());
        return 0;
    }
    if (*sweep_l_cmd) {
        auto cfg = config_from_cli(config_path, sets, have_seed, seed, out_dir);
        std::vector<kmfm::Index> values(l_values.begin(), l_values.end());
        auto rows = kmfm::sweep_feature_dim(cfg, values);
        std::error_code ec;
        fs::create_directories(cfg.output_dir, ec);
        fs::path out = cfg.output_dir / "sweep_l.csv";
        kmfm::write_sweep_csv(rows, "L", out);
        std::cout << out.string() << "\n";
        return 0;
    }
    if (*sweep_k_cmd) {
        auto cfg = config_from_cli(config_path, sets, have_seed, seed, out_dir);
        auto rows = kmfm::sweep_clusters(cfg, k_values);
        std::error_code ec;
        fs::create_directories(cfg.output_dir, ec);
        fs::path out = cfg.output_dir / "sweep_k.csv";
        kmfm::write_sweep_csv(rows, "k", out);
        std::cout << out.string() << "\n";
        return 0;
    }
    if (*bench_cmd) {
        json overrides = overrides_to_json(bench_sets);
        if (!bench_cache.empty()) overrides["dataset"]["cache_dir"] = bench_cache;
        auto rows = kmfm::benchmark(bench_names, overrides);
        kmfm::write_benchmark_csv(rows, bench_out);
        std::cout << bench_out << "\n";
        return 0;
    }
    if (*curves_cmd) {
        json j = read_json_file(curves_report);
        kmfm::RunReport rep;
        try {
            j.at("loss_num").at("train").get_to(rep.loss_num.train);
            j.at("loss_num").at("validation").get_to(rep.loss_num.validation);
            j.at("loss_cat").at("train").get_to(rep.loss_cat.train);
            j.at("loss_cat").at("validation").get_to(rep.loss_cat.validation);
        } catch (const json::exception& e) {
            throw kmfm::ConfigError(std::string("report is missing loss histories: ") + e.what());
        }
        std::error_code ec;
        fs::create_directories(curves_out, ec);
        if (ec) throw kmfm::IoError("cannot create " + curves_out);
        kmfm::emit_loss_curves(rep, curves_out);
        std::cout << curves_out << "\n";
        return 0;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const kmfm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const kmfm::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const kmfm::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
