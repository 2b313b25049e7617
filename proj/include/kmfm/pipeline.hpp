#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kmfm/clustering.hpp"
#include "kmfm/dataset.hpp"
#include "kmfm/embedding.hpp"
#include "kmfm/metrics.hpp"
#include "kmfm/neuralnet.hpp"
#include "kmfm/uci.hpp"

namespace kmfm {

using nlohmann::json;

struct DatasetConfig {
    std::string source = "uci";  // uci | csv | synthetic
    std::string name = "heart";  // uci source
    std::filesystem::path csv_path;
    std::string label_column = "label";  // csv source; empty = unlabeled
    std::filesystem::path cache_dir = "data";
    double train_fraction = 0.8;
    // synthetic source: planted clusters over mixed columns
    Index synth_n = 400;
    int synth_numerical = 4;
    int synth_categorical = 3;
    int synth_clusters = 2;
    int synth_levels = 3;
    double synth_separation = 2.5;
    double synth_purity = 0.9;
};

struct NetworkConfig {
    int kappa1 = 2;     // encoder depth, numerical-input net
    int kappa2 = 2;     // encoder depth, categorical-input net
    Index latent1 = 0;  // 0 = derive from the feature dimension
    Index latent2 = 0;
    bool use_bias = true;
};

struct ObjectiveConfig {
    double alpha = 0.5;  // weight between the two reconstruction losses
    double beta = 0.1;   // weight of the locality penalty
};

struct EmbeddingConfig {
    KernelSpec kernel;
    Index L = 10;         // final feature dimension
    double ridge = -1.0;  // < 0: scale-relative default
};

struct ModeConfig {
    std::string name = "two_stage";  // or "alternating"
    int outer_rounds = 5;
    int epochs_per_round = 50;
    double tol = 1e-4;  // relative change of the combined objective
};

struct PipelineConfig {
    DatasetConfig dataset;
    NetworkConfig network;
    TrainConfig train_num;  // numerical-input net, categorical softmax head
    TrainConfig train_cat;  // categorical-input net, numerical MSE head
    ObjectiveConfig objective;
    EmbeddingConfig embedding;
    KMeansSpec clustering;
    ModeConfig mode;
    std::uint64_t master_seed = 1;
    std::filesystem::path output_dir = "out";
};

PipelineConfig default_config();
/// Defaults overlaid with the given document; unknown keys are rejected.
PipelineConfig parse_config(const json& j);
PipelineConfig load_config(const std::filesystem::path& path);
json config_to_json(const PipelineConfig& cfg);
/// In-place `section.key=value` override (CLI flag form).
void apply_override(json& doc, const std::string& dotted_assignment);

struct StageSeconds {
    double train_num = 0, train_cat = 0, kernel = 0, lpp = 0, cluster = 0, total = 0;
};

struct RunReport {
    json resolved_config;
    std::vector<std::pair<std::string, std::uint64_t>> seeds;
    LossHistory loss_num, loss_cat;  // per-epoch mean losses
    Vector eigenvalues;              // ascending, length L
    double j1_sum = 0;               // summed categorical NLL over all rows
    double j2_mean = 0;              // per-sample, per-coordinate MSE over all rows
    double penalty = 0;              // locality penalty of the final projection
    double objective = 0;            // alpha*J1 + (1-alpha)*J2 + beta*P
    double ri = std::numeric_limits<double>::quiet_NaN();
    double nmi = std::numeric_limits<double>::quiet_NaN();
    KMeansResult clusters;
    StageSeconds seconds;
    Index n = 0, L = 0;
    int k = 0;
    bool converged = true;  // alternating mode: objective settled before round cap
    int rounds_used = 0;
    Matrix features;  // n x L projected rows
    EncoderDecoderNet net_num, net_cat;
    LppSolution lpp;
};

/// Planted-cluster mixed data: Gaussian blobs on the numerical columns and
/// cluster-correlated level choices on the categorical ones. Numerical
/// columns come out standardized like the CSV loader's.
MixedDataset make_planted_mixed(Index n, int numerical_vars, int categorical_vars, int clusters,
                                int levels_per_var, double separation, double purity,
                                std::uint64_t seed);

MixedDataset load_pipeline_dataset(const PipelineConfig& cfg);
/// Inferred schema for an arbitrary labeled CSV: a column is numerical iff
/// every non-missing value parses as a number.
MixedSchema infer_csv_schema(const std::filesystem::path& path, const CsvOptions& options);

RunReport run_kmfm(const PipelineConfig& cfg);
RunReport run_kmfm(const PipelineConfig& cfg, const MixedDataset& data);

struct SweepRow {
    double x;  // L or k
    double ri;
    double nmi;
};
/// Trains once, then varies only the eigenvector truncation.
std::vector<SweepRow> sweep_feature_dim(const PipelineConfig& cfg, const std::vector<Index>& L_values);
std::vector<SweepRow> sweep_feature_dim(const PipelineConfig& cfg, const MixedDataset& data,
                                        const std::vector<Index>& L_values);
/// Fixed feature map, varies only the cluster count.
std::vector<SweepRow> sweep_clusters(const PipelineConfig& cfg, const std::vector<int>& k_values);
std::vector<SweepRow> sweep_clusters(const PipelineConfig& cfg, const MixedDataset& data,
                                     const std::vector<int>& k_values);

struct BenchmarkRow {
    std::string dataset;
    double ri = 0, nmi = 0;
    double reported_ri = 0, reported_nmi = 0;  // published reference results
    double seconds = 0;
};
std::vector<BenchmarkRow> benchmark(const std::vector<std::string>& names, const json& overrides);

// ---- artifacts ----

void emit_loss_curves(const RunReport& report, const std::filesystem::path& out_dir);
void write_metrics_csv(const RunReport& report, const std::filesystem::path& path);
void write_report_json(const RunReport& report, const std::filesystem::path& path);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& x_name,
                     const std::filesystem::path& path);
void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, const std::filesystem::path& path);

struct Checkpoint {
    EncoderDecoderNet net_num, net_cat;
    LppSolution lpp;
    json resolved_config;
    std::vector<std::pair<std::string, std::uint64_t>> seeds;
};
void save_checkpoint(const RunReport& report, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Re-runs only projection + clustering + metrics from saved parameters;
/// reproduces a run's RI/NMI exactly on the same data.
RunReport replay_checkpoint(const Checkpoint& ck, const MixedDataset& data);

std::uint64_t file_fnv1a(const std::filesystem::path& path);
/// metrics.csv + loss curves + checkpoint + report.json + manifest.json.
void write_run_artifacts(const RunReport& report, const std::filesystem::path& out_dir);

}  // namespace kmfm
