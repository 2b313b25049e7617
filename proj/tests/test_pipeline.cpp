#include <doctest.h>

#include <cmath>
#include <set>
#include <string>

#include "helpers.hpp"
#include "kmfm/pipeline.hpp"
#include "kmfm/rng.hpp"

using namespace kmfm;
using testutil::TempDir;

namespace {

// Small synthetic setup that keeps every full-pipeline test sub-second.
PipelineConfig tiny_config() {
    PipelineConfig cfg;
    cfg.dataset.source = "synthetic";
    cfg.dataset.synth_n = 80;
    cfg.dataset.synth_numerical = 3;
    cfg.dataset.synth_categorical = 2;
    cfg.dataset.synth_levels = 3;
    cfg.network.latent1 = 3;
    cfg.network.latent2 = 3;
    cfg.embedding.L = 4;
    cfg.train_num.epochs = 25;
    cfg.train_cat.epochs = 25;
    cfg.train_num.batch_size = 16;
    cfg.train_cat.batch_size = 16;
    cfg.clustering.k = 2;
    cfg.clustering.restarts = 4;
    cfg.master_seed = 11;
    return cfg;
}

std::vector<std::string> seed_labels(const RunReport& rep) {
    std::vector<std::string> out;
    for (const auto& [label, seed] : rep.seeds) out.push_back(label);
    return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config survives a json roundtrip") {
    const json a = config_to_json(default_config());
    const json b = config_to_json(parse_config(a));
    CHECK(a.dump() == b.dump());

    TempDir tmp("cfg");
    testutil::write_file(tmp.file("c.json"), a.dump(2));
    PipelineConfig from_file = load_config(tmp.file("c.json"));
    CHECK(config_to_json(from_file).dump() == a.dump());

    testutil::write_file(tmp.file("broken.json"), "{ not json");
    CHECK_THROWS_AS(load_config(tmp.file("broken.json")), ConfigError);
    CHECK_THROWS_AS(load_config(tmp.file("absent.json")), ConfigError);
}

TEST_CASE("unknown keys and bad values are rejected") {
    json base = config_to_json(default_config());

    json j = base;
    j["bogus"] = 1;
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["dataset"]["bananas"] = true;
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["objective"]["alpha"] = 0.0;
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["objective"]["beta"] = -1.0;
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["dataset"]["train_fraction"] = 1.0;
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["mode"]["name"] = "maximal";
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["train_num"]["optimizer"] = "rmsprop";
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["embedding"]["ridge"] = -0.5;
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["embedding"]["ridge"] = "automatic";
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base;
    j["embedding"]["ridge"] = "auto";  // the one accepted string
    CHECK(parse_config(j).embedding.ridge < 0.0);

    j = base;
    j["dataset"]["source"] = 42;  // type mismatch
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    // shared train section fans out to both networks
    j = base;
    j.erase("train_num");
    j.erase("train_cat");
    j["train"] = {{"epochs", 7}};
    PipelineConfig cfg = parse_config(j);
    CHECK(cfg.train_num.epochs == 7);
    CHECK(cfg.train_cat.epochs == 7);
}

TEST_CASE("dotted overrides edit the config document") {
    json doc = json::object();
    apply_override(doc, "embedding.L=12");
    apply_override(doc, "mode.name=alternating");
    apply_override(doc, "network.use_bias=false");
    apply_override(doc, "dataset.synthetic.n=64");
    apply_override(doc, "dataset.name=\"credit\"");
    CHECK(doc["embedding"]["L"] == 12);
    CHECK(doc["mode"]["name"] == "alternating");
    CHECK(doc["network"]["use_bias"] == false);
    CHECK(doc["dataset"]["synthetic"]["n"] == 64);
    CHECK(doc["dataset"]["name"] == "credit");

    CHECK_THROWS_AS(apply_override(doc, "noequals"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "=5"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "a..b=1"), ConfigError);
}

TEST_CASE("planted mixed data has the advertised structure") {
    auto d = make_planted_mixed(60, 3, 2, 2, 4, 2.0, 1.0, 99);
    CHECK(d.n() == 60);
    CHECK(d.schema.p1() == 3);
    CHECK(d.schema.p2() == 8);
    REQUIRE(d.truth_labels.has_value());
    for (Index i = 0; i < 60; ++i) CHECK((*d.truth_labels)[static_cast<std::size_t>(i)] == i % 2);

    // loader-style standardization
    for (Index j = 0; j < 3; ++j) {
        CHECK(std::abs(d.numerical.col(j).mean()) < 1e-12);
        CHECK(std::abs(d.numerical.col(j).squaredNorm() / 60.0 - 1.0) < 1e-12);
    }
    // exactly one level active per categorical variable
    CHECK(d.categorical.rowwise().sum().isConstant(2.0));
    // purity 1: the level is a pure function of cluster and variable
    for (Index i = 0; i < 60; ++i) {
        const int c = (*d.truth_labels)[static_cast<std::size_t>(i)];
        CHECK(d.categorical(i, d.schema.block_offset(0) + c % 4) == 1.0);
        CHECK(d.categorical(i, d.schema.block_offset(1) + (c + 1) % 4) == 1.0);
    }

    auto again = make_planted_mixed(60, 3, 2, 2, 4, 2.0, 1.0, 99);
    CHECK(again.numerical == d.numerical);
    CHECK(again.categorical == d.categorical);
    auto other = make_planted_mixed(60, 3, 2, 2, 4, 2.0, 1.0, 100);
    CHECK(other.numerical != d.numerical);

    CHECK_THROWS_AS(make_planted_mixed(1, 3, 2, 2, 4, 2.0, 1.0, 0), InvalidSpec);
    CHECK_THROWS_AS(make_planted_mixed(60, 0, 2, 2, 4, 2.0, 1.0, 0), InvalidSpec);
    CHECK_THROWS_AS(make_planted_mixed(60, 3, 2, 2, 1, 2.0, 1.0, 0), InvalidSpec);
    CHECK_THROWS_AS(make_planted_mixed(60, 3, 2, 2, 4, 2.0, 1.5, 0), InvalidSpec);
}

TEST_CASE("csv schema inference separates numbers from level strings") {
    TempDir tmp("infer");
    testutil::write_file(tmp.file("d.csv"),
                         "a,b,label,c\n"
                         "1,x,0,0.5\n"
                         "2,y,1,0.25\n"
                         "?,x,0,0.125\n");
    CsvOptions opt;
    opt.label_column = "label";
    MixedSchema s = infer_csv_schema(tmp.file("d.csv"), opt);
    REQUIRE(s.columns().size() == 3);
    CHECK(s.columns()[0].name == "a");
    CHECK(s.columns()[0].kind == ColumnKind::numerical);
    CHECK(s.columns()[1].kind == ColumnKind::categorical);
    CHECK(s.columns()[1].levels == std::vector<std::string>{"x", "y"});
    CHECK(s.columns()[2].kind == ColumnKind::numerical);
    CHECK(s.p1() == 2);

    testutil::write_file(tmp.file("ragged.csv"), "a,b\n1\n");
    try {
        infer_csv_schema(tmp.file("ragged.csv"), {});
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
}

TEST_CASE("csv source loads through the config and unlabeled runs have no scores") {
    TempDir tmp("csvsrc");
    std::string body = "x,y,c\n";
    for (int i = 0; i < 12; ++i)
        body += std::to_string(i) + "," + std::to_string(3 * i % 7) + "," +
                (i % 2 ? "a\n" : "b\n");
    testutil::write_file(tmp.file("d.csv"), body);

    PipelineConfig cfg = tiny_config();
    cfg.dataset.source = "csv";
    cfg.dataset.csv_path = tmp.file("d.csv");
    cfg.dataset.label_column = "";
    cfg.network.latent1 = 2;
    cfg.network.latent2 = 2;
    cfg.embedding.L = 2;
    cfg.train_num.epochs = 3;
    cfg.train_cat.epochs = 3;
    cfg.train_num.batch_size = 4;
    cfg.train_cat.batch_size = 4;

    MixedDataset data = load_pipeline_dataset(cfg);
    CHECK(data.n() == 12);
    CHECK(data.schema.p1() == 2);
    CHECK_FALSE(data.truth_labels.has_value());

    RunReport rep = run_kmfm(cfg, data);
    CHECK(std::isnan(rep.ri));
    CHECK(std::isnan(rep.nmi));
    CHECK(rep.features.rows() == 12);

    cfg.dataset.csv_path.clear();
    CHECK_THROWS_AS(load_pipeline_dataset(cfg), ConfigError);
}

TEST_CASE("synthetic run is deterministic and the report is coherent") {
    PipelineConfig cfg = tiny_config();
    MixedDataset data = load_pipeline_dataset(cfg);

    RunReport a = run_kmfm(cfg, data);
    RunReport b = run_kmfm(cfg, data);
    CHECK(a.features == b.features);
    CHECK(a.clusters.labels == b.clusters.labels);
    CHECK(a.ri == b.ri);
    CHECK(a.nmi == b.nmi);
    CHECK(a.objective == b.objective);

    // the one-argument form regenerates the same dataset from the seed
    RunReport c = run_kmfm(cfg);
    CHECK(c.ri == a.ri);

    CHECK(a.n == 80);
    CHECK(a.L == 4);
    CHECK(a.k == 2);
    CHECK(a.features.cols() == 4);
    REQUIRE(a.eigenvalues.size() == 4);
    for (Index j = 0; j + 1 < 4; ++j) CHECK(a.eigenvalues(j) <= a.eigenvalues(j + 1) + 1e-12);
    CHECK(a.loss_num.train.size() == 25);
    CHECK(a.loss_cat.train.size() == 25);
    CHECK(a.j1_sum >= 0.0);
    CHECK(a.j2_mean >= 0.0);
    CHECK(a.penalty >= 0.0);
    CHECK(a.objective ==
          doctest::Approx(0.5 * a.j1_sum + 0.5 * a.j2_mean + 0.1 * a.penalty).epsilon(1e-12));
    CHECK(a.ri >= 0.0);
    CHECK(a.ri <= 1.0);

    auto labels = seed_labels(a);
    for (const char* want :
         {"split", "net_num_shuffle", "net_num_init", "net_cat_shuffle", "net_cat_init", "kmeans"})
        CHECK(std::find(labels.begin(), labels.end(), want) != labels.end());

    // different master seed, different trained features
    PipelineConfig cfg2 = cfg;
    cfg2.master_seed = 12;
    RunReport d = run_kmfm(cfg2, data);
    CHECK(d.features != a.features);
}

TEST_CASE("loss weighting does not leak into two-stage features") {
    PipelineConfig lo = tiny_config();
    lo.objective.alpha = 0.3;
    PipelineConfig hi = tiny_config();
    hi.objective.alpha = 0.7;
    MixedDataset data = load_pipeline_dataset(lo);

    RunReport a = run_kmfm(lo, data);
    RunReport b = run_kmfm(hi, data);
    CHECK(a.features == b.features);
    CHECK(a.ri == b.ri);
    CHECK(a.nmi == b.nmi);
    CHECK(a.objective != b.objective);  // the weights only reweigh the report
    CHECK(a.j1_sum == b.j1_sum);
    CHECK(a.j2_mean == b.j2_mean);
}

TEST_CASE("single-point sweeps agree with a plain run") {
    PipelineConfig cfg = tiny_config();
    MixedDataset data = load_pipeline_dataset(cfg);
    RunReport rep = run_kmfm(cfg, data);

    auto lrows = sweep_feature_dim(cfg, data, {4});
    REQUIRE(lrows.size() == 1);
    CHECK(lrows[0].x == 4.0);
    CHECK(lrows[0].ri == rep.ri);
    CHECK(lrows[0].nmi == rep.nmi);

    auto krows = sweep_clusters(cfg, data, {2});
    REQUIRE(krows.size() == 1);
    CHECK(krows[0].ri == rep.ri);
    CHECK(krows[0].nmi == rep.nmi);

    auto multi = sweep_feature_dim(cfg, data, {1, 2, 4, 6});
    REQUIRE(multi.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(multi[i].x == (std::vector<double>{1, 2, 4, 6})[i]);

    auto kmulti = sweep_clusters(cfg, data, {2, 3, 5});
    REQUIRE(kmulti.size() == 3);
    for (const auto& row : kmulti) {
        CHECK(row.ri >= 0.0);
        CHECK(row.ri <= 1.0);
    }

    CHECK_THROWS_AS(sweep_feature_dim(cfg, data, {}), ConfigError);
    CHECK_THROWS_AS(sweep_feature_dim(cfg, data, {7}), BadL);  // beyond latent1+latent2
    CHECK_THROWS_AS(sweep_clusters(cfg, data, {0}), DegenerateInput);
    CHECK_THROWS_AS(sweep_clusters(cfg, data, {81}), DegenerateInput);
}

TEST_CASE("impossible dimensions fail before any training") {
    PipelineConfig cfg = tiny_config();
    cfg.embedding.L = 7;  // latent1 + latent2 = 6
    MixedDataset data = load_pipeline_dataset(tiny_config());
    CHECK_THROWS_AS(run_kmfm(cfg, data), ConfigError);

    PipelineConfig toomany = tiny_config();
    toomany.clustering.k = 300;
    CHECK_THROWS_AS(run_kmfm(toomany, data), InvalidSpec);
}

TEST_CASE("alternating refinement keeps the books straight") {
    PipelineConfig cfg = tiny_config();
    cfg.mode.name = "alternating";
    cfg.mode.outer_rounds = 3;
    cfg.mode.epochs_per_round = 4;
    cfg.train_num.epochs = 10;
    cfg.train_cat.epochs = 10;
    MixedDataset data = load_pipeline_dataset(cfg);

    RunReport a = run_kmfm(cfg, data);
    CHECK(a.rounds_used >= 1);
    CHECK(a.rounds_used <= 3);
    const std::size_t expect =
        10 + static_cast<std::size_t>(a.rounds_used) * 4;
    CHECK(a.loss_num.train.size() == expect);
    CHECK(a.loss_cat.train.size() == expect);
    CHECK(a.loss_num.validation.size() == expect);

    RunReport b = run_kmfm(cfg, data);
    CHECK(a.features == b.features);
    CHECK(a.objective == b.objective);
    CHECK(a.converged == b.converged);

    auto labels = seed_labels(a);
    CHECK(std::find(labels.begin(), labels.end(), "alt_shuffle") != labels.end());
}

TEST_CASE("checkpoints reproduce a run's clustering exactly") {
    PipelineConfig cfg = tiny_config();
    MixedDataset data = load_pipeline_dataset(cfg);
    RunReport rep = run_kmfm(cfg, data);

    TempDir tmp("ckpt");
    save_checkpoint(rep, tmp.file("run.bin"));
    Checkpoint ck = load_checkpoint(tmp.file("run.bin"));
    CHECK(ck.resolved_config.dump() == rep.resolved_config.dump());

    RunReport replay = replay_checkpoint(ck, data);
    CHECK(replay.features == rep.features);
    CHECK(replay.clusters.labels == rep.clusters.labels);
    CHECK(replay.ri == rep.ri);
    CHECK(replay.nmi == rep.nmi);

    // wrong column layout is refused
    auto other = make_planted_mixed(20, 5, 2, 2, 3, 2.0, 0.9, 5);
    CHECK_THROWS_AS(replay_checkpoint(ck, other), SchemaMismatch);

    // wrong magic vs. plain truncation
    {
        io::BinaryWriter w(tmp.file("badmagic.bin"));
        w.str("KMFMRUN9");
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.file("badmagic.bin")), IntegrityError);
    testutil::write_file(tmp.file("junk.bin"), "XXXX");
    CHECK_THROWS_AS(load_checkpoint(tmp.file("junk.bin")), IoError);
}

TEST_CASE("artifact bundle: presence, hashes and deterministic metrics") {
    PipelineConfig cfg = tiny_config();
    MixedDataset data = load_pipeline_dataset(cfg);
    RunReport rep = run_kmfm(cfg, data);

    TempDir tmp("bundle");
    const auto dir1 = tmp.path() / "one";
    write_run_artifacts(rep, dir1);
    for (const char* name : {"metrics.csv", "curves_num.csv", "curves_cat.csv", "checkpoint.bin",
                             "report.json", "manifest.json"})
        CHECK(std::filesystem::exists(dir1 / name));

    const std::string metrics = testutil::read_file(dir1 / "metrics.csv");
    CHECK(metrics.rfind("dataset,mode,n,L,k,ri,nmi,j1_sum,j2_mean,locality_penalty,objective,"
                        "rounds_used,converged\n",
                        0) == 0);
    CHECK(metrics.find("\nsynthetic,two_stage,80,4,2,") != std::string::npos);

    // the manifest's recorded hashes match the files on disk
    json manifest = json::parse(testutil::read_file(dir1 / "manifest.json"));
    for (auto it = manifest.at("artifacts").begin(); it != manifest.at("artifacts").end(); ++it) {
        const std::uint64_t expect = std::stoull(it.value().get<std::string>(), nullptr, 16);
        CHECK(file_fnv1a(dir1 / it.key()) == expect);
    }

    // an independent identical run produces byte-identical metric artifacts
    RunReport rep2 = run_kmfm(cfg, data);
    const auto dir2 = tmp.path() / "two";
    write_run_artifacts(rep2, dir2);
    CHECK(testutil::read_file(dir1 / "metrics.csv") == testutil::read_file(dir2 / "metrics.csv"));
    CHECK(testutil::read_file(dir1 / "curves_num.csv") ==
          testutil::read_file(dir2 / "curves_num.csv"));
    CHECK(testutil::read_file(dir1 / "curves_cat.csv") ==
          testutil::read_file(dir2 / "curves_cat.csv"));

    const std::string curves = testutil::read_file(dir1 / "curves_num.csv");
    CHECK(curves.rfind("epoch,train_loss,validation_loss\n", 0) == 0);
    CHECK(std::count(curves.begin(), curves.end(), '\n') == 26);  // header + 25 epochs
}

TEST_CASE("benchmark table rejects unknown datasets") {
    CHECK_THROWS_AS(benchmark({"emerald"}, json()), ConfigError);
}

}  // TEST_SUITE
