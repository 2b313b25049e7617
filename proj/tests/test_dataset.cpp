#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "kmfm/dataset.hpp"

using namespace kmfm;
using testutil::TempDir;
using testutil::write_file;

namespace {

MixedSchema toy_schema() {
    return MixedSchema({ColumnSpec::numerical("age"),
                        ColumnSpec::categorical("color", {"red", "green", "blue"}),
                        ColumnSpec::numerical("height"),
                        ColumnSpec::categorical("flag", {"n", "y"})});
}

constexpr const char* kToyCsv =
    "age,color,height,flag,label\n"
    "1,red,10,n,a\n"
    "2,green,20,y,b\n"
    "3,blue,30,n,a\n"
    "4,red,40,y,b\n";

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("schema dimensions and block offsets") {
    auto s = toy_schema();
    CHECK(s.p1() == 2);
    CHECK(s.p2() == 5);  // 3 + 2 levels
    CHECK(s.p() == 7);
    CHECK(s.categorical_count() == 2);
    CHECK(s.block_offset(0) == 0);
    CHECK(s.block_offset(1) == 3);
    CHECK(s.level_index(0, "blue") == 2);
    CHECK(s.level_index(1, "y") == 1);
    CHECK_THROWS_AS(s.level_index(0, "mauve"), UnknownLevel);
}

TEST_CASE("schema rejects malformed column sets") {
    CHECK_THROWS_AS(MixedSchema(std::vector<ColumnSpec>{}), SchemaMismatch);
    CHECK_THROWS_AS(MixedSchema({ColumnSpec::numerical("x"), ColumnSpec::numerical("x")}),
                    SchemaMismatch);
    CHECK_THROWS_AS(MixedSchema({ColumnSpec::categorical("c", {})}), SchemaMismatch);
    CHECK_THROWS_AS(MixedSchema({ColumnSpec::categorical("c", {"a", "a"})}), SchemaMismatch);
}

TEST_CASE("dummy_encode produces one indicator per category") {
    auto s = toy_schema();
    Vector v = dummy_encode({"green", "y"}, s);
    CHECK(v.size() == 5);
    CHECK(v(1) == 1.0);
    CHECK(v(4) == 1.0);
    CHECK(v.sum() == 2.0);
    CHECK_THROWS_AS(dummy_encode({"green"}, s), ShapeMismatch);
    CHECK_THROWS_AS(dummy_encode({"taupe", "y"}, s), UnknownLevel);
}

TEST_CASE("load_csv standardizes numerical columns") {
    TempDir tmp("csv");
    write_file(tmp.file("toy.csv"), kToyCsv);
    CsvOptions opt;
    opt.label_column = "label";
    auto d = load_csv(tmp.file("toy.csv"), toy_schema(), MissingPolicy::drop_row, opt);

    CHECK(d.n() == 4);
    // column (1,2,3,4): mean 2.5, population sd sqrt(1.25)
    const double sd = std::sqrt(1.25);
    CHECK(d.numerical(0, 0) == doctest::Approx((1 - 2.5) / sd).epsilon(1e-12));
    CHECK(d.numerical(3, 0) == doctest::Approx((4 - 2.5) / sd).epsilon(1e-12));
    CHECK(d.numerical.col(0).mean() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.numerical.col(0).squaredNorm() / 4.0 == doctest::Approx(1.0).epsilon(1e-12));

    // one-hot block layout
    CHECK(d.categorical(0, 0) == 1.0);  // red
    CHECK(d.categorical(1, 1) == 1.0);  // green
    CHECK(d.categorical(2, 2) == 1.0);  // blue
    CHECK(d.categorical(1, 4) == 1.0);  // flag y
    CHECK(d.categorical.rowwise().sum().isConstant(2.0));

    // labels densified by first appearance: a=0, b=1
    REQUIRE(d.truth_labels.has_value());
    CHECK(*d.truth_labels == std::vector<int>{0, 1, 0, 1});
}

TEST_CASE("constant numerical column becomes all-zero") {
    TempDir tmp("csv_const");
    write_file(tmp.file("c.csv"),
               "age,color,height,flag\n"
               "5,red,10,n\n"
               "5,green,20,y\n");
    auto d = load_csv(tmp.file("c.csv"), toy_schema(), MissingPolicy::drop_row);
    CHECK(d.numerical.col(0).isZero());
    CHECK_FALSE(d.truth_labels.has_value());
}

TEST_CASE("missing markers follow the policy") {
    TempDir tmp("csv_missing");
    write_file(tmp.file("m.csv"),
               "age,color,height,flag\n"
               "1,red,10,n\n"
               "?,green,20,y\n"
               "3,blue,30,n\n");
    auto dropped = load_csv(tmp.file("m.csv"), toy_schema(), MissingPolicy::drop_row);
    CHECK(dropped.n() == 2);
    CHECK(dropped.row_ids.size() == 2);
    CHECK_THROWS_AS(load_csv(tmp.file("m.csv"), toy_schema(), MissingPolicy::error),
                    SchemaMismatch);
}

TEST_CASE("undeclared categorical level follows the policy") {
    TempDir tmp("csv_level");
    write_file(tmp.file("l.csv"),
               "age,color,height,flag\n"
               "1,red,10,n\n"
               "2,purple,20,y\n"
               "3,blue,30,n\n");
    auto dropped = load_csv(tmp.file("l.csv"), toy_schema(), MissingPolicy::drop_row);
    CHECK(dropped.n() == 2);
    CHECK_THROWS_AS(load_csv(tmp.file("l.csv"), toy_schema(), MissingPolicy::error),
                    SchemaMismatch);
}

TEST_CASE("parse failures point at the offending line") {
    TempDir tmp("csv_bad");
    write_file(tmp.file("b.csv"),
               "age,color,height,flag\n"
               "1,red,10,n\n"
               "oops,green,20,y\n"
               "3,blue,30,n\n");
    try {
        load_csv(tmp.file("b.csv"), toy_schema(), MissingPolicy::drop_row);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    write_file(tmp.file("ragged.csv"),
               "age,color,height,flag\n"
               "1,red,10\n");
    CHECK_THROWS_AS(load_csv(tmp.file("ragged.csv"), toy_schema(), MissingPolicy::drop_row),
                    ParseError);
}

TEST_CASE("missing schema column in header is rejected") {
    TempDir tmp("csv_col");
    write_file(tmp.file("h.csv"), "age,color,height\n1,red,10\n2,green,20\n");
    CHECK_THROWS_AS(load_csv(tmp.file("h.csv"), toy_schema(), MissingPolicy::drop_row),
                    SchemaMismatch);
}

TEST_CASE("fewer than two usable rows is an empty dataset") {
    TempDir tmp("csv_empty");
    write_file(tmp.file("e.csv"), "age,color,height,flag\n1,red,10,n\n");
    CHECK_THROWS_AS(load_csv(tmp.file("e.csv"), toy_schema(), MissingPolicy::drop_row),
                    EmptyDataset);
}

TEST_CASE("encoded_rows is the [numerical | categorical] concatenation") {
    TempDir tmp("csv_enc");
    write_file(tmp.file("toy.csv"), kToyCsv);
    CsvOptions opt;
    opt.label_column = "label";
    auto d = load_csv(tmp.file("toy.csv"), toy_schema(), MissingPolicy::drop_row, opt);
    Matrix enc = d.encoded_rows();
    CHECK(enc.rows() == 4);
    CHECK(enc.cols() == 7);
    CHECK(enc.leftCols(2) == d.numerical);
    CHECK(enc.rightCols(5) == d.categorical);
}

TEST_CASE("write_csv then load_csv reproduces the encoded matrices") {
    TempDir tmp("csv_rt");
    write_file(tmp.file("toy.csv"), kToyCsv);
    CsvOptions opt;
    opt.label_column = "label";
    auto d = load_csv(tmp.file("toy.csv"), toy_schema(), MissingPolicy::drop_row, opt);

    write_csv(d, tmp.file("round.csv"));
    auto d2 = load_csv(tmp.file("round.csv"), d.schema, MissingPolicy::error, opt);
    CHECK((d2.numerical - d.numerical).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(d2.categorical == d.categorical);
    CHECK(*d2.truth_labels == *d.truth_labels);
}

TEST_CASE("subset keeps rows, ids and labels aligned") {
    TempDir tmp("csv_sub");
    write_file(tmp.file("toy.csv"), kToyCsv);
    CsvOptions opt;
    opt.label_column = "label";
    auto d = load_csv(tmp.file("toy.csv"), toy_schema(), MissingPolicy::drop_row, opt);
    auto sub = d.subset({2, 0});
    CHECK(sub.n() == 2);
    CHECK(sub.numerical.row(0) == d.numerical.row(2));
    CHECK(sub.numerical.row(1) == d.numerical.row(0));
    CHECK((*sub.truth_labels)[0] == (*d.truth_labels)[2]);
    CHECK(sub.row_ids[1] == d.row_ids[0]);
}

TEST_CASE("split is deterministic, disjoint and covering") {
    rng::Sampler s(3);
    MixedDataset d;
    d.schema = MixedSchema({ColumnSpec::numerical("x"), ColumnSpec::categorical("c", {"a", "b"})});
    const Index n = 25;
    d.numerical = testutil::random_matrix(n, 1, s);
    d.categorical = Matrix::Zero(n, 2);
    for (Index i = 0; i < n; ++i) d.categorical(i, i % 2) = 1.0;
    for (Index i = 0; i < n; ++i) d.row_ids.push_back(std::to_string(i));

    auto [tr1, va1] = split(d, {0.8, 99});
    auto [tr2, va2] = split(d, {0.8, 99});
    CHECK(tr1.numerical == tr2.numerical);
    CHECK(va1.numerical == va2.numerical);
    CHECK(tr1.n() == 20);
    CHECK(va1.n() == 5);

    std::vector<std::string> ids;
    ids.insert(ids.end(), tr1.row_ids.begin(), tr1.row_ids.end());
    ids.insert(ids.end(), va1.row_ids.begin(), va1.row_ids.end());
    std::sort(ids.begin(), ids.end());
    std::vector<std::string> all = d.row_ids;
    std::sort(all.begin(), all.end());
    CHECK(ids == all);

    auto [tr3, va3] = split(d, {0.8, 100});
    CHECK(tr3.numerical != tr1.numerical);  // different seed, different rows
    (void)va3;

    CHECK_THROWS_AS(split(d, {0.001, 1}), DegenerateSplit);
    CHECK_THROWS_AS(split(d, {1.0, 1}), DegenerateSplit);
}

}  // TEST_SUITE
