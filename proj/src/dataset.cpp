#include "kmfm/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "kmfm/rng.hpp"

namespace kmfm {

namespace csv {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == delimiter) {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    for (auto& f : fields) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = (b == std::string::npos) ? std::string{} : f.substr(b, e - b + 1);
    }
    return fields;
}

}  // namespace csv

MixedSchema::MixedSchema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
    std::set<std::string> names;
    for (const auto& col : columns_) {
        if (!names.insert(col.name).second)
            throw SchemaMismatch("duplicate column name: " + col.name);
        if (col.kind == ColumnKind::numerical) {
            ++p1_;
            continue;
        }
        if (col.levels.empty())
            throw SchemaMismatch("categorical column has no levels: " + col.name);
        std::set<std::string> seen(col.levels.begin(), col.levels.end());
        if (seen.size() != col.levels.size())
            throw SchemaMismatch("duplicate level in column: " + col.name);
        block_offsets_.push_back(p2_);
        p2_ += static_cast<Index>(col.levels.size());
    }
    if (p() == 0) throw SchemaMismatch("schema has no columns");
}

Index MixedSchema::level_index(std::size_t cat_index, const std::string& level) const {
    std::size_t seen = 0;
    for (const auto& col : columns_) {
        if (col.kind != ColumnKind::categorical) continue;
        if (seen++ != cat_index) continue;
        const auto it = std::find(col.levels.begin(), col.levels.end(), level);
        if (it == col.levels.end())
            throw UnknownLevel("level '" + level + "' not declared for column " + col.name);
        return static_cast<Index>(it - col.levels.begin());
    }
    throw SchemaMismatch("categorical index out of range");
}

Matrix MixedDataset::encoded_rows() const {
    Matrix out(n(), schema.p());
    if (schema.p1() > 0) out.leftCols(schema.p1()) = numerical;
    if (schema.p2() > 0) out.rightCols(schema.p2()) = categorical;
    return out;
}

MixedDataset MixedDataset::subset(const std::vector<Index>& rows) const {
    MixedDataset out;
    out.schema = schema;
    out.numerical.resize(static_cast<Index>(rows.size()), numerical.cols());
    out.categorical.resize(static_cast<Index>(rows.size()), categorical.cols());
    out.row_ids.reserve(rows.size());
    if (truth_labels) out.truth_labels.emplace();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Index r = rows[i];
        out.numerical.row(static_cast<Index>(i)) = numerical.row(r);
        out.categorical.row(static_cast<Index>(i)) = categorical.row(r);
        out.row_ids.push_back(row_ids[static_cast<std::size_t>(r)]);
        if (truth_labels) out.truth_labels->push_back((*truth_labels)[static_cast<std::size_t>(r)]);
    }
    return out;
}

Vector dummy_encode(const std::vector<std::string>& raw_levels, const MixedSchema& schema) {
    if (raw_levels.size() != schema.categorical_count())
        throw ShapeMismatch("expected " + std::to_string(schema.categorical_count()) +
                            " categorical values, got " + std::to_string(raw_levels.size()));
    Vector row = Vector::Zero(schema.p2());
    for (std::size_t j = 0; j < raw_levels.size(); ++j) {
        row(schema.block_offset(j) + schema.level_index(j, raw_levels[j])) = 1.0;
    }
    return row;
}

namespace {

bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc{} && res.ptr == last;
}

void standardize_columns(Matrix& m) {
    const auto n = static_cast<double>(m.rows());
    for (Index j = 0; j < m.cols(); ++j) {
        const double mean = m.col(j).mean();
        const double var = (m.col(j).array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd < 1e-12) {
            m.col(j).setZero();  // constant column carries no scale information
        } else {
            m.col(j) = (m.col(j).array() - mean) / sd;
        }
    }
}

}  // namespace

MixedDataset load_csv(const std::filesystem::path& path, const MixedSchema& schema,
                      MissingPolicy policy, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file: " + path.string());
    const auto header = csv::split_line(line, options.delimiter);

    // Resolve each schema column (and the optional label column) to its
    // position in the file.
    std::vector<Index> col_pos;
    for (const auto& col : schema.columns()) {
        const auto it = std::find(header.begin(), header.end(), col.name);
        if (it == header.end())
            throw SchemaMismatch("column '" + col.name + "' missing from header");
        col_pos.push_back(static_cast<Index>(it - header.begin()));
    }
    Index label_pos = -1;
    if (options.label_column) {
        const auto it = std::find(header.begin(), header.end(), *options.label_column);
        if (it == header.end())
            throw SchemaMismatch("label column '" + *options.label_column + "' missing");
        label_pos = static_cast<Index>(it - header.begin());
    }

    const auto is_missing = [&](const std::string& v) {
        return std::find(options.missing_markers.begin(), options.missing_markers.end(), v) !=
               options.missing_markers.end();
    };

    std::vector<std::vector<double>> num_rows;
    std::vector<Vector> cat_rows;
    std::vector<std::string> row_ids;
    std::vector<std::string> label_values;
    std::size_t lineno = 1;

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = csv::split_line(line, options.delimiter);
        if (static_cast<Index>(fields.size()) < static_cast<Index>(header.size()))
            throw ParseError("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));

        std::vector<double> nums;
        std::vector<std::string> cats;
        bool drop = false;
        for (std::size_t c = 0; c < schema.columns().size() && !drop; ++c) {
            const auto& col = schema.columns()[c];
            const std::string& value = fields[static_cast<std::size_t>(col_pos[c])];
            if (is_missing(value)) {
                if (policy == MissingPolicy::error)
                    throw SchemaMismatch("line " + std::to_string(lineno) + ": missing value in " +
                                         col.name);
                drop = true;
                break;
            }
            if (col.kind == ColumnKind::numerical) {
                double v;
                if (!parse_double(value, v))
                    throw ParseError("line " + std::to_string(lineno) + ": non-numeric '" + value +
                                     "' in column " + col.name);
                nums.push_back(v);
            } else {
                const bool known =
                    std::find(col.levels.begin(), col.levels.end(), value) != col.levels.end();
                if (!known) {
                    if (policy == MissingPolicy::error)
                        throw SchemaMismatch("line " + std::to_string(lineno) + ": level '" +
                                             value + "' not declared for " + col.name);
                    drop = true;
                    break;
                }
                cats.push_back(value);
            }
        }
        if (drop) continue;

        num_rows.push_back(std::move(nums));
        cat_rows.push_back(dummy_encode(cats, schema));
        row_ids.push_back(std::to_string(lineno));
        if (label_pos >= 0) label_values.push_back(fields[static_cast<std::size_t>(label_pos)]);
    }

    const auto n = static_cast<Index>(num_rows.size());
    if (n < 2) throw EmptyDataset("fewer than 2 usable rows in " + path.string());

    MixedDataset out;
    out.schema = schema;
    out.numerical.resize(n, schema.p1());
    out.categorical.resize(n, schema.p2());
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < schema.p1(); ++j)
            out.numerical(i, j) = num_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        out.categorical.row(i) = cat_rows[static_cast<std::size_t>(i)].transpose();
    }
    standardize_columns(out.numerical);
    out.row_ids = std::move(row_ids);

    if (label_pos >= 0) {
        std::map<std::string, int> ids;
        std::vector<int> labels;
        labels.reserve(label_values.size());
        for (const auto& v : label_values) {
            const auto [it, ins] = ids.try_emplace(v, static_cast<int>(ids.size()));
            labels.push_back(it->second);
        }
        out.truth_labels = std::move(labels);
    }
    return out;
}

void write_csv(const MixedDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());

    const auto& cols = dataset.schema.columns();
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out << cols[c].name;
        if (c + 1 < cols.size() || dataset.truth_labels) out << ',';
    }
    if (dataset.truth_labels) out << "label";
    out << '\n';

    char buf[40];
    for (Index i = 0; i < dataset.n(); ++i) {
        Index num_j = 0;
        std::size_t cat_j = 0;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (cols[c].kind == ColumnKind::numerical) {
                std::snprintf(buf, sizeof buf, "%.17g", dataset.numerical(i, num_j++));
                out << buf;
            } else {
                const Index off = dataset.schema.block_offset(cat_j);
                const auto m = static_cast<Index>(cols[c].levels.size());
                Index active = -1;
                for (Index u = 0; u < m; ++u) {
                    if (dataset.categorical(i, off + u) != 0.0) {
                        active = u;
                        break;
                    }
                }
                if (active < 0) throw DataError("row without active level in " + cols[c].name);
                out << cols[c].levels[static_cast<std::size_t>(active)];
                ++cat_j;
            }
            if (c + 1 < cols.size() || dataset.truth_labels) out << ',';
        }
        if (dataset.truth_labels) out << (*dataset.truth_labels)[static_cast<std::size_t>(i)];
        out << '\n';
    }
}

std::pair<MixedDataset, MixedDataset> split(const MixedDataset& dataset, const SplitSpec& spec) {
    const Index n = dataset.n();
    const auto n_train = static_cast<Index>(
        std::floor(static_cast<double>(n) * spec.train_fraction));
    if (n_train < 1 || n - n_train < 1)
        throw DegenerateSplit("train_fraction " + std::to_string(spec.train_fraction) +
                              " leaves an empty side for n=" + std::to_string(n));

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    rng::Sampler sampler(spec.seed);
    sampler.shuffle(order);

    std::vector<Index> train_rows(order.begin(), order.begin() + n_train);
    std::vector<Index> val_rows(order.begin() + n_train, order.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    return {dataset.subset(train_rows), dataset.subset(val_rows)};
}

}  // namespace kmfm
