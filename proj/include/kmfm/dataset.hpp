#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kmfm/common.hpp"

namespace kmfm {

enum class ColumnKind { numerical, categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numerical;
    std::vector<std::string> levels;  // categorical only; order fixes dummy layout

    static ColumnSpec numerical(std::string name) {
        return {std::move(name), ColumnKind::numerical, {}};
    }
    static ColumnSpec categorical(std::string name, std::vector<std::string> levels) {
        return {std::move(name), ColumnKind::categorical, std::move(levels)};
    }
};

/// Ordered mixed-column schema. Categorical columns expand to one dummy
/// indicator column per level; p = p1 + p2 where p1 counts numerical
/// columns and p2 sums the level counts.
class MixedSchema {
public:
    MixedSchema() = default;
    explicit MixedSchema(std::vector<ColumnSpec> columns);

    const std::vector<ColumnSpec>& columns() const { return columns_; }
    Index p1() const { return p1_; }
    Index p2() const { return p2_; }
    Index p() const { return p1_ + p2_; }

    /// Offset of a categorical column's dummy block within the p2-wide
    /// encoded row. `cat_index` counts categorical columns only.
    Index block_offset(std::size_t cat_index) const { return block_offsets_.at(cat_index); }
    std::size_t categorical_count() const { return block_offsets_.size(); }

    /// Index of the level string within its category, or throws UnknownLevel.
    Index level_index(std::size_t cat_index, const std::string& level) const;

private:
    std::vector<ColumnSpec> columns_;
    std::vector<Index> block_offsets_;
    Index p1_ = 0;
    Index p2_ = 0;
};

/// Immutable encoded mixed dataset: standardized numerical block plus
/// one-hot categorical block. Truth labels, when present, are evaluation
/// metadata only; feature-learning code must not read them.
struct MixedDataset {
    MixedSchema schema;
    Matrix numerical;    // n x p1
    Matrix categorical;  // n x p2, entries in {0,1}, one 1 per category block
    std::vector<std::string> row_ids;
    std::optional<std::vector<int>> truth_labels;

    Index n() const { return numerical.rows() > 0 ? numerical.rows() : categorical.rows(); }

    /// [numerical | categorical] concatenation, the rows the affinity
    /// kernel is computed on.
    Matrix encoded_rows() const;

    /// Row subset (indices into 0..n-1); standardization is not redone.
    MixedDataset subset(const std::vector<Index>& rows) const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

enum class MissingPolicy { drop_row, error };

struct CsvOptions {
    char delimiter = ',';
    std::vector<std::string> missing_markers = {"?", ""};
    /// Header name of a ground-truth class column; excluded from features.
    std::optional<std::string> label_column;
};

/// One-hot encode one observation's categorical values (one raw level per
/// categorical column, schema order) into a p2-wide 0/1 row.
Vector dummy_encode(const std::vector<std::string>& raw_levels, const MixedSchema& schema);

/// Load a comma-delimited CSV with header into the encoded representation.
/// Numerical columns are standardized to zero mean / unit variance
/// (population denominator n; constant columns become all-zero). Rows with
/// missing markers or undeclared levels are dropped or rejected per policy.
MixedDataset load_csv(const std::filesystem::path& path, const MixedSchema& schema,
                      MissingPolicy policy, const CsvOptions& options = {});

/// Canonical CSV emission (numerical values at full precision, categorical
/// as level strings). load_csv(write_csv(d)) reproduces the encoded
/// matrices.
void write_csv(const MixedDataset& dataset, const std::filesystem::path& path);

/// Deterministic row split into (train, validation).
std::pair<MixedDataset, MixedDataset> split(const MixedDataset& dataset, const SplitSpec& spec);

namespace csv {
/// Split one delimited line and trim surrounding whitespace per field.
std::vector<std::string> split_line(const std::string& line, char delimiter);
}  // namespace csv

}  // namespace kmfm
