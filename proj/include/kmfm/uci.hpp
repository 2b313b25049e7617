#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "kmfm/dataset.hpp"

namespace kmfm {

enum class UciDataset { heart, credit, german, adult };

UciDataset parse_uci_name(const std::string& name);
std::string uci_name(UciDataset which);

/// Returns the response body for a URL or throws NetworkError. Injectable so
/// the cache/normalization path is testable without real network access.
using Fetcher = std::function<std::string(const std::string& url)>;

/// Plain HTTP(S) GET via the bundled client.
std::string http_get(const std::string& url);

struct FetchResult {
    std::filesystem::path csv_path;
    std::size_t rows = 0;
    bool from_cache = false;
};

/// Downloads (or reuses) a dataset as `<cache_dir>/<name>/raw.csv` plus a
/// `meta` file recording source URLs and the row count. The raw file is
/// normalized to comma-separated form with a header row; the adult splits
/// are concatenated, test-label punctuation stripped and incomplete rows
/// dropped. Concurrent calls serialize on a per-dataset file lock. Throws
/// NetworkError when neither cache nor fetch succeed and IntegrityError
/// when the row count does not match the published size.
FetchResult fetch_uci(UciDataset which, const std::filesystem::path& cache_dir,
                      const Fetcher& fetch = http_get);

/// fetch_uci + schema inference (categorical levels are the observed value
/// strings, sorted) + standardized load with ground-truth labels attached.
MixedDataset load_uci(UciDataset which, const std::filesystem::path& cache_dir,
                      const Fetcher& fetch = http_get);

/// Expected row count of the normalized raw file.
std::size_t uci_expected_rows(UciDataset which);

}  // namespace kmfm
