#include "kmfm/uci.hpp"

// httplib drags in <resolv.h>, whose macros corrupt Eigen internals;
// every Eigen-including header must come first.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace kmfm {
namespace {

namespace fs = std::filesystem;

struct ColumnDesc {
    const char* name;
    ColumnKind kind;
};

struct UciDesc {
    const char* name;
    std::vector<std::string> urls;
    std::vector<ColumnDesc> columns;  // feature columns, file order
    const char* label;
    std::size_t expected_rows;
};

const UciDesc& describe(UciDataset which) {
    static const UciDesc heart{
        "heart",
        {"https://archive.ics.uci.edu/ml/machine-learning-databases/heart-disease/"
         "processed.cleveland.data"},
        {{"age", ColumnKind::numerical},
         {"sex", ColumnKind::categorical},
         {"cp", ColumnKind::categorical},
         {"trestbps", ColumnKind::numerical},
         {"chol", ColumnKind::numerical},
         {"fbs", ColumnKind::categorical},
         {"restecg", ColumnKind::categorical},
         {"thalach", ColumnKind::numerical},
         {"exang", ColumnKind::categorical},
         {"oldpeak", ColumnKind::numerical},
         {"slope", ColumnKind::categorical},
         {"ca", ColumnKind::numerical},
         {"thal", ColumnKind::categorical}},
        "num",
        303};
    static const UciDesc credit{
        "credit",
        {"https://archive.ics.uci.edu/ml/machine-learning-databases/credit-screening/crx.data"},
        {{"A1", ColumnKind::categorical},
         {"A2", ColumnKind::numerical},
         {"A3", ColumnKind::numerical},
         {"A4", ColumnKind::categorical},
         {"A5", ColumnKind::categorical},
         {"A6", ColumnKind::categorical},
         {"A7", ColumnKind::categorical},
         {"A8", ColumnKind::numerical},
         {"A9", ColumnKind::categorical},
         {"A10", ColumnKind::categorical},
         {"A11", ColumnKind::numerical},
         {"A12", ColumnKind::categorical},
         {"A13", ColumnKind::categorical},
         {"A14", ColumnKind::numerical},
         {"A15", ColumnKind::numerical}},
        "class",
        690};
    static const UciDesc german{
        "german",
        {"https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/german/german.data"},
        {{"chk_status", ColumnKind::categorical},
         {"duration", ColumnKind::numerical},
         {"credit_history", ColumnKind::categorical},
         {"purpose", ColumnKind::categorical},
         {"credit_amount", ColumnKind::numerical},
         {"savings", ColumnKind::categorical},
         {"employment_since", ColumnKind::categorical},
         {"installment_rate", ColumnKind::numerical},
         {"personal_status", ColumnKind::categorical},
         {"other_debtors", ColumnKind::categorical},
         {"residence_since", ColumnKind::numerical},
         {"property", ColumnKind::categorical},
         {"age", ColumnKind::numerical},
         {"other_installment", ColumnKind::categorical},
         {"housing", ColumnKind::categorical},
         {"existing_credits", ColumnKind::numerical},
         {"job", ColumnKind::categorical},
         {"num_dependents", ColumnKind::numerical},
         {"telephone", ColumnKind::categorical},
         {"foreign_worker", ColumnKind::categorical}},
        "class",
        1000};
    static const UciDesc adult{
        "adult",
        {"https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data",
         "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.test"},
        {{"age", ColumnKind::numerical},
         {"workclass", ColumnKind::categorical},
         {"fnlwgt", ColumnKind::numerical},
         {"education", ColumnKind::categorical},
         {"education_num", ColumnKind::numerical},
         {"marital_status", ColumnKind::categorical},
         {"occupation", ColumnKind::categorical},
         {"relationship", ColumnKind::categorical},
         {"race", ColumnKind::categorical},
         {"sex", ColumnKind::categorical},
         {"capital_gain", ColumnKind::numerical},
         {"capital_loss", ColumnKind::numerical},
         {"hours_per_week", ColumnKind::numerical},
         {"native_country", ColumnKind::categorical}},
        "label",
        45222};
    switch (which) {
        case UciDataset::heart: return heart;
        case UciDataset::credit: return credit;
        case UciDataset::german: return german;
        case UciDataset::adult: return adult;
    }
    throw ConfigError("unreachable dataset enum");
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

/// "3.0" -> "3" so dummy levels do not split on formatting noise.
std::string canonical_token(const std::string& raw) {
    if (raw.empty() || raw == "?") return raw;
    char* end = nullptr;
    double v = std::strtod(raw.c_str(), &end);
    if (end == raw.c_str() || *end != '\0') return raw;
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
        std::ostringstream out;
        out << static_cast<long long>(v);
        return out.str();
    }
    return raw;
}

std::vector<std::string> split_lines(const std::string& body) {
    std::vector<std::string> lines;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

using Row = std::vector<std::string>;

std::vector<Row> normalize_delimited(const std::string& body, char delim, std::size_t fields,
                                     const std::string& url) {
    std::vector<Row> rows;
    for (const std::string& line : split_lines(body)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        Row row;
        if (delim == ' ') {
            std::istringstream fs(t);
            std::string tok;
            while (fs >> tok) row.push_back(tok);
        } else {
            row = csv::split_line(t, delim);
        }
        if (row.size() != fields)
            throw IntegrityError("malformed record in " + url + ": expected " +
                                 std::to_string(fields) + " fields, got " +
                                 std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<Row> normalize(UciDataset which, const UciDesc& desc,
                           const std::vector<std::string>& bodies) {
    std::vector<Row> rows;
    const std::size_t fields = desc.columns.size() + 1;
    switch (which) {
        case UciDataset::heart: {
            rows = normalize_delimited(bodies[0], ',', fields, desc.urls[0]);
            for (Row& row : rows) {
                for (std::size_t c = 0; c < desc.columns.size(); ++c)
                    if (desc.columns[c].kind == ColumnKind::categorical)
                        row[c] = canonical_token(row[c]);
                // Diagnosis 1..4 collapses to presence; 0 stays absence.
                row.back() = canonical_token(row.back()) == "0" ? "0" : "1";
            }
            break;
        }
        case UciDataset::credit:
            rows = normalize_delimited(bodies[0], ',', fields, desc.urls[0]);
            break;
        case UciDataset::german:
            rows = normalize_delimited(bodies[0], ' ', fields, desc.urls[0]);
            break;
        case UciDataset::adult: {
            for (std::size_t b = 0; b < bodies.size(); ++b) {
                for (const std::string& line : split_lines(bodies[b])) {
                    std::string t = trim(line);
                    if (t.empty() || t[0] == '|') continue;  // test-split banner
                    Row row = csv::split_line(t, ',');
                    if (row.size() != fields)
                        throw IntegrityError("malformed record in " + desc.urls[b]);
                    if (!row.back().empty() && row.back().back() == '.')
                        row.back().pop_back();  // test-split labels end in '.'
                    bool complete = true;
                    for (const std::string& f : row)
                        if (f == "?" || f.empty()) {
                            complete = false;
                            break;
                        }
                    if (!complete) continue;  // published n counts complete rows only
                    rows.push_back(std::move(row));
                }
            }
            break;
        }
    }
    return rows;
}

class FileLock {
public:
    explicit FileLock(const fs::path& path) {
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw IoError("cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw IoError("cannot lock " + path.string());
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_;
};

std::size_t count_data_rows(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot read " + csv_path.string());
    std::string line;
    std::size_t n = 0;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (!trim(line).empty()) ++n;
    }
    return n;
}

std::size_t meta_rows(const fs::path& meta_path) {
    std::ifstream in(meta_path);
    if (!in) return 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("rows=", 0) == 0) return std::strtoull(line.c_str() + 5, nullptr, 10);
    }
    return 0;
}

}  // namespace

UciDataset parse_uci_name(const std::string& name) {
    if (name == "heart") return UciDataset::heart;
    if (name == "credit") return UciDataset::credit;
    if (name == "german") return UciDataset::german;
    if (name == "adult") return UciDataset::adult;
    throw ConfigError("unknown dataset '" + name + "' (expected heart, credit, german or adult)");
}

std::string uci_name(UciDataset which) { return describe(which).name; }

std::size_t uci_expected_rows(UciDataset which) { return describe(which).expected_rows; }

std::string http_get(const std::string& url) {
    auto split = url.find("://");
    if (split == std::string::npos) throw NetworkError("malformed url: " + url);
    auto path_start = url.find('/', split + 3);
    std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(15, 0);
    client.set_read_timeout(120, 0);
    auto res = client.Get(path);
    if (!res) throw NetworkError("fetch failed for " + url + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw NetworkError("fetch failed for " + url + ": HTTP " + std::to_string(res->status));
    return res->body;
}

FetchResult fetch_uci(UciDataset which, const fs::path& cache_dir, const Fetcher& fetch) {
    const UciDesc& desc = describe(which);
    fs::path dir = cache_dir / desc.name;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create cache dir " + dir.string());
    FileLock lock(dir / ".lock");

    fs::path csv_path = dir / "raw.csv";
    fs::path meta_path = dir / "meta";
    if (fs::exists(csv_path) && fs::exists(meta_path) && meta_rows(meta_path) == desc.expected_rows)
        return {csv_path, desc.expected_rows, true};

    std::vector<std::string> bodies;
    bodies.reserve(desc.urls.size());
    for (const std::string& url : desc.urls) bodies.push_back(fetch(url));

    std::vector<Row> rows = normalize(which, desc, bodies);
    if (rows.size() != desc.expected_rows)
        throw IntegrityError(std::string(desc.name) + ": got " + std::to_string(rows.size()) +
                             " rows, expected " + std::to_string(desc.expected_rows));

    fs::path tmp = dir / "raw.csv.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        for (std::size_t c = 0; c < desc.columns.size(); ++c) out << desc.columns[c].name << ',';
        out << desc.label << '\n';
        for (const Row& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out << ',';
                out << row[c];
            }
            out << '\n';
        }
        if (!out.good()) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, csv_path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " into place");
    {
        std::ofstream meta(meta_path, std::ios::trunc);
        meta << "dataset=" << desc.name << '\n';
        for (const std::string& url : desc.urls) meta << "url=" << url << '\n';
        meta << "rows=" << rows.size() << '\n';
    }
    return {csv_path, rows.size(), false};
}

MixedDataset load_uci(UciDataset which, const fs::path& cache_dir, const Fetcher& fetch) {
    const UciDesc& desc = describe(which);
    FetchResult fetched = fetch_uci(which, cache_dir, fetch);
    if (count_data_rows(fetched.csv_path) != desc.expected_rows)
        throw IntegrityError("cached file for " + std::string(desc.name) + " has wrong row count");

    // Categorical levels = observed value strings, sorted for determinism.
    std::vector<std::set<std::string>> levels(desc.columns.size());
    {
        std::ifstream in(fetched.csv_path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            Row row = csv::split_line(line, ',');
            for (std::size_t c = 0; c < desc.columns.size(); ++c) {
                if (desc.columns[c].kind != ColumnKind::categorical) continue;
                if (row[c] == "?" || row[c].empty()) continue;
                levels[c].insert(row[c]);
            }
        }
    }
    std::vector<ColumnSpec> columns;
    columns.reserve(desc.columns.size());
    for (std::size_t c = 0; c < desc.columns.size(); ++c) {
        if (desc.columns[c].kind == ColumnKind::numerical) {
            columns.push_back(ColumnSpec::numerical(desc.columns[c].name));
        } else {
            columns.push_back(ColumnSpec::categorical(
                desc.columns[c].name,
                std::vector<std::string>(levels[c].begin(), levels[c].end())));
        }
    }
    MixedSchema schema(std::move(columns));
    CsvOptions options;
    options.label_column = desc.label;
    return load_csv(fetched.csv_path, schema, MissingPolicy::drop_row, options);
}

}  // namespace kmfm
