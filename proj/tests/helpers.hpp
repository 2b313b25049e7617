#pragma once

// Shared test utilities: independent reference implementations (oracles)
// and small random-input generators. Everything here is deliberately
// written the slow, obvious way so it cannot share bugs with the library.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kmfm/common.hpp"
#include "kmfm/metrics.hpp"
#include "kmfm/rng.hpp"

namespace testutil {

using kmfm::Index;
using kmfm::Matrix;
using kmfm::Vector;

// ---- randomness ----

inline Matrix random_matrix(Index rows, Index cols, kmfm::rng::Sampler& s, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = scale * s.normal();
    return m;
}

inline std::vector<int> random_labels(std::size_t n, int k, kmfm::rng::Sampler& s) {
    std::vector<int> out(n);
    for (auto& v : out) v = static_cast<int>(s.below(static_cast<std::uint64_t>(k)));
    return out;
}

// ---- metrics oracles: O(n^2) pair enumeration and probability-space NMI ----

inline kmfm::PairCounts brute_pair_counts(const std::vector<int>& pred,
                                          const std::vector<int>& truth) {
    kmfm::PairCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (std::size_t j = i + 1; j < pred.size(); ++j) {
            const bool same_p = pred[i] == pred[j];
            const bool same_t = truth[i] == truth[j];
            if (same_p && same_t)
                ++c.tp;
            else if (!same_p && !same_t)
                ++c.tn;
            else if (same_p)
                ++c.fp;
            else
                ++c.fn;
        }
    return c;
}

inline double brute_rand_index(const std::vector<int>& pred, const std::vector<int>& truth) {
    auto c = brute_pair_counts(pred, truth);
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

/// NMI from joint probabilities: MI / sqrt(H_pred * H_truth), a different
/// algebraic route than the count-ratio form under test.
inline double brute_nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
    const double n = static_cast<double>(pred.size());
    std::map<std::pair<int, int>, std::uint64_t> joint_count;
    std::map<int, std::uint64_t> ca, cb;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++joint_count[{pred[i], truth[i]}];
        ++ca[pred[i]];
        ++cb[truth[i]];
    }
    // probabilities from exact integer counts, one division each, so a
    // one-cluster partition yields an exactly zero entropy
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> pa, pb;
    for (const auto& [key, c] : joint_count) joint[key] = static_cast<double>(c) / n;
    for (const auto& [key, c] : ca) pa[key] = static_cast<double>(c) / n;
    for (const auto& [key, c] : cb) pb[key] = static_cast<double>(c) / n;
    double mi = 0.0;
    for (const auto& [key, pij] : joint)
        mi += pij * std::log(pij / (pa[key.first] * pb[key.second]));
    double ha = 0.0, hb = 0.0;
    for (const auto& [_, p] : pa) ha -= p * std::log(p);
    for (const auto& [_, p] : pb) hb -= p * std::log(p);
    if (ha <= 0.0 || hb <= 0.0) return 0.0;
    double v = mi / std::sqrt(ha * hb);
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

// ---- locality penalty oracle: literal double sum ----

template <typename Kernel>  // callable (i, j) -> s_ij
double brute_locality_penalty(const Matrix& V, const Matrix& W, Kernel s) {
    const Index n = W.cols();
    double total = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            Vector di = V.transpose() * (W.col(i) - W.col(j));
            total += s(i, j) * di.squaredNorm();
        }
    return total;
}

// ---- filesystem scratch ----

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("kmfm_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    out << body;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testutil
