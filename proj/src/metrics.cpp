#include "kmfm/metrics.hpp"

#include <cmath>
#include <map>

namespace kmfm {

namespace {

void check_lengths(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw LengthMismatch("label vectors differ in length: " + std::to_string(pred.size()) +
                             " vs " + std::to_string(truth.size()));
}

// Remap arbitrary int labels to dense 0..k-1 ids, ordered by first
// appearance (deterministic regardless of label values).
std::vector<int> densify(const std::vector<int>& labels, std::size_t& k_out) {
    std::map<int, int> id;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = id.try_emplace(labels[i], static_cast<int>(id.size()));
        out[i] = it->second;
    }
    k_out = id.size();
    return out;
}

std::uint64_t choose2(std::uint64_t m) { return m * (m - 1) / 2; }

}  // namespace

Contingency contingency_table(const std::vector<int>& pred, const std::vector<int>& truth) {
    check_lengths(pred, truth);
    std::size_t k = 0, kt = 0;
    const auto p = densify(pred, k);
    const auto t = densify(truth, kt);

    Contingency c;
    c.n = pred.size();
    c.cells.assign(k, std::vector<std::uint64_t>(kt, 0));
    c.pred_sizes.assign(k, 0);
    c.truth_sizes.assign(kt, 0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        c.cells[p[i]][t[i]]++;
        c.pred_sizes[p[i]]++;
        c.truth_sizes[t[i]]++;
    }
    return c;
}

PairCounts pair_counts(const std::vector<int>& pred, const std::vector<int>& truth) {
    const Contingency c = contingency_table(pred, truth);

    std::uint64_t tp = 0;
    for (const auto& row : c.cells)
        for (std::uint64_t cell : row) tp += choose2(cell);

    std::uint64_t same_pred = 0, same_truth = 0;
    for (std::uint64_t s : c.pred_sizes) same_pred += choose2(s);
    for (std::uint64_t s : c.truth_sizes) same_truth += choose2(s);

    PairCounts pc;
    pc.tp = tp;
    pc.fp = same_pred - tp;
    pc.fn = same_truth - tp;
    pc.tn = choose2(c.n) - pc.tp - pc.fp - pc.fn;
    return pc;
}

double rand_index(const std::vector<int>& pred, const std::vector<int>& truth) {
    check_lengths(pred, truth);
    if (pred.size() < 2) throw TooFewSamples("rand_index needs n >= 2");
    const PairCounts pc = pair_counts(pred, truth);
    return static_cast<double>(pc.tp + pc.tn) / static_cast<double>(pc.total());
}

double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
    check_lengths(pred, truth);
    if (pred.size() < 2) throw TooFewSamples("nmi needs n >= 2");
    const Contingency c = contingency_table(pred, truth);
    const double n = static_cast<double>(c.n);

    // numerator: sum_jj' N_jj' log(N N_jj' / (N_j N_j')), 0 log 0 := 0
    double num = 0.0;
    for (std::size_t j = 0; j < c.cells.size(); ++j) {
        for (std::size_t jt = 0; jt < c.cells[j].size(); ++jt) {
            const double njj = static_cast<double>(c.cells[j][jt]);
            if (njj == 0.0) continue;
            num += njj * std::log(n * njj / (static_cast<double>(c.pred_sizes[j]) *
                                             static_cast<double>(c.truth_sizes[jt])));
        }
    }

    double hp = 0.0, ht = 0.0;  // -N * entropy of each margin
    for (std::uint64_t s : c.pred_sizes)
        if (s > 0) hp += static_cast<double>(s) * std::log(static_cast<double>(s) / n);
    for (std::uint64_t s : c.truth_sizes)
        if (s > 0) ht += static_cast<double>(s) * std::log(static_cast<double>(s) / n);

    const double denom2 = hp * ht;  // product of two nonpositive terms
    if (denom2 <= 0.0) return 0.0;  // a single-cluster partition carries no information
    const double value = num / std::sqrt(denom2);
    // clamp tiny rounding excursions outside [0,1]
    return std::min(1.0, std::max(0.0, value));
}

}  // namespace kmfm
