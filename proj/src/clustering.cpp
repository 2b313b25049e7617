#include "kmfm/clustering.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kmfm/rng.hpp"

namespace kmfm {
namespace {

struct Assignment {
    std::vector<int> labels;
    std::vector<double> dist2;  // to the assigned centroid
    double inertia = 0.0;
};

Assignment assign(const Matrix& points, const Matrix& centroids) {
    const Index n = points.rows();
    const Index k = centroids.rows();
    Assignment out;
    out.labels.resize(static_cast<std::size_t>(n));
    out.dist2.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        int best = 0;
        double best_d = (points.row(i) - centroids.row(0)).squaredNorm();
        for (Index c = 1; c < k; ++c) {
            double d = (points.row(i) - centroids.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        out.labels[static_cast<std::size_t>(i)] = best;
        out.dist2[static_cast<std::size_t>(i)] = best_d;
        out.inertia += best_d;
    }
    return out;
}

}  // namespace

Matrix kmeanspp_init(const Matrix& points, int k, std::uint64_t seed) {
    const Index n = points.rows();
    if (n == 0) throw ShapeMismatch("centroid seeding on empty point set");
    if (k < 1 || k > n) throw InvalidSpec("cluster count must lie in [1, n]");
    rng::Sampler rng(seed);
    Matrix centroids(k, points.cols());
    centroids.row(0) = points.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
    Vector dist2(n);
    for (Index i = 0; i < n; ++i)
        dist2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
        double total = dist2.sum();
        Index pick;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Index i = 0; i < n; ++i) {
                acc += dist2(i);
                if (acc >= u) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centroids.row(c) = points.row(pick);
        for (Index i = 0; i < n; ++i) {
            double d = (points.row(i) - centroids.row(c)).squaredNorm();
            if (d < dist2(i)) dist2(i) = d;
        }
    }
    return centroids;
}

LloydStep lloyd_step(const Matrix& points, const Matrix& centroids) {
    if (points.cols() != centroids.cols())
        throw ShapeMismatch("points and centroids disagree on dimension");
    if (centroids.rows() < 1) throw InvalidSpec("need at least one centroid");
    const Index n = points.rows();
    const Index k = centroids.rows();

    Assignment a = assign(points, centroids);

    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
        int c = a.labels[static_cast<std::size_t>(i)];
        sums.row(c) += points.row(i);
        ++counts[static_cast<std::size_t>(c)];
    }

    LloydStep step;
    step.labels = a.labels;
    step.inertia = a.inertia;
    step.centroids = centroids;  // rows overwritten below where clusters are non-empty
    for (Index c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
            step.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);

    // Refill empty clusters with the points currently farthest from their
    // centroid, one point per empty cluster; donor clusters keep >= 1 member.
    for (Index c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) continue;
        Index pick = -1;
        double best = -1.0;
        for (Index i = 0; i < n; ++i) {
            int owner = step.labels[static_cast<std::size_t>(i)];
            if (counts[static_cast<std::size_t>(owner)] <= 1) continue;
            if (a.dist2[static_cast<std::size_t>(i)] > best) {
                best = a.dist2[static_cast<std::size_t>(i)];
                pick = i;
            }
        }
        if (pick < 0) continue;  // no donor left; keep the stale centroid
        int owner = step.labels[static_cast<std::size_t>(pick)];
        sums.row(owner) -= points.row(pick);
        --counts[static_cast<std::size_t>(owner)];
        step.centroids.row(owner) = sums.row(owner) / static_cast<double>(counts[static_cast<std::size_t>(owner)]);
        step.labels[static_cast<std::size_t>(pick)] = static_cast<int>(c);
        counts[static_cast<std::size_t>(c)] = 1;
        step.centroids.row(c) = points.row(pick);
        a.dist2[static_cast<std::size_t>(pick)] = 0.0;
        ++step.reseeded;
    }
    return step;
}

KMeansResult kmeans(const Matrix& points, const KMeansSpec& spec) {
    const Index n = points.rows();
    if (n == 0) throw ShapeMismatch("clustering empty point set");
    if (spec.k < 1 || spec.k > n) throw InvalidSpec("cluster count must lie in [1, n]");
    if (spec.max_iters < 1) throw InvalidSpec("max_iters must be >= 1");
    if (spec.restarts < 1) throw InvalidSpec("restarts must be >= 1");
    if (spec.tol < 0.0) throw InvalidSpec("tol must be >= 0");

    KMeansResult best;
    bool have_best = false;
    for (int r = 0; r < spec.restarts; ++r) {
        std::uint64_t seed_r = rng::derive_seed(spec.seed, "kmeans_restart_" + std::to_string(r));
        Matrix centroids = kmeanspp_init(points, spec.k, seed_r);
        std::vector<double> history;
        int reseeds = 0;
        int iters = 0;
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < spec.max_iters; ++it) {
            LloydStep step = lloyd_step(points, centroids);
            history.push_back(step.inertia);
            reseeds += step.reseeded;
            centroids = step.centroids;
            iters = it + 1;
            if (std::isfinite(prev) && prev - step.inertia <= spec.tol * std::max(prev, 1e-300))
                break;
            prev = step.inertia;
        }
        Assignment final = assign(points, centroids);
        if (!have_best || final.inertia < best.inertia) {
            best.labels = std::move(final.labels);
            best.centroids = std::move(centroids);
            best.inertia = final.inertia;
            best.iterations_used = iters;
            best.restart_index = r;
            best.empty_cluster_reseeds = reseeds;
            best.inertia_history = std::move(history);
            have_best = true;
        }
    }
    return best;
}

}  // namespace kmfm
