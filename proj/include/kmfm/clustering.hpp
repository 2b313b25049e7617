#pragma once

#include <cstdint>
#include <vector>

#include "kmfm/common.hpp"

namespace kmfm {

struct KMeansSpec {
    int k = 2;
    int max_iters = 300;
    double tol = 1e-6;  // relative inertia change between iterations
    int restarts = 10;
    std::uint64_t seed = 0;
};

struct LloydStep {
    std::vector<int> labels;
    Matrix centroids;  // updated means
    double inertia;    // sum of squared distances to the centroids passed in
    int reseeded = 0;  // empty clusters refilled this step
};

struct KMeansResult {
    std::vector<int> labels;
    Matrix centroids;  // k x L
    double inertia = 0.0;
    int iterations_used = 0;
    int restart_index = 0;
    int empty_cluster_reseeds = 0;
    std::vector<double> inertia_history;  // winning restart, one entry per iteration
};

/// D^2-weighted (k-means++) centroid seeding.
Matrix kmeanspp_init(const Matrix& points, int k, std::uint64_t seed);

/// One Lloyd iteration against the given centroids: nearest-centroid
/// assignment (ties -> lowest centroid index), mean update, and empty
/// clusters reseeded to the points currently farthest from their centroid.
LloydStep lloyd_step(const Matrix& points, const Matrix& centroids);

/// Full restarted Lloyd's algorithm; returns the lowest-inertia run
/// (ties -> lowest restart index).
KMeansResult kmeans(const Matrix& points, const KMeansSpec& spec);

}  // namespace kmfm
