#pragma once

#include <cstdint>

#include <Eigen/SparseCore>

#include "kmfm/common.hpp"
#include "kmfm/serialize.hpp"

namespace kmfm {

using SparseMatrix = Eigen::SparseMatrix<double>;
using DiagonalMatrix = Eigen::DiagonalMatrix<double, Eigen::Dynamic>;

/// Concatenated latent codes, one column per sample: w_i stacks the
/// categorical-net latent above the numerical-net latent.
struct LatentEmbedding {
    Matrix W;  // (dk1 + dk2) x n

    Index latent_dim() const { return W.rows(); }
    Index n() const { return W.cols(); }
};

struct KernelSpec {
    int degree = 2;
    double offset = 1.0;
    bool row_normalize = false;  // scale rows to unit L2 norm before the product
    int knn = 0;                 // > 0: sparse top-k affinity mode
};

/// Kernel matrix in either dense or kNN-sparsified form.
struct KernelMatrix {
    Matrix dense;
    SparseMatrix sparse;
    bool is_sparse = false;

    Index n() const { return is_sparse ? sparse.rows() : dense.rows(); }
    Vector row_sums() const;
};

struct LppSolution {
    Matrix V;            // (dk1 + dk2) x L projection
    Vector eigenvalues;  // ascending, length L
    Vector degrees;      // diagonal of the degree matrix
    double ridge = 0.0;
    KernelSpec kernel_spec;
};

LatentEmbedding concat_latents(const Matrix& y_num, const Matrix& y_cat);

/// Polynomial affinity s_ij = (x_i . x_j + offset)^degree on the encoded
/// data rows. Negative entries (possible for odd degree) are clamped to 0
/// so the graph Laplacian stays positive semidefinite; the clamp count is
/// reported through `clamped` when given, otherwise logged.
Matrix polynomial_kernel(const Matrix& X, const KernelSpec& spec, std::size_t* clamped = nullptr);

/// Sparse variant keeping the diagonal plus the top-k off-diagonal
/// affinities per row, symmetrized by max.
SparseMatrix polynomial_kernel_knn(const Matrix& X, const KernelSpec& spec, int k);

/// Convenience dispatch on spec.knn.
KernelMatrix build_kernel(const Matrix& X, const KernelSpec& spec);

DiagonalMatrix degree_matrix(const Matrix& S);
Vector degree_vector(const KernelMatrix& S);

/// Locality penalty P = sum_ij s_ij ||V'w_i - V'w_j||^2.
double locality_penalty(const Matrix& V, const Matrix& W, const KernelMatrix& S);
double locality_penalty(const Matrix& V, const Matrix& W, const Matrix& S);

/// Scale-relative default ridge for the W Lambda W' pencil.
double default_ridge(const Matrix& W, const Vector& degrees);

/// Solve W(Lambda-S)W' v = eta (W Lambda W' + ridge I) v for the L
/// eigenvectors of smallest eigenvalue, Lambda-orthonormalized
/// (V' W Lambda W' V = I) and sign-fixed so each vector's
/// largest-magnitude entry is positive.
LppSolution solve_lpp(const Matrix& W, const KernelMatrix& S, Index L, double ridge);
LppSolution solve_lpp(const Matrix& W, const Matrix& S, Index L, double ridge);

/// phi = V'w.
Vector project(const Matrix& V, const Vector& w);
/// Row i = V' w_i for W's column i; returns n x L.
Matrix project_all(const Matrix& V, const Matrix& W);

/// d(P)/d(w_i) columns: 4 V V' W (Lambda - S); feeds the locality term
/// back into network training when the joint objective is optimized.
Matrix locality_latent_gradient(const Matrix& V, const Matrix& W, const KernelMatrix& S);

void serialize_lpp(const LppSolution& s, io::BinaryWriter& w);
LppSolution deserialize_lpp(io::BinaryReader& r);

}  // namespace kmfm
