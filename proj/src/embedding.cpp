#include "kmfm/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace kmfm {
namespace {

double int_pow(double base, int degree) {
    double out = 1.0;
    for (int i = 0; i < degree; ++i) out *= base;
    return out;
}

Matrix normalized_rows(const Matrix& X) {
    Matrix out = X;
    for (Index i = 0; i < out.rows(); ++i) {
        double norm = out.row(i).norm();
        if (norm > 0.0) out.row(i) /= norm;
    }
    return out;
}

void check_kernel_spec(const KernelSpec& spec) {
    if (spec.degree < 1) throw InvalidSpec("kernel degree must be >= 1");
}

}  // namespace

Vector KernelMatrix::row_sums() const {
    if (is_sparse) return sparse * Vector::Ones(sparse.cols());
    return dense.rowwise().sum();
}

LatentEmbedding concat_latents(const Matrix& y_num, const Matrix& y_cat) {
    if (y_num.rows() != y_cat.rows())
        throw ShapeMismatch("latent blocks disagree on sample count");
    if (y_num.rows() == 0) throw ShapeMismatch("empty latent blocks");
    LatentEmbedding emb;
    emb.W.resize(y_cat.cols() + y_num.cols(), y_num.rows());
    emb.W.topRows(y_cat.cols()) = y_cat.transpose();
    emb.W.bottomRows(y_num.cols()) = y_num.transpose();
    return emb;
}

Matrix polynomial_kernel(const Matrix& X, const KernelSpec& spec, std::size_t* clamped) {
    check_kernel_spec(spec);
    if (X.rows() == 0) throw ShapeMismatch("kernel on empty data");
    Matrix base = spec.row_normalize ? normalized_rows(X) : X;
    Matrix G = base * base.transpose();
    G = 0.5 * (G + G.transpose()).eval();
    std::size_t negatives = 0;
    Matrix S(G.rows(), G.cols());
    for (Index j = 0; j < G.cols(); ++j) {
        for (Index i = 0; i < G.rows(); ++i) {
            double v = int_pow(G(i, j) + spec.offset, spec.degree);
            if (v < 0.0) {
                v = 0.0;
                ++negatives;
            }
            S(i, j) = v;
        }
    }
    if (clamped) {
        *clamped = negatives;
    } else if (negatives > 0) {
        std::fprintf(stderr, "[kernel] clamped %zu negative affinities to 0\n", negatives);
    }
    return S;
}

SparseMatrix polynomial_kernel_knn(const Matrix& X, const KernelSpec& spec, int k) {
    check_kernel_spec(spec);
    const Index n = X.rows();
    if (n == 0) throw ShapeMismatch("kernel on empty data");
    if (k < 1) throw InvalidSpec("knn kernel needs k >= 1");
    const Index keep = std::min<Index>(k, n - 1);
    Matrix base = spec.row_normalize ? normalized_rows(X) : X;

    struct Entry {
        double value;
        Index index;
    };
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n) * (2 * keep + 1));
    std::vector<Entry> row(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Vector affinity = base * base.row(i).transpose();
        std::size_t m = 0;
        for (Index j = 0; j < n; ++j) {
            double v = int_pow(affinity(j) + spec.offset, spec.degree);
            if (v < 0.0) v = 0.0;
            if (j == i) {
                triplets.emplace_back(i, i, v);
            } else {
                row[m++] = Entry{v, j};
            }
        }
        auto better = [](const Entry& a, const Entry& b) {
            if (a.value != b.value) return a.value > b.value;
            return a.index < b.index;
        };
        std::partial_sort(row.begin(), row.begin() + keep, row.begin() + m, better);
        for (Index t = 0; t < keep; ++t) {
            const Entry& e = row[static_cast<std::size_t>(t)];
            if (e.value == 0.0) continue;
            triplets.emplace_back(i, e.index, e.value);
            triplets.emplace_back(e.index, i, e.value);
        }
    }
    SparseMatrix S(n, n);
    S.setFromTriplets(triplets.begin(), triplets.end(),
                      [](double a, double b) { return std::max(a, b); });
    S.makeCompressed();
    return S;
}

KernelMatrix build_kernel(const Matrix& X, const KernelSpec& spec) {
    KernelMatrix out;
    if (spec.knn > 0) {
        out.sparse = polynomial_kernel_knn(X, spec, spec.knn);
        out.is_sparse = true;
    } else {
        out.dense = polynomial_kernel(X, spec);
    }
    return out;
}

DiagonalMatrix degree_matrix(const Matrix& S) {
    if (S.rows() != S.cols()) throw ShapeMismatch("degree matrix of non-square input");
    const double tol = 1e-12 * std::max(1.0, S.cwiseAbs().maxCoeff());
    for (Index j = 0; j < S.cols(); ++j)
        for (Index i = 0; i < j; ++i)
            if (std::abs(S(i, j) - S(j, i)) > tol)
                throw AsymmetricInput("affinity matrix is not symmetric");
    return Vector(S.rowwise().sum()).asDiagonal();
}

Vector degree_vector(const KernelMatrix& S) { return S.row_sums(); }

double locality_penalty(const Matrix& V, const Matrix& W, const KernelMatrix& S) {
    if (V.rows() != W.rows()) throw ShapeMismatch("projection vs latent dim");
    if (W.cols() != S.n()) throw ShapeMismatch("latent count vs kernel size");
    Matrix U = V.transpose() * W;  // L x n
    Vector degrees = S.row_sums();
    double weighted = U.colwise().squaredNorm().transpose().dot(degrees);
    double cross = 0.0;
    if (S.is_sparse) {
        for (int outer = 0; outer < S.sparse.outerSize(); ++outer)
            for (SparseMatrix::InnerIterator it(S.sparse, outer); it; ++it)
                cross += it.value() * U.col(it.row()).dot(U.col(it.col()));
    } else {
        cross = (U * S.dense).cwiseProduct(U).sum();
    }
    return 2.0 * (weighted - cross);
}

double locality_penalty(const Matrix& V, const Matrix& W, const Matrix& S) {
    KernelMatrix k;
    k.dense = S;
    return locality_penalty(V, W, k);
}

double default_ridge(const Matrix& W, const Vector& degrees) {
    double trace = W.colwise().squaredNorm().transpose().dot(degrees);
    if (!(trace > 0.0)) return 1e-8;
    return 1e-8 * trace / static_cast<double>(W.rows());
}

LppSolution solve_lpp(const Matrix& W, const KernelMatrix& S, Index L, double ridge) {
    const Index d = W.rows();
    const Index n = W.cols();
    if (n != S.n()) throw ShapeMismatch("latent count vs kernel size");
    if (L < 1 || L > d) throw BadL("projection dim must lie in [1, latent dim]");
    if (ridge < 0.0) throw InvalidSpec("ridge must be >= 0");

    Vector degrees = S.row_sums();
    Matrix WD = W * degrees.asDiagonal();
    Matrix B0 = WD * W.transpose();
    B0 = 0.5 * (B0 + B0.transpose()).eval();
    Matrix WS = S.is_sparse ? Matrix(W * S.sparse) : Matrix(W * S.dense);
    Matrix A = B0 - WS * W.transpose();
    A = 0.5 * (A + A.transpose()).eval();
    Matrix B = B0 + ridge * Matrix::Identity(d, d);

    Eigen::LLT<Matrix> llt(B);
    if (llt.info() != Eigen::Success)
        throw RankDeficient("constraint matrix W Lambda W' is singular; raise ridge");
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(A, B);
    if (es.info() != Eigen::Success)
        throw RankDeficient("generalized eigensolver did not converge");

    LppSolution sol;
    sol.V = es.eigenvectors().leftCols(L);
    sol.eigenvalues = es.eigenvalues().head(L);
    sol.degrees = degrees;
    sol.ridge = ridge;
    for (Index j = 0; j < L; ++j) {
        Vector v = sol.V.col(j);
        double q = v.dot(B0 * v);  // = 1 - ridge ||v||^2 under solver scaling
        if (q > 1e-8) sol.V.col(j) = v / std::sqrt(q);
        Index top = 0;
        double best = -1.0;
        for (Index i = 0; i < d; ++i) {
            double mag = std::abs(sol.V(i, j));
            if (mag > best) {
                best = mag;
                top = i;
            }
        }
        if (sol.V(top, j) < 0.0) sol.V.col(j) = -sol.V.col(j);
    }
    return sol;
}

LppSolution solve_lpp(const Matrix& W, const Matrix& S, Index L, double ridge) {
    KernelMatrix k;
    k.dense = S;
    return solve_lpp(W, k, L, ridge);
}

Vector project(const Matrix& V, const Vector& w) {
    if (V.rows() != w.size()) throw ShapeMismatch("projection vs latent dim");
    return V.transpose() * w;
}

Matrix project_all(const Matrix& V, const Matrix& W) {
    if (V.rows() != W.rows()) throw ShapeMismatch("projection vs latent dim");
    return (V.transpose() * W).transpose();
}

Matrix locality_latent_gradient(const Matrix& V, const Matrix& W, const KernelMatrix& S) {
    if (V.rows() != W.rows()) throw ShapeMismatch("projection vs latent dim");
    if (W.cols() != S.n()) throw ShapeMismatch("latent count vs kernel size");
    Vector degrees = S.row_sums();
    Matrix M = W * degrees.asDiagonal();
    M -= S.is_sparse ? Matrix(W * S.sparse) : Matrix(W * S.dense);
    return 4.0 * (V * (V.transpose() * M));
}

void serialize_lpp(const LppSolution& s, io::BinaryWriter& w) {
    w.matrix(s.V);
    w.vector(s.eigenvalues);
    w.vector(s.degrees);
    w.f64(s.ridge);
    w.u32(static_cast<std::uint32_t>(s.kernel_spec.degree));
    w.f64(s.kernel_spec.offset);
    w.u32(s.kernel_spec.row_normalize ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(s.kernel_spec.knn));
}

LppSolution deserialize_lpp(io::BinaryReader& r) {
    LppSolution s;
    s.V = r.matrix();
    s.eigenvalues = r.vector();
    s.degrees = r.vector();
    s.ridge = r.f64();
    s.kernel_spec.degree = static_cast<int>(r.u32());
    s.kernel_spec.offset = r.f64();
    s.kernel_spec.row_normalize = r.u32() != 0;
    s.kernel_spec.knn = static_cast<int>(r.u32());
    return s;
}

}  // namespace kmfm
