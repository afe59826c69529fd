#pragma once

#include <cstdint>
#include <functional>

#include "appfkit/netmodel.hpp"

namespace appfkit {

/// Permuted LDL^T factors of a sparse symmetric matrix: with P the stored
/// permutation, A(perm[i], perm[j]) = (L*U)(i, j), L unit lower triangular,
/// U = D L^T upper triangular. Immutable after construction; febs() is
/// reentrant on shared factors.
struct LdlFactors {
    Eigen::VectorXi perm;  // factored row k corresponds to original row perm[k]
    SparseReal lower;      // L, unit diagonal stored explicitly
    SparseReal upper;      // U = D L^T, diagonal equals d
    Vector d;              // pivot diagonal
    int n = 0;
};

/// Factor a sparse symmetric matrix with an AMD fill-reducing ordering.
/// No numerical pivoting beyond the symmetric permutation; a pivot below
/// 1e-12 in magnitude raises SingularMatrixError with the pivot index.
LdlFactors ldl_factorize(const SparseReal& a);

/// Forward-elimination / back-substitution against precomputed factors:
/// returns x with (P L U P^T) x = b.
Vector febs(const LdlFactors& f, const Vector& b);

/// Power-iteration estimate of the dominant |eigenvalue| of a linear operator.
/// Converges from below for symmetric operators; used for advisory checks only.
double spectral_radius_estimate(const std::function<void(const Vector&, Vector&)>& apply,
                                int n, int iters, std::uint64_t seed);

/// Number of ldl_factorize calls since process start (test instrumentation).
long ldl_factorize_count();
void reset_ldl_factorize_count();

} // namespace appfkit
