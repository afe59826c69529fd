#include "appfkit/sparla.hpp"

#include <atomic>
#include <cmath>
#include <random>

#include <Eigen/OrderingMethods>

namespace appfkit {

namespace {

std::atomic<long> g_factorize_count{0};

constexpr double kPivotFloor = 1e-12;

void check_symmetry(const SparseReal& a) {
    SparseReal diff = a - SparseReal(a.transpose());
    double max_entry = 0.0, max_diff = 0.0;
    for (int c = 0; c < a.outerSize(); ++c)
        for (SparseReal::InnerIterator it(a, c); it; ++it)
            max_entry = std::max(max_entry, std::abs(it.value()));
    for (int c = 0; c < diff.outerSize(); ++c)
        for (SparseReal::InnerIterator it(diff, c); it; ++it)
            max_diff = std::max(max_diff, std::abs(it.value()));
    if (max_entry > 0.0 && max_diff > 1e-8 * max_entry)
        throw ValidationError("matrix is not symmetric within 1e-8 relative tolerance");
}

} // namespace

long ldl_factorize_count() { return g_factorize_count.load(); }
void reset_ldl_factorize_count() { g_factorize_count.store(0); }

// Up-looking sparse LDL^T: the pattern of each L row is found by walking the
// elimination tree, then a sparse triangular solve fills the numeric values.
LdlFactors ldl_factorize(const SparseReal& a) {
    g_factorize_count.fetch_add(1);

    const int n = static_cast<int>(a.rows());
    if (a.rows() != a.cols()) throw ValidationError("ldl_factorize needs a square matrix");
    check_symmetry(a);

    // fill-reducing ordering on the symmetric pattern
    Eigen::VectorXi perm(n);
    {
        Eigen::AMDOrdering<int> amd;
        Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pm;
        SparseReal ac = a;
        ac.makeCompressed();
        amd(ac.selfadjointView<Eigen::Lower>(), pm);
        // factored row k corresponds to original row perm[k]
        for (int k = 0; k < n; ++k) perm(pm.indices()(k)) = k;
    }
    Eigen::VectorXi pinv(n);
    for (int k = 0; k < n; ++k) pinv(perm(k)) = k;

    // upper triangle of the permuted matrix, CSC with sorted rows
    SparseReal bupper;
    {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(a.nonZeros() / 2 + n);
        for (int c = 0; c < a.outerSize(); ++c)
            for (SparseReal::InnerIterator it(a, c); it; ++it) {
                const int pi = pinv(static_cast<int>(it.row()));
                const int pj = pinv(static_cast<int>(it.col()));
                if (pi <= pj) trips.emplace_back(pi, pj, it.value());
            }
        bupper.resize(n, n);
        bupper.setFromTriplets(trips.begin(), trips.end());
        bupper.makeCompressed();
    }
    const int* Bp = bupper.outerIndexPtr();
    const int* Bi = bupper.innerIndexPtr();
    const double* Bx = bupper.valuePtr();

    // symbolic: elimination tree and per-column counts of L
    std::vector<int> parent(n, -1), flag(n, -1), lnz(n, 0);
    for (int k = 0; k < n; ++k) {
        flag[k] = k;
        for (int p = Bp[k]; p < Bp[k + 1]; ++p) {
            int i = Bi[p];
            if (i >= k) continue;
            for (; flag[i] != k; i = parent[i]) {
                if (parent[i] == -1) parent[i] = k;
                ++lnz[i];
                flag[i] = k;
            }
        }
    }

    std::vector<int> Lp(n + 1, 0);
    for (int k = 0; k < n; ++k) Lp[k + 1] = Lp[k] + lnz[k];
    const int lnnz = Lp[n];
    std::vector<int> Li(lnnz);
    std::vector<double> Lx(lnnz);
    Vector d(n);

    // numeric phase
    std::vector<int> pattern(n), next(n, 0);
    std::vector<double> y(n, 0.0);
    std::fill(flag.begin(), flag.end(), -1);
    std::fill(lnz.begin(), lnz.end(), 0);

    for (int k = 0; k < n; ++k) {
        int top = n;
        flag[k] = k;
        double dk = 0.0;
        for (int p = Bp[k]; p < Bp[k + 1]; ++p) {
            const int row = Bi[p];
            if (row == k) {
                dk += Bx[p];
                continue;
            }
            y[row] += Bx[p];
            int len = 0;
            for (int i = row; flag[i] != k; i = parent[i]) {
                pattern[len++] = i;
                flag[i] = k;
            }
            while (len > 0) pattern[--top] = pattern[--len];
        }
        d(k) = dk;
        for (int s = top; s < n; ++s) {
            const int i = pattern[s];
            const double yi = y[i];
            y[i] = 0.0;
            const int p2 = Lp[i] + lnz[i];
            for (int p = Lp[i]; p < p2; ++p) y[Li[p]] -= Lx[p] * yi;
            const double lki = yi / d(i);
            d(k) -= lki * yi;
            Li[p2] = k;
            Lx[p2] = lki;
            ++lnz[i];
        }
        if (std::abs(d(k)) < kPivotFloor)
            throw SingularMatrixError("zero pivot at factored position " + std::to_string(k),
                                      k);
    }

    LdlFactors f;
    f.n = n;
    f.perm = perm;
    f.d = d;

    // L columns from (Lp, Li, Lx) plus the unit diagonal
    {
        std::vector<Eigen::Triplet<double>> lt;
        lt.reserve(lnnz + n);
        for (int j = 0; j < n; ++j) {
            lt.emplace_back(j, j, 1.0);
            for (int p = Lp[j]; p < Lp[j + 1]; ++p) lt.emplace_back(Li[p], j, Lx[p]);
        }
        f.lower.resize(n, n);
        f.lower.setFromTriplets(lt.begin(), lt.end());
        f.lower.makeCompressed();
    }
    {
        SparseReal lt(f.lower.transpose());
        f.upper = SparseReal(d.asDiagonal() * lt);
        f.upper.makeCompressed();
    }
    return f;
}

Vector febs(const LdlFactors& f, const Vector& b) {
    if (b.size() != f.n) throw ValidationError("febs right-hand side length mismatch");
    const int n = f.n;

    Vector z(n);
    for (int i = 0; i < n; ++i) z(i) = b(f.perm(i));

    // forward elimination, column-oriented over unit-lower L
    const int* Lp = f.lower.outerIndexPtr();
    const int* Li = f.lower.innerIndexPtr();
    const double* Lx = f.lower.valuePtr();
    for (int j = 0; j < n; ++j) {
        const double zj = z(j);
        for (int p = Lp[j]; p < Lp[j + 1]; ++p) {
            const int i = Li[p];
            if (i > j) z(i) -= Lx[p] * zj;
        }
    }

    // back substitution against U = D L^T
    const int* Up = f.upper.outerIndexPtr();
    const int* Ui = f.upper.innerIndexPtr();
    const double* Ux = f.upper.valuePtr();
    Vector yv(n);
    for (int j = n - 1; j >= 0; --j) {
        yv(j) = z(j) / f.d(j);
        for (int p = Up[j]; p < Up[j + 1]; ++p) {
            const int i = Ui[p];
            if (i < j) z(i) -= Ux[p] * yv(j);
        }
    }

    Vector x(n);
    for (int i = 0; i < n; ++i) x(f.perm(i)) = yv(i);
    return x;
}

double spectral_radius_estimate(const std::function<void(const Vector&, Vector&)>& apply,
                                int n, int iters, std::uint64_t seed) {
    if (iters < 1) throw ValidationError("spectral_radius_estimate needs iters >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    Vector v(n), w(n);
    auto reseed = [&] {
        for (int i = 0; i < n; ++i) v(i) = uni(rng);
        const double nv = v.norm();
        if (nv > 0.0) v /= nv;
    };
    reseed();

    double rho = 0.0;
    int restarts = 0;
    for (int it = 0; it < iters; ++it) {
        apply(v, w);
        const double nw = w.norm();
        if (!(nw > 1e-300)) {
            if (++restarts > 8) return 0.0;  // operator annihilates everything we try
            reseed();
            continue;
        }
        rho = nw;
        v = w / nw;
    }
    return rho;
}

} // namespace appfkit
