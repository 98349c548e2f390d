#include "bhd/tridiag.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bhd {

namespace {

[[noreturn]] void lapack_fail(const char* routine, int info, int n) {
    throw std::runtime_error(std::string(routine) + " failed with info=" +
                             std::to_string(info) + " (n=" + std::to_string(n) + ")");
}

} // namespace

std::vector<double> tridiag_eigenvalues(const TridiagonalHamiltonian& h) {
    const int n = h.dim();
    std::vector<double> d = h.diagonal;
    std::vector<double> e = h.off_diagonal;
    if (n > 1) {
        int info = LAPACKE_dsterf(n, d.data(), e.data());
        if (info != 0) lapack_fail("dsterf", info, n);
    }
    return d;
}

std::vector<double> tridiag_eigenvalues_range(const TridiagonalHamiltonian& h,
                                              int il, int iu) {
    const int n = h.dim();
    if (il < 0 || iu >= n || il > iu)
        throw std::invalid_argument("tridiag_eigenvalues_range: bad index range");
    std::vector<double> d = h.diagonal;
    std::vector<double> e = h.off_diagonal;
    if (n == 1) return {d[0]};
    std::vector<double> w(n);
    std::vector<int> iblock(n), isplit(n);
    int m = 0, nsplit = 0;
    int info = LAPACKE_dstebz('I', 'E', n, 0.0, 0.0, il + 1, iu + 1, 0.0,
                              d.data(), e.data(), &m, &nsplit, w.data(),
                              iblock.data(), isplit.data());
    if (info != 0) lapack_fail("dstebz", info, n);
    w.resize(m);
    return w;
}

TridiagEigenSystem tridiag_eigensystem(const TridiagonalHamiltonian& h) {
    const int n = h.dim();
    TridiagEigenSystem out;
    out.n = n;
    out.first_index = 0;
    std::vector<double> d = h.diagonal;
    std::vector<double> e = h.off_diagonal;
    out.values.resize(n);
    out.vectors.resize(static_cast<std::size_t>(n) * n);
    if (n == 1) {
        out.values[0] = d[0];
        out.vectors[0] = 1.0;
        return out;
    }
    e.push_back(0.0);
    std::vector<int> isuppz(2 * n);
    int m = 0;
    int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'A', n, d.data(), e.data(),
                              0.0, 0.0, 0, 0, 0.0, &m, out.values.data(),
                              out.vectors.data(), n, isuppz.data());
    if (info != 0) lapack_fail("dstevr", info, n);
    return out;
}

TridiagEigenSystem tridiag_eigensystem_range(const TridiagonalHamiltonian& h,
                                             int il, int iu) {
    const int n = h.dim();
    if (il < 0 || iu >= n || il > iu)
        throw std::invalid_argument("tridiag_eigensystem_range: bad index range");
    TridiagEigenSystem out;
    out.n = n;
    out.first_index = il;
    if (n == 1) {
        out.values = {h.diagonal[0]};
        out.vectors = {1.0};
        return out;
    }
    std::vector<double> d = h.diagonal;
    std::vector<double> e = h.off_diagonal;
    const int m_want = iu - il + 1;
    std::vector<double> w(n);
    std::vector<int> iblock(n), isplit(n);
    int m = 0, nsplit = 0;
    int info = LAPACKE_dstebz('I', 'B', n, 0.0, 0.0, il + 1, iu + 1, 0.0,
                              d.data(), e.data(), &m, &nsplit, w.data(),
                              iblock.data(), isplit.data());
    if (info != 0) lapack_fail("dstebz", info, n);
    if (m != m_want) lapack_fail("dstebz(count)", m, n);
    out.values.assign(w.begin(), w.begin() + m);
    out.vectors.resize(static_cast<std::size_t>(n) * m);
    std::vector<int> ifail(m);
    info = LAPACKE_dstein(LAPACK_COL_MAJOR, n, d.data(), e.data(), m, w.data(),
                          iblock.data(), isplit.data(), out.vectors.data(), n,
                          ifail.data());
    if (info != 0) lapack_fail("dstein", info, n);
    // dstebz with order 'B' returns eigenvalues grouped by block; a single
    // Bose-Hubbard chain has one block, so they are already ascending.
    return out;
}

PairGapEvaluator::PairGapEvaluator(const ModelParams& params, int lower_level)
    : n_(params.dim()), k_(lower_level) {
    if (k_ < 0 || k_ + 1 >= n_)
        throw std::invalid_argument("PairGapEvaluator: level pair out of range");
    const int N = params.n_particles;
    const double U = params.interaction_per_particle();
    eps_.resize(n_);
    slope_.resize(n_);
    e2_.resize(n_ - 1);
    diag_.resize(n_);
    for (int i = 0; i <= N; ++i) {
        eps_[i] = U * (0.5 * N * N + static_cast<double>(i) * i -
                       static_cast<double>(N) * i);
        slope_[i] = 0.5 * (2.0 * i - N);
    }
    for (int i = 0; i < N; ++i) {
        const double v = 0.5 * params.omega * std::sqrt(static_cast<double>(i + 1) * (N - i));
        e2_[i] = v * v;
    }
}

void PairGapEvaluator::build_diagonal(double delta) {
    double lo = DBL_MAX, hi = -DBL_MAX;
    for (int i = 0; i < n_; ++i) {
        diag_[i] = eps_[i] + delta * slope_[i];
        double r = 0.0;
        if (i > 0) r += std::sqrt(e2_[i - 1]);
        if (i < n_ - 1) r += std::sqrt(e2_[i]);
        lo = std::min(lo, diag_[i] - r);
        hi = std::max(hi, diag_[i] + r);
    }
    gersh_lo_ = lo;
    gersh_hi_ = hi;
    gersh_rad_ = std::max(std::fabs(lo), std::fabs(hi));
}

int PairGapEvaluator::sturm_count(double x) const {
    // Count of eigenvalues below x via the LDL^T pivot signs. A vanishing
    // pivot is treated as negative, so eigenvalues hit exactly count as
    // "below"; the bisection only cares that the count is monotone in x.
    const double pivmin = DBL_MIN / DBL_EPSILON;
    int count = 0;
    double q = diag_[0] - x;
    for (int i = 1; i < n_; ++i) {
        if (std::fabs(q) < pivmin) q = -pivmin;
        if (q < 0.0) ++count;
        q = diag_[i] - x - e2_[i - 1] / q;
    }
    if (std::fabs(q) < pivmin) q = -pivmin;
    if (q < 0.0) ++count;
    return count;
}

void PairGapEvaluator::locate(int index, double& lo, double& hi) const {
    lo = gersh_lo_;
    hi = gersh_hi_;
    for (int it = 0; it < 64 && (hi - lo) > 1e-10 * (gersh_rad_ + 1.0); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sturm_count(mid) <= index)
            lo = mid;
        else
            hi = mid;
    }
}

std::pair<double, double> PairGapEvaluator::solve(double delta, double rel_tol,
                                                  double abs_tol) {
    build_diagonal(delta);
    double lo[2], hi[2];
    bool ok = false;
    if (has_history_) {
        // Warm start: predict each eigenvalue bracket from the previous call
        // and verify with Sturm counts, widening geometrically on failure.
        const double move = std::fabs(delta - prev_delta_) * (0.5 * n_) + 1e-14 * gersh_rad_;
        for (int j = 0; j < 2; ++j) {
            const double c = 0.5 * (prev_lo_[j] + prev_hi_[j]);
            double w = 0.5 * (prev_hi_[j] - prev_lo_[j]) + 0.25 * move;
            lo[j] = c - w;
            hi[j] = c + w;
        }
        for (int attempt = 0; attempt < 8; ++attempt) {
            bool fits = sturm_count(lo[0]) <= k_ && sturm_count(hi[0]) >= k_ + 1 &&
                        sturm_count(lo[1]) <= k_ + 1 && sturm_count(hi[1]) >= k_ + 2;
            if (fits) {
                ok = true;
                break;
            }
            for (int j = 0; j < 2; ++j) {
                const double c = 0.5 * (lo[j] + hi[j]);
                const double w = 4.0 * (hi[j] - lo[j]) + 1e-12 * gersh_rad_;
                lo[j] = c - w;
                hi[j] = c + w;
            }
        }
    }
    if (!ok) {
        locate(k_, lo[0], hi[0]);
        locate(k_ + 1, lo[1], hi[1]);
    }
    const double abs_floor = 4.0 * DBL_EPSILON * gersh_rad_;
    for (int it = 0; it < 160; ++it) {
        const double w0 = hi[0] - lo[0];
        const double w1 = hi[1] - lo[1];
        const double sep = std::max(0.5 * (lo[1] + hi[1]) - 0.5 * (lo[0] + hi[0]), 0.0);
        const double tol = std::max({rel_tol * sep, abs_tol, abs_floor});
        if (w0 <= tol && w1 <= tol) break;
        if (w0 > tol) {
            const double mid = 0.5 * (lo[0] + hi[0]);
            if (sturm_count(mid) <= k_)
                lo[0] = mid;
            else
                hi[0] = mid;
        }
        if (w1 > tol) {
            const double mid = 0.5 * (lo[1] + hi[1]);
            if (sturm_count(mid) <= k_ + 1)
                lo[1] = mid;
            else
                hi[1] = mid;
        }
    }
    has_history_ = true;
    prev_delta_ = delta;
    for (int j = 0; j < 2; ++j) {
        prev_lo_[j] = lo[j];
        prev_hi_[j] = hi[j];
    }
    return {0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])};
}

double PairGapEvaluator::gap(double delta, double rel_tol, double abs_tol) {
    auto [a, b] = solve(delta, rel_tol, abs_tol);
    return std::max(b - a, 0.0);
}

std::pair<double, double> PairGapEvaluator::eigenpair(double delta) {
    return solve(delta, 0.0, 0.0);
}

} // namespace bhd
