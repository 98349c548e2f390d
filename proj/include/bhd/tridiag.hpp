#ifndef BHD_TRIDIAG_HPP
#define BHD_TRIDIAG_HPP

#include <utility>
#include <vector>

#include "bhd/model.hpp"

namespace bhd {

/// All eigenvalues, ascending (LAPACK dsterf).
std::vector<double> tridiag_eigenvalues(const TridiagonalHamiltonian& h);

/// Eigenvalues with 0-based indices in [il, iu], ascending (bisection).
std::vector<double> tridiag_eigenvalues_range(const TridiagonalHamiltonian& h,
                                              int il, int iu);

struct TridiagEigenSystem {
    int n = 0;
    int first_index = 0;               // level index of values[0]
    std::vector<double> values;        // ascending
    std::vector<double> vectors;       // column-major, n x values.size()
    const double* vec(int j) const { return vectors.data() + static_cast<std::size_t>(j) * n; }
};

/// Full decomposition (MRRR).
TridiagEigenSystem tridiag_eigensystem(const TridiagonalHamiltonian& h);

/// Selected levels [il, iu] by bisection plus inverse iteration.
TridiagEigenSystem tridiag_eigensystem_range(const TridiagonalHamiltonian& h,
                                             int il, int iu);

/// Fast repeated evaluation of the separation E_{k+1}(Delta) - E_k(Delta)
/// for one adjacent level pair of the Bose-Hubbard Hamiltonian. Uses Sturm
/// bisection with brackets warm-started from the previous call, which makes
/// an evaluation two orders of magnitude cheaper than a full solve; this is
/// what the avoided-crossing refinement loops on.
class PairGapEvaluator {
public:
    PairGapEvaluator(const ModelParams& params, int lower_level);

    /// Separation at the given detuning. Eigenvalue brackets are resolved
    /// to max(rel_tol * separation, abs_tol, machine floor); pass zeros for
    /// full precision.
    double gap(double delta, double rel_tol = 1e-4, double abs_tol = 0.0);

    /// Both eigenvalues at full precision.
    std::pair<double, double> eigenpair(double delta);

    int lower_level() const { return k_; }

private:
    int n_;
    int k_;
    std::vector<double> eps_;      // Delta-independent diagonal part
    std::vector<double> slope_;    // d(diagonal)/d(Delta)
    std::vector<double> e2_;       // squared off-diagonal entries
    std::vector<double> diag_;     // scratch: diagonal at current Delta
    double gersh_lo_ = 0.0, gersh_hi_ = 0.0, gersh_rad_ = 0.0;
    bool has_history_ = false;
    double prev_delta_ = 0.0;
    double prev_lo_[2] = {0.0, 0.0};
    double prev_hi_[2] = {0.0, 0.0};

    void build_diagonal(double delta);
    int sturm_count(double x) const;
    void locate(int index, double& lo, double& hi) const;
    std::pair<double, double> solve(double delta, double rel_tol, double abs_tol);
};

} // namespace bhd

#endif
