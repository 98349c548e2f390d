#include "bhd/propagator.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bhd/tridiag.hpp"
#include "bhd/util.hpp"

namespace bhd {

namespace {

using cplx = std::complex<double>;

double vec_norm(const std::vector<cplx>& v) {
    double s = 0.0;
    for (const cplx& z : v) s += std::norm(z);
    return std::sqrt(s);
}

// Krylov (Lanczos) approximation of exp(-i dt H) psi for the real symmetric
// tridiagonal H. The Lanczos recurrence is run without reorthogonalization;
// the basis stays adequate for the short recurrences used here, and every
// accepted exponential is checked for norm preservation by the caller.
class LanczosPropagator {
public:
    LanczosPropagator(int n, int max_m) : n_(n), max_m_(std::min(max_m, n)) {
        basis_re_.resize(static_cast<std::size_t>(max_m_ + 1) * n_);
        basis_im_.resize(static_cast<std::size_t>(max_m_ + 1) * n_);
        wr_.resize(n_);
        wi_.resize(n_);
        alpha_.resize(max_m_ + 1);
        beta_.resize(max_m_ + 1);
        small_.resize(static_cast<std::size_t>(max_m_ + 1) * (max_m_ + 1));
        eig_.resize(max_m_ + 1);
        diag_work_.resize(max_m_ + 1);
        off_work_.resize(max_m_ + 1);
        y_.resize(max_m_ + 1);
    }

    long matvecs() const { return matvecs_; }

    // Applies exp(-i dt H) for the (already shifted) tridiagonal given by
    // `diag`/`off`, within tolerance `tol` (2-norm error estimate). Returns
    // false when the Krylov budget is exhausted; psi is untouched then.
    bool apply(const double* diag, const double* off, double dt,
               std::vector<cplx>& psi, double tol) {
        const double nrm = vec_norm(psi);
        if (nrm == 0.0) return true;
        double* v0r = basis_re(0);
        double* v0i = basis_im(0);
        const double inv = 1.0 / nrm;
        for (int i = 0; i < n_; ++i) {
            v0r[i] = std::real(psi[i]) * inv;
            v0i[i] = std::imag(psi[i]) * inv;
        }

        const int n = n_;
        int m = 0;
        bool converged = false;
        while (m < max_m_) {
            const double* vr = basis_re(m);
            const double* vi = basis_im(m);
            const double* pr = m > 0 ? basis_re(m - 1) : nullptr;
            const double* pi = m > 0 ? basis_im(m - 1) : nullptr;
            const double bprev = m > 0 ? beta_[m - 1] : 0.0;
            double* wr = wr_.data();
            double* wi = wi_.data();
            // fused w = (H - b_prev P) v and alpha accumulation, planar
            double a = 0.0;
            for (int i = 0; i < n; ++i) {
                double tr = diag[i] * vr[i];
                double ti = diag[i] * vi[i];
                if (i > 0) {
                    tr += off[i - 1] * vr[i - 1];
                    ti += off[i - 1] * vi[i - 1];
                }
                if (i + 1 < n) {
                    tr += off[i] * vr[i + 1];
                    ti += off[i] * vi[i + 1];
                }
                if (pr) {
                    tr -= bprev * pr[i];
                    ti -= bprev * pi[i];
                }
                wr[i] = tr;
                wi[i] = ti;
                a += vr[i] * tr + vi[i] * ti;
            }
            ++matvecs_;
            alpha_[m] = a;
            double b2 = 0.0;
            for (int i = 0; i < n; ++i) {
                const double tr = wr[i] - a * vr[i];
                const double ti = wi[i] - a * vi[i];
                wr[i] = tr;
                wi[i] = ti;
                b2 += tr * tr + ti * ti;
            }
            const double b = std::sqrt(b2);
            beta_[m] = b;
            ++m;
            const bool breakdown = b < 1e-14 * (std::fabs(a) + 1.0) || m >= n_;
            // Check convergence a little below the size that worked last
            // time, then every few vectors.
            const int base = std::max(4, m_hint_ - 3);
            const bool checkpoint = breakdown || m == max_m_ ||
                                    (m >= base && (m - base) % 4 == 0);
            if (checkpoint) {
                const double err = small_exp(m, dt);
                if (breakdown || err <= tol) {
                    converged = true;
                    m_hint_ = (err < 0.01 * tol && m_hint_ > 6) ? m - 2 : m;
                    break;
                }
                if (m == max_m_ || m >= n_) break;
            }
            double* nr = basis_re(m);
            double* ni = basis_im(m);
            const double binv = 1.0 / b;
            for (int i = 0; i < n; ++i) {
                nr[i] = wr[i] * binv;
                ni[i] = wi[i] * binv;
            }
        }
        if (!converged) return false;

        // psi = nrm * V y  (the caller folds the diagonal shift phase in)
        for (int i = 0; i < n_; ++i) psi[i] = cplx(0.0, 0.0);
        const int mm = small_m_;
        for (int j = 0; j < mm; ++j) {
            const double cr = nrm * std::real(y_[j]);
            const double ci = nrm * std::imag(y_[j]);
            const double* vjr = basis_re(j);
            const double* vji = basis_im(j);
            for (int i = 0; i < n_; ++i)
                psi[i] += cplx(cr * vjr[i] - ci * vji[i], cr * vji[i] + ci * vjr[i]);
        }
        return true;
    }

private:
    int n_;
    int max_m_;
    long matvecs_ = 0;
    int small_m_ = 0;
    int m_hint_ = 0;
    std::vector<double> basis_re_, basis_im_;
    std::vector<double> wr_, wi_;
    std::vector<double> alpha_, beta_;
    std::vector<double> small_, eig_, diag_work_, off_work_;
    std::vector<cplx> y_;

    double* basis_re(int j) { return basis_re_.data() + static_cast<std::size_t>(j) * n_; }
    double* basis_im(int j) { return basis_im_.data() + static_cast<std::size_t>(j) * n_; }

    // Solves the m x m reduced problem, fills y_ = exp(-i dt T_m) e1 and
    // returns the standard Lanczos error estimate beta_m |dt| |y_m|.
    double small_exp(int m, double dt) {
        small_m_ = m;
        std::copy(alpha_.begin(), alpha_.begin() + m, diag_work_.begin());
        std::copy(beta_.begin(), beta_.begin() + m, off_work_.begin());
        int info = LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', m, diag_work_.data(),
                                 off_work_.data(), small_.data(), m);
        if (info != 0)
            throw std::runtime_error("dstev failed in Lanczos exponential");
        for (int j = 0; j < m; ++j) eig_[j] = diag_work_[j];
        for (int j = 0; j < m; ++j) y_[j] = cplx(0.0, 0.0);
        for (int q = 0; q < m; ++q) {
            const double z0 = small_[static_cast<std::size_t>(q) * m];
            const cplx f = std::exp(cplx(0.0, -dt * eig_[q])) * z0;
            const double* zq = small_.data() + static_cast<std::size_t>(q) * m;
            for (int j = 0; j < m; ++j) y_[j] += f * zq[j];
        }
        return std::abs(y_[m - 1]) * std::fabs(beta_[m - 1] * dt);
    }
};

// Fourth-order commutator-free Magnus coefficients (two Gauss nodes).
constexpr double kSqrt3 = 1.7320508075688772935;
constexpr double kNode1 = 0.5 - kSqrt3 / 6.0;
constexpr double kNode2 = 0.5 + kSqrt3 / 6.0;
constexpr double kX1 = (3.0 - 2.0 * kSqrt3) / 12.0;
constexpr double kX2 = (3.0 + 2.0 * kSqrt3) / 12.0;

struct LegSpec {
    double t0 = 0.0;
    double duration = 0.0;
    double delta0 = 0.0;
    double rate = 0.0; // d delta / dt
    double delta_at(double t) const { return delta0 + rate * (t - t0); }
};

class SweepIntegrator {
public:
    SweepIntegrator(const ModelParams& params, const PropagationOptions& opts)
        : params_(params), opts_(opts),
          lanczos_(params.dim(), std::min(opts.max_krylov, params.dim())) {
        // Delta-independent pieces of the Hamiltonian. The diagonal mean is
        // removed once and restored as a pure phase at leg boundaries (the
        // detuning term has zero mean, so the shift is constant in time).
        const auto h0 = build_hamiltonian(params, 0.0);
        const int n = params.dim();
        const int N = params.n_particles;
        shift_ = 0.0;
        for (double d : h0.diagonal) shift_ += d;
        shift_ /= n;
        eps_shifted_.resize(n);
        slope_.resize(n);
        for (int i = 0; i < n; ++i) {
            eps_shifted_[i] = h0.diagonal[i] - shift_;
            slope_[i] = 0.5 * (2.0 * i - N);
        }
        off_ = h0.off_diagonal;
        diag_buf_.resize(n);
    }

    long matvecs() const { return lanczos_.matvecs(); }
    double shift() const { return shift_; }

    // One CFM4 step over [t, t+h]; psi is replaced only on success. The
    // constant diagonal shift is left out (pure phase).
    bool cf4_step(const LegSpec& leg, double t, double h, std::vector<cplx>& psi,
                  double tol) {
        const double d1 = leg.delta_at(t + kNode1 * h);
        const double d2 = leg.delta_at(t + kNode2 * h);
        const double da = 2.0 * (kX2 * d1 + kX1 * d2); // applied first
        const double db = 2.0 * (kX1 * d1 + kX2 * d2);
        const int n = params_.dim();
        scratch_ = psi;
        for (int i = 0; i < n; ++i) diag_buf_[i] = eps_shifted_[i] + da * slope_[i];
        if (!lanczos_.apply(diag_buf_.data(), off_.data(), 0.5 * h, scratch_, tol))
            return false;
        for (int i = 0; i < n; ++i) diag_buf_[i] = eps_shifted_[i] + db * slope_[i];
        if (!lanczos_.apply(diag_buf_.data(), off_.data(), 0.5 * h, scratch_, tol))
            return false;
        psi.swap(scratch_);
        return true;
    }

    // Integrates one leg, landing exactly on each time in `stops`
    // (ascending, inside the leg); on_stop is called there.
    template <typename OnStop>
    void run_leg(const LegSpec& leg, std::vector<cplx>& psi,
                 const std::vector<double>& stops, OnStop&& on_stop,
                 PropagationResult& res) {
        double t = leg.t0;
        const double t_end = leg.t0 + leg.duration;
        const double t_eps = 1e-12 * std::max(leg.duration, 1.0);
        double h = std::min(opts_.max_step, leg.duration / 16.0);
        std::size_t next_stop = 0;
        long accepted = 0;
        long next_check = 1;
        long check_gap = 1;
        std::vector<cplx> saved;
        while (t < t_end - t_eps) {
            while (next_stop < stops.size() && stops[next_stop] <= t + t_eps) {
                on_stop(stops[next_stop], psi);
                ++next_stop;
            }
            double h_try = std::min(h, t_end - t);
            if (next_stop < stops.size())
                h_try = std::min(h_try, stops[next_stop] - t);
            if (h_try < t_eps) {
                t += h_try;
                continue;
            }

            double tol_step = opts_.tolerance * h_try;
            const bool check_now = (accepted + 1 >= next_check);
            bool ok = cf4_step(leg, t, h_try, psi, 0.25 * tol_step);
            while (!ok) {
                h_try *= 0.5;
                h = h_try;
                if (h_try < 100.0 * t_eps)
                    throw std::runtime_error(
                        "propagate: step size underflow at t=" + format_double(t) +
                        " (tolerance unattainable within the step budget)");
                tol_step = opts_.tolerance * h_try;
                ok = cf4_step(leg, t, h_try, psi, 0.25 * tol_step);
            }
            if (check_now) {
                // Richardson check of the time-discretization error: the
                // accepted step against two half steps from the same state.
                // cf4_step left the pre-step state in scratch storage; the
                // half steps below overwrite it, so keep a copy.
                saved = scratch_;
                std::vector<cplx> two_half = saved;
                cf4_step(leg, t, 0.5 * h_try, two_half, 0.125 * tol_step);
                cf4_step(leg, t + 0.5 * h_try, 0.5 * h_try, two_half,
                         0.125 * tol_step);
                double diff = 0.0;
                for (int i = 0; i < params_.dim(); ++i)
                    diff += std::norm(psi[i] - two_half[i]);
                diff = std::sqrt(diff);
                if (diff > 2.0 * tol_step && h_try > 200.0 * t_eps) {
                    // Redo from the saved state with a halved step.
                    psi = saved;
                    h = 0.5 * h_try;
                    next_check = accepted + 1;
                    check_gap = 1;
                    continue;
                }
                const double err = std::max(diff, 1e-300);
                const double grow = 0.9 * std::pow(tol_step / err, 0.2);
                h = h_try * std::clamp(grow, 0.3, 2.0);
                h = std::min(h, opts_.max_step);
                check_gap = std::min<long>(2 * check_gap, 25);
                next_check = accepted + 1 + check_gap;
            }
            t += h_try;
            ++accepted;
            ++res.steps;
            if ((accepted & 63) == 0) {
                const double drift = std::fabs(vec_norm(psi) - 1.0);
                res.max_norm_drift = std::max(res.max_norm_drift, drift);
            }
        }
        while (next_stop < stops.size()) {
            on_stop(stops[next_stop], psi);
            ++next_stop;
        }
        // Restore the constant diagonal-mean phase over the whole leg.
        const cplx phase = std::exp(cplx(0.0, -shift_ * leg.duration));
        for (auto& z : psi) z *= phase;
    }

private:
    ModelParams params_;
    PropagationOptions opts_;
    LanczosPropagator lanczos_;
    std::vector<cplx> scratch_;
    double shift_ = 0.0;
    std::vector<double> eps_shifted_, slope_, off_, diag_buf_;
};

PropagationResult run_legs(const QuantumState& initial, const ModelParams& params,
                           const std::vector<LegSpec>& legs,
                           const PropagationOptions& opts) {
    if (initial.dim() != params.dim())
        throw std::invalid_argument("propagate: state dimension mismatch");
    const double n0 = vec_norm(initial.amplitudes);
    if (std::fabs(n0 - 1.0) > 1e-6)
        throw std::invalid_argument("propagate: initial state must be normalized");

    PropagationResult res;
    res.state = initial;
    std::vector<cplx>& psi = res.state.amplitudes;

    double total = 0.0;
    for (const auto& l : legs) total += l.duration;
    std::vector<double> snap_times;
    if (opts.snapshot_count > 0) {
        const double t_begin = legs.front().t0;
        for (int s = 0; s < opts.snapshot_count; ++s)
            snap_times.push_back(t_begin + total * (s + 1) / opts.snapshot_count);
    }

    SweepIntegrator integ(params, opts);
    for (const auto& leg : legs) {
        const double t_end = leg.t0 + leg.duration;
        std::vector<double> stops;
        for (double ts : snap_times)
            if (ts > leg.t0 && ts <= t_end) stops.push_back(ts);
        integ.run_leg(
            leg, psi, stops,
            [&](double ts, const std::vector<cplx>& amps) {
                Snapshot s;
                s.t = ts;
                s.delta = leg.delta_at(ts);
                s.amplitudes = amps;
                const cplx ph = std::exp(cplx(0.0, -integ.shift() * (ts - leg.t0)));
                for (auto& z : s.amplitudes) z *= ph;
                res.snapshots.push_back(std::move(s));
            },
            res);
    }
    res.matvecs = integ.matvecs();
    const auto& last = legs.back();
    res.state.time = last.t0 + last.duration;
    res.state.current_delta = last.delta_at(res.state.time);
    res.max_norm_drift =
        std::max(res.max_norm_drift, std::fabs(vec_norm(psi) - 1.0));
    return res;
}

} // namespace

double QuantumState::norm() const { return vec_norm(amplitudes); }

void QuantumState::normalize() {
    const double n = norm();
    if (n == 0.0) throw std::runtime_error("cannot normalize a zero state");
    for (auto& z : amplitudes) z /= n;
}

QuantumState QuantumState::eigenstate(const ModelParams& params, double delta,
                                      int level, double t) {
    if (level < 0 || level >= params.dim())
        throw std::invalid_argument("eigenstate: level out of range");
    const auto h = build_hamiltonian(params, delta);
    const auto es = tridiag_eigensystem_range(h, level, level);
    QuantumState s;
    s.amplitudes.resize(params.dim());
    for (int i = 0; i < params.dim(); ++i) s.amplitudes[i] = es.vec(0)[i];
    s.time = t;
    s.current_delta = delta;
    s.normalize();
    return s;
}

PropagationResult propagate_linear(const QuantumState& initial,
                                   const ModelParams& params, double delta_start,
                                   double delta_end, double duration,
                                   const PropagationOptions& opts) {
    if (!(duration > 0.0))
        throw std::invalid_argument("propagate_linear: duration must be positive");
    LegSpec leg;
    leg.t0 = initial.time;
    leg.duration = duration;
    leg.delta0 = delta_start;
    leg.rate = (delta_end - delta_start) / duration;
    return run_legs(initial, params, {leg}, opts);
}

PropagationResult propagate(const QuantumState& initial, const ModelParams& params,
                            const SweepProtocol& protocol,
                            const PropagationOptions& opts) {
    const double T = protocol.half_time;
    LegSpec fwd{-T, T, protocol.delta_initial, protocol.rate()};
    LegSpec bwd{0.0, T, protocol.delta_turn, -protocol.rate()};
    QuantumState st = initial;
    st.time = -T;
    return run_legs(st, params, {fwd, bwd}, opts);
}

QuantumState propagate_dense_oracle(const QuantumState& initial,
                                    const ModelParams& params,
                                    const SweepProtocol& protocol, double dt) {
    QuantumState s = initial;
    const double T = protocol.half_time;
    double t = -T;
    s.time = t;
    const int n = params.dim();
    std::vector<cplx> next(n);
    while (t < T - 1e-12 * T) {
        const double h = std::min(dt, T - t);
        const double dmid = delta_of_t(std::min(t + 0.5 * h, T), protocol);
        const auto es = tridiag_eigensystem(build_hamiltonian(params, dmid));
        std::fill(next.begin(), next.end(), cplx(0.0, 0.0));
        for (int q = 0; q < n; ++q) {
            const double* v = es.vec(q);
            cplx amp(0.0, 0.0);
            for (int i = 0; i < n; ++i) amp += v[i] * s.amplitudes[i];
            amp *= std::exp(cplx(0.0, -h * es.values[q]));
            for (int i = 0; i < n; ++i) next[i] += amp * v[i];
        }
        s.amplitudes = next;
        t += h;
    }
    s.time = T;
    s.current_delta = protocol.delta_initial;
    return s;
}

AdiabaticOccupation project_adiabatic(const QuantumState& state,
                                      const ModelParams& params) {
    const auto es =
        tridiag_eigensystem(build_hamiltonian(params, state.current_delta));
    const int n = params.dim();
    AdiabaticOccupation occ;
    occ.delta = state.current_delta;
    occ.time = state.time;
    occ.energies = es.values;
    occ.probabilities.resize(n);
    for (int q = 0; q < n; ++q) {
        const double* v = es.vec(q);
        double re = 0.0, im = 0.0;
        for (int i = 0; i < n; ++i) {
            re += v[i] * std::real(state.amplitudes[i]);
            im += v[i] * std::imag(state.amplitudes[i]);
        }
        occ.probabilities[q] = re * re + im * im;
    }
    return occ;
}

FinalSplit split_final_distribution(const std::vector<double>& probabilities,
                                    const std::vector<double>& level_energies,
                                    double initial_energy,
                                    const SplitOptions& opts) {
    const int n = static_cast<int>(probabilities.size());
    if (static_cast<int>(level_energies.size()) != n)
        throw std::invalid_argument("split_final_distribution: size mismatch");
    FinalSplit out;

    struct Cluster {
        int lo, hi;
        double mass;
    };
    std::vector<Cluster> clusters;
    int i = 0;
    while (i < n) {
        if (probabilities[i] < opts.empty_threshold) {
            ++i;
            continue;
        }
        int j = i;
        double mass = 0.0;
        while (j < n && probabilities[j] >= opts.empty_threshold) {
            mass += probabilities[j];
            ++j;
        }
        clusters.push_back({i, j - 1, mass});
        i = j;
    }
    std::vector<int> significant;
    for (std::size_t c = 0; c < clusters.size(); ++c)
        if (clusters[c].mass >= opts.significant_mass)
            significant.push_back(static_cast<int>(c));

    int init_level = 0;
    for (int q = 1; q < n; ++q)
        if (std::fabs(level_energies[q] - initial_energy) <
            std::fabs(level_energies[init_level] - initial_energy))
            init_level = q;

    auto fallback = [&]() {
        out.separable = false;
        out.p_return = probabilities[init_level];
        double total = 0.0;
        for (double p : probabilities) total += p;
        out.low_peak_mass = out.p_return;
        out.high_peak_mass = 0.0;
        out.residual = total - out.p_return;
    };

    if (significant.size() == 2) {
        const Cluster& cl = clusters[significant[0]];
        const Cluster& ch = clusters[significant[1]];
        double low = 0.0, high = 0.0, mid = 0.0;
        for (int q = 0; q < n; ++q) {
            if (q <= cl.hi)
                low += probabilities[q];
            else if (q >= ch.lo)
                high += probabilities[q];
            else
                mid += probabilities[q];
        }
        out.residual = mid;
        if (mid >= opts.residual_threshold) {
            fallback();
            return out;
        }
        out.separable = true;
        out.low_peak_mass = low;
        out.high_peak_mass = high;
        out.gap_energy_lo = level_energies[std::min(cl.hi + 1, n - 1)];
        out.gap_energy_hi = level_energies[std::max(ch.lo - 1, 0)];
        const bool init_low = init_level <= cl.hi ||
                              (init_level < ch.lo &&
                               std::fabs(initial_energy - level_energies[cl.hi]) <=
                                   std::fabs(initial_energy - level_energies[ch.lo]));
        out.p_return = init_low ? low : high;
        return out;
    }

    if (significant.size() == 1) {
        const Cluster& c = clusters[significant[0]];
        double peak_level = 0.0;
        for (int q = c.lo; q <= c.hi; ++q)
            peak_level = std::max(peak_level, probabilities[q]);
        // Degenerate separable case: the single peak is a point mass, the
        // other group is empty.
        if (peak_level >= 0.99 * c.mass) {
            double total = 0.0;
            for (double p : probabilities) total += p;
            out.residual = total - c.mass;
            if (out.residual < opts.residual_threshold) {
                out.separable = true;
                const bool contains_init = init_level >= c.lo && init_level <= c.hi;
                out.low_peak_mass = contains_init ? c.mass : 0.0;
                out.high_peak_mass = contains_init ? 0.0 : c.mass;
                out.p_return = contains_init ? c.mass : out.residual;
                return out;
            }
        }
    }

    fallback();
    return out;
}

std::vector<WeightedLevel> microcanonical_mixture(const ModelParams& params,
                                                  double delta,
                                                  double target_energy, int k) {
    const int n = params.dim();
    if (k < 1 || k > n)
        throw std::invalid_argument("microcanonical_mixture: k must be in [1, N+1]");
    const auto vals = tridiag_eigenvalues(build_hamiltonian(params, delta));
    int best_start = 0;
    double best_err = HUGE_VAL;
    double window = 0.0;
    for (int s = 0; s < k; ++s) window += vals[s];
    for (int s = 0; s + k <= n; ++s) {
        if (s > 0) window += vals[s + k - 1] - vals[s - 1];
        const double err = std::fabs(window / k - target_energy);
        if (err < best_err) {
            best_err = err;
            best_start = s;
        }
    }
    std::vector<WeightedLevel> out;
    out.reserve(k);
    for (int j = 0; j < k; ++j) out.push_back({best_start + j, 1.0 / k});
    return out;
}

double mixture_mean_energy(const ModelParams& params, double delta,
                           const std::vector<WeightedLevel>& mixture) {
    const auto vals = tridiag_eigenvalues(build_hamiltonian(params, delta));
    double e = 0.0, wsum = 0.0;
    for (const auto& m : mixture) {
        e += m.weight * vals[m.level];
        wsum += m.weight;
    }
    return e / wsum;
}

std::vector<ReturnScanRow> return_probability_scan(
    const std::vector<WeightedLevel>& mixture, const ModelParams& params,
    double delta_initial, double delta_turn,
    const std::vector<double>& half_times, const PropagationOptions& opts,
    const SplitOptions& split_opts) {
    const std::size_t n_t = half_times.size();
    const std::size_t n_m = mixture.size();
    const double e_init = mixture_mean_energy(params, delta_initial, mixture);

    std::vector<QuantumState> members(n_m);
    for (std::size_t j = 0; j < n_m; ++j)
        members[j] =
            QuantumState::eigenstate(params, delta_initial, mixture[j].level);

    struct Slot {
        std::vector<double> probs;
        std::vector<double> energies;
    };
    std::vector<Slot> slots(n_t * n_m);
    parallel_for(n_t * n_m, [&](std::size_t idx) {
        const std::size_t it = idx / n_m;
        const std::size_t jm = idx % n_m;
        SweepProtocol proto(delta_initial, delta_turn, half_times[it]);
        auto res = propagate(members[jm], params, proto, opts);
        auto occ = project_adiabatic(res.state, params);
        slots[idx].probs = std::move(occ.probabilities);
        slots[idx].energies = std::move(occ.energies);
    });

    std::vector<ReturnScanRow> rows(n_t);
    for (std::size_t it = 0; it < n_t; ++it) {
        std::vector<double> mix(params.dim(), 0.0);
        for (std::size_t jm = 0; jm < n_m; ++jm) {
            const auto& s = slots[it * n_m + jm];
            for (int q = 0; q < params.dim(); ++q)
                mix[q] += mixture[jm].weight * s.probs[q];
        }
        const auto& en = slots[it * n_m].energies;
        auto split = split_final_distribution(mix, en, e_init, split_opts);
        rows[it] = {half_times[it], split.p_return, split.separable};
    }
    return rows;
}

} // namespace bhd
