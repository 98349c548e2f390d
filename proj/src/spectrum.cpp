#include "bhd/spectrum.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <string>

#include "bhd/util.hpp"

namespace bhd {

namespace {

constexpr double kFloorFactor = 1e3 * DBL_EPSILON;

// Quadratic through three points; returns false when degenerate.
bool fit_parabola(const double x[3], const double y[3], double& a, double& b,
                  double& c) {
    const double d01 = x[1] - x[0], d02 = x[2] - x[0], d12 = x[2] - x[1];
    if (d01 == 0.0 || d02 == 0.0 || d12 == 0.0) return false;
    const double s0 = y[0] / (d01 * d02);
    const double s1 = -y[1] / (d01 * d12);
    const double s2 = y[2] / (d02 * d12);
    a = s0 + s1 + s2;
    b = -(s0 * (x[1] + x[2]) + s1 * (x[0] + x[2]) + s2 * (x[0] + x[1]));
    c = s0 * x[1] * x[2] + s1 * x[0] * x[2] + s2 * x[0] * x[1];
    return std::isfinite(a) && std::isfinite(b) && std::isfinite(c);
}

struct MinRefineResult {
    double delta_c;
    double raw_gap;
    double steepness;
    bool resolved;
};

// Vertex of the parabola through three points of the squared separation.
// Near an avoided crossing the separation follows the two-level form
// gap^2 = delta0^2 + lambda^2 (Delta - Delta_c)^2, so this is exact there.
struct HyperbolaFit {
    bool ok = false;
    double xc = 0.0;
    double gap0 = 0.0;   // sqrt(max(vertex value, 0))
    double lambda = 0.0; // asymptotic |d gap / d Delta|
};

HyperbolaFit fit_hyperbola(const double x[3], const double y[3]) {
    HyperbolaFit f;
    double a, b, c;
    const double y2[3] = {y[0] * y[0], y[1] * y[1], y[2] * y[2]};
    if (!fit_parabola(x, y2, a, b, c) || a <= 0.0) return f;
    f.xc = -0.5 * b / a;
    f.gap0 = std::sqrt(std::max(c - 0.25 * b * b / a, 0.0));
    f.lambda = std::sqrt(a);
    f.ok = true;
    return f;
}

// Refines one separation minimum bracketed by grid points. Evaluation
// tolerances track the spread of the bracketing values so flat minima are
// resolved as precisely as they need to be, while the final value is always
// confirmed by a full-precision evaluation at the fitted vertex.
MinRefineResult refine_minimum(PairGapEvaluator& eval, double xl, double xm,
                               double xr, double yl, double ym, double yr,
                               double tol_delta, int max_evals) {
    int evals = 0;
    auto gap_full = [&](double x) {
        ++evals;
        return eval.gap(x, 0.0, 0.0);
    };
    auto gap_approx = [&](double x, double spread) {
        ++evals;
        return eval.gap(x, 0.0, 0.005 * spread);
    };

    double x[3] = {xl, xm, xr};
    double y[3] = {yl, ym, yr};

    auto spread_of = [&]() {
        return std::max(y[0], y[2]) - std::min({y[0], y[1], y[2]});
    };

    HyperbolaFit fit = fit_hyperbola(x, y);
    if (fit.ok && fit.xc > x[0] && fit.xc < x[2]) {
        const double yv = gap_full(fit.xc);
        // Deep, steep crossing: the vertex evaluation already sits at the
        // bottom of the V, orders of magnitude below the bracketing values.
        if (yv <= 1e-3 * spread_of())
            return {fit.xc, yv, fit.lambda, true};
        // Model-consistent shallow minimum: accept directly.
        if (std::fabs(yv - fit.gap0) <= 0.01 * std::max(yv, fit.gap0))
            return {fit.xc, yv, fit.lambda, true};
        // Otherwise keep the new point and iterate below.
        if (fit.xc < x[1]) {
            if (yv <= y[1]) {
                x[2] = x[1]; y[2] = y[1];
                x[1] = fit.xc; y[1] = yv;
            } else {
                x[0] = fit.xc; y[0] = yv;
            }
        } else if (fit.xc > x[1]) {
            if (yv <= y[1]) {
                x[0] = x[1]; y[0] = y[1];
                x[1] = fit.xc; y[1] = yv;
            } else {
                x[2] = fit.xc; y[2] = yv;
            }
        }
    }

    // Vertex iteration with spread-scaled tolerances.
    for (int it = 0; it < 10 && evals < max_evals; ++it) {
        fit = fit_hyperbola(x, y);
        if (!fit.ok || !(fit.xc > x[0] && fit.xc < x[2])) break;
        const double spread = spread_of();
        const double yv = gap_approx(fit.xc, spread);
        const bool consistent =
            std::fabs(yv - fit.gap0) <= 0.01 * std::max(yv, fit.gap0) + 0.01 * spread;
        const bool narrow = (x[2] - x[0]) <= tol_delta;
        if (fit.xc < x[1]) {
            if (yv <= y[1]) {
                x[2] = x[1]; y[2] = y[1];
                x[1] = fit.xc; y[1] = yv;
            } else {
                x[0] = fit.xc; y[0] = yv;
            }
        } else if (fit.xc > x[1]) {
            if (yv <= y[1]) {
                x[0] = x[1]; y[0] = y[1];
                x[1] = fit.xc; y[1] = yv;
            } else {
                x[2] = fit.xc; y[2] = yv;
            }
        } else {
            break;
        }
        if (consistent || narrow) {
            fit = fit_hyperbola(x, y);
            const double xc = (fit.ok && fit.xc > x[0] && fit.xc < x[2]) ? fit.xc : x[1];
            const double yf = gap_full(xc);
            // Trust the model value only when the direct measurement agrees.
            if (fit.ok && std::fabs(yf - fit.gap0) <= 0.05 * std::max(yf, fit.gap0))
                return {xc, fit.gap0, fit.lambda, true};
            return {xc, yf, fit.ok ? fit.lambda : 0.0, true};
        }
    }

    // Golden-section fallback for brackets where the two-level model fails.
    const double phi = 0.618033988749894848;
    double lo = x[0], hi = x[2];
    double m1 = hi - phi * (hi - lo);
    double m2 = lo + phi * (hi - lo);
    double spread0 = std::max(spread_of(), 1e-14);
    double f1 = gap_approx(m1, spread0);
    double f2 = gap_approx(m2, spread0);
    double last = std::min(f1, f2);
    while (evals < max_evals) {
        if (f1 <= f2) {
            hi = m2;
            m2 = m1; f2 = f1;
            m1 = hi - phi * (hi - lo);
            f1 = gap_approx(m1, spread0);
        } else {
            lo = m1;
            m1 = m2; f1 = f2;
            m2 = lo + phi * (hi - lo);
            f2 = gap_approx(m2, spread0);
        }
        const double best = std::min(f1, f2);
        const bool flat = std::fabs(best - last) <= 0.005 * std::max(best, 1e-300);
        last = best;
        spread0 = std::max(std::fabs(f2 - f1) * 4.0, 0.01 * best);
        if (hi - lo <= tol_delta || flat) {
            const double xb = f1 <= f2 ? m1 : m2;
            const double xs[3] = {lo, xb, hi};
            const double g0 = gap_full(lo);
            const double g1 = gap_full(xb);
            const double g2 = gap_full(hi);
            const double gs[3] = {g0, g1, g2};
            HyperbolaFit ff = fit_hyperbola(xs, gs);
            if (ff.ok && ff.xc > lo && ff.xc < hi) {
                const double yf = gap_full(ff.xc);
                if (std::fabs(yf - ff.gap0) <= 0.05 * std::max(yf, ff.gap0))
                    return {ff.xc, ff.gap0, ff.lambda, true};
                return {ff.xc, yf, ff.lambda, true};
            }
            return {xb, g1, ff.lambda, true};
        }
    }
    return {0.5 * (lo + hi), last, 0.0, false};
}

} // namespace

EigenResult eigen_at(const ModelParams& params, double delta, bool want_vectors) {
    const TridiagonalHamiltonian h = build_hamiltonian(params, delta);
    EigenResult out;
    out.gap_floor = kFloorFactor * h.norm_bound();
    try {
        if (want_vectors) {
            out.system = tridiag_eigensystem(h);
            out.values = out.system->values;
        } else {
            out.values = tridiag_eigenvalues(h);
        }
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " at delta=" +
                                 format_double(delta) + ", N=" +
                                 std::to_string(params.n_particles));
    }
    return out;
}

AdiabaticSpectrum scan_spectrum(const ModelParams& params,
                                const SweepProtocol& protocol,
                                int base_grid_count) {
    if (base_grid_count < 3)
        throw std::invalid_argument("scan_spectrum: base_grid_count must be >= 3");
    AdiabaticSpectrum sp;
    sp.params = params;
    sp.delta_lo = protocol.delta_initial;
    sp.delta_hi = protocol.delta_turn;
    const int G = base_grid_count;
    const int n = params.dim();
    sp.delta_grid.resize(G);
    sp.levels.resize(static_cast<std::size_t>(G) * n);
    const double step = (sp.delta_hi - sp.delta_lo) / (G - 1);
    for (int g = 0; g < G; ++g)
        sp.delta_grid[g] = sp.delta_lo + step * g;
    sp.delta_grid[G - 1] = sp.delta_hi;

    parallel_for(static_cast<std::size_t>(G), [&](std::size_t g) {
        const auto vals =
            tridiag_eigenvalues(build_hamiltonian(params, sp.delta_grid[g]));
        std::copy(vals.begin(), vals.end(),
                  sp.levels.begin() + static_cast<std::size_t>(g) * n);
    });

    sp.gap_floor = kFloorFactor *
                   std::max(build_hamiltonian(params, sp.delta_lo).norm_bound(),
                            build_hamiltonian(params, sp.delta_hi).norm_bound());

    const double tol_delta = 1e-6 * std::max(1.0, sp.delta_hi - sp.delta_lo);
    const int n_pairs = n - 1;
    std::vector<std::vector<GapMinimum>> per_pair(n_pairs);

    parallel_for(static_cast<std::size_t>(n_pairs), [&](std::size_t kp) {
        const int k = static_cast<int>(kp);
        PairGapEvaluator eval(params, k);
        std::vector<GapMinimum>& out = per_pair[kp];
        for (int g = 1; g + 1 < G; ++g) {
            const double sm = sp.separation(g, k);
            const double sl = sp.separation(g - 1, k);
            const double sr = sp.separation(g + 1, k);
            if (!(sm < sl && sm < sr)) continue;
            MinRefineResult r =
                refine_minimum(eval, sp.delta_grid[g - 1], sp.delta_grid[g],
                               sp.delta_grid[g + 1], sl, sm, sr, tol_delta, 80);
            GapMinimum m;
            m.pair = k;
            m.delta_c = r.delta_c;
            m.raw_gap = r.raw_gap;
            m.steepness = r.steepness;
            m.resolved = r.resolved;
            m.reliable = r.raw_gap > sp.gap_floor;
            m.gap = m.reliable ? r.raw_gap : sp.gap_floor;
            out.push_back(m);
        }
    });

    for (auto& v : per_pair)
        sp.minima.insert(sp.minima.end(), v.begin(), v.end());
    std::sort(sp.minima.begin(), sp.minima.end(),
              [](const GapMinimum& a, const GapMinimum& b) {
                  if (a.pair != b.pair) return a.pair < b.pair;
                  return a.delta_c < b.delta_c;
              });
    return sp;
}

double min_gap(const ModelParams& params, const SweepProtocol& protocol,
               int base_grid_count) {
    const AdiabaticSpectrum sp = scan_spectrum(params, protocol, base_grid_count);
    double best = DBL_MAX;
    for (int g = 0; g < sp.grid_count(); ++g)
        for (int k = 0; k + 1 < sp.dim(); ++k)
            best = std::min(best, sp.separation(g, k));
    for (const auto& m : sp.minima) best = std::min(best, m.gap);
    return best;
}

namespace {

// Strict local maximum of a pair's separation series nearest to grid index
// g0 on the given side; refined by a parabola through the grid triple.
bool flanking_maximum(const AdiabaticSpectrum& sp, int k, int g0, int dir,
                      double& dmax, double& smax) {
    const int G = sp.grid_count();
    for (int g = g0 + dir; g > 0 && g + 1 < G; g += dir) {
        const double sm = sp.separation(g, k);
        if (sm > sp.separation(g - 1, k) && sm > sp.separation(g + 1, k)) {
            const double x[3] = {sp.delta_grid[g - 1], sp.delta_grid[g],
                                 sp.delta_grid[g + 1]};
            const double y[3] = {sp.separation(g - 1, k), sm,
                                 sp.separation(g + 1, k)};
            double a, b, c;
            if (fit_parabola(x, y, a, b, c) && a < 0.0) {
                const double xv = -0.5 * b / a;
                if (xv > x[0] && xv < x[2]) {
                    dmax = xv;
                    smax = c - 0.25 * b * b / a;
                    return true;
                }
            }
            dmax = sp.delta_grid[g];
            smax = sm;
            return true;
        }
    }
    return false;
}

// Identifies the two Fock (diabatic) lines whose crossing produces the
// avoided crossing: lines i and j cross where i+j = N - Delta_c/U, and both
// indices are roots of the diagonal-element quadratic at the crossing energy.
void identify_diabatic(const ModelParams& params, double delta_c, double e_mid,
                       AvoidedCrossing& cr) {
    const double U = params.interaction_per_particle();
    const int N = params.n_particles;
    if (std::fabs(U) < 1e-14) {
        if (N == 1) {
            cr.diab_i = 0;
            cr.diab_j = 1;
            cr.coupling_v = 0.5 * params.omega;
        }
        return;
    }
    const double s_real = N - delta_c / U;
    const long s = std::lround(s_real);
    if (s < 0 || s > 2L * N) return;
    const double qa = U;
    const double qb = delta_c - U * N;
    const double qc = U * 0.5 * N * N - 0.5 * delta_c * N - e_mid;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) return;
    const double r1 = (-qb + std::sqrt(disc)) / (2.0 * qa);
    const double r2 = (-qb - std::sqrt(disc)) / (2.0 * qa);
    long i = std::lround(std::min(r1, r2));
    long j = std::lround(std::max(r1, r2));
    if (i == j) return;
    if (i < 0 || j > N) return;
    if (std::labs(i + j - s) > 1) return;
    auto diag_at = [&](long idx) {
        return U * (0.5 * N * N + static_cast<double>(idx) * idx -
                    static_cast<double>(N) * idx) +
               0.5 * delta_c * (2.0 * idx - N);
    };
    // Both lines must actually pass near the crossing energy.
    const double scale = std::max(1.0, std::fabs(e_mid));
    if (std::fabs(diag_at(i) - e_mid) > 0.05 * scale + 1.0) return;
    if (std::fabs(diag_at(j) - e_mid) > 0.05 * scale + 1.0) return;
    cr.diab_i = static_cast<int>(i);
    cr.diab_j = static_cast<int>(j);
    if (j - i == 1) {
        cr.coupling_v =
            0.5 * params.omega * std::sqrt(static_cast<double>(i + 1) * (N - i));
    }
}

} // namespace

std::vector<AvoidedCrossing> detect_crossings(const AdiabaticSpectrum& spectrum) {
    const ModelParams& params = spectrum.params;
    const int G = spectrum.grid_count();
    const double window = spectrum.delta_hi - spectrum.delta_lo;
    const double tol_delta = 1e-6 * std::max(1.0, window);

    // Grid index nearest a given delta.
    auto grid_index = [&](double d) {
        const double step = window / (G - 1);
        int g = static_cast<int>(std::lround((d - spectrum.delta_lo) / step));
        return std::clamp(g, 0, G - 1);
    };

    std::vector<const GapMinimum*> pair1_minima;
    for (const auto& m : spectrum.minima)
        if (m.pair == 1) pair1_minima.push_back(&m);

    std::vector<AvoidedCrossing> out;
    out.reserve(spectrum.minima.size());

    std::vector<std::size_t> idx(spectrum.minima.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<char> keep(spectrum.minima.size(), 0);
    std::vector<AvoidedCrossing> tmp(spectrum.minima.size());

    parallel_for(spectrum.minima.size(), [&](std::size_t mi) {
        const GapMinimum& m = spectrum.minima[mi];
        AvoidedCrossing cr;
        cr.lower_level = m.pair;
        cr.delta_c = m.delta_c;
        cr.gap = m.gap;
        cr.reliable = m.reliable;
        cr.resolved = m.resolved;

        const int g0 = grid_index(m.delta_c);
        double dl = 0.0, sl = 0.0, dr = 0.0, sr = 0.0;
        const bool has_l = flanking_maximum(spectrum, m.pair, g0, -1, dl, sl);
        const bool has_r = flanking_maximum(spectrum, m.pair, g0, +1, dr, sr);

        bool have_ref = false;
        if (has_l && has_r) {
            if (std::fabs(dl - m.delta_c) <= std::fabs(dr - m.delta_c)) {
                cr.delta_max = dl;
                cr.gap_max = sl;
            } else {
                cr.delta_max = dr;
                cr.gap_max = sr;
            }
            have_ref = true;
        } else if (has_l || has_r) {
            cr.delta_max = has_l ? dl : dr;
            cr.gap_max = has_l ? sl : sr;
            have_ref = true;
        } else if (m.pair == 0 && !pair1_minima.empty()) {
            // The lowest pair's separation has no local maximum; use its
            // separation at the nearest crossing of the next pair up.
            const GapMinimum* best = pair1_minima.front();
            for (const auto* c : pair1_minima)
                if (std::fabs(c->delta_c - m.delta_c) <
                    std::fabs(best->delta_c - m.delta_c))
                    best = c;
            PairGapEvaluator eval(params, 0);
            cr.delta_max = best->delta_c;
            cr.gap_max = eval.gap(best->delta_c, 1e-8);
            cr.slope_source = AvoidedCrossing::SlopeSource::lowest_pair_rule;
            have_ref = true;
        } else if (m.pair != 0) {
            return; // no clear maxima: high level far above the swallowtail
        }

        // Crossing energy midpoint for diabatic identification.
        {
            PairGapEvaluator eval(params, m.pair);
            auto [ea, eb] = eval.eigenpair(m.delta_c);
            identify_diabatic(params, m.delta_c, 0.5 * (ea + eb), cr);
        }

        if (have_ref && std::fabs(cr.delta_max - m.delta_c) > 10.0 * tol_delta) {
            cr.gap_max = std::max(cr.gap_max, cr.gap);
            cr.slope = cr.gap_max / std::fabs(cr.delta_max - m.delta_c);
            if (cr.slope_source != AvoidedCrossing::SlopeSource::lowest_pair_rule)
                cr.slope_source = AvoidedCrossing::SlopeSource::flanking_max;
        } else {
            // Degenerate reference; fall back to the diabatic slope
            // difference (exact for an isolated two-level crossing).
            cr.slope_source = AvoidedCrossing::SlopeSource::diabatic_fallback;
            const double dslope =
                (cr.diab_i >= 0) ? static_cast<double>(cr.diab_j - cr.diab_i) : 1.0;
            cr.slope = dslope;
            cr.delta_max = m.delta_c;
            cr.gap_max = cr.gap;
        }
        tmp[mi] = cr;
        keep[mi] = 1;
    });

    for (std::size_t i = 0; i < tmp.size(); ++i)
        if (keep[i]) out.push_back(tmp[i]);
    std::sort(out.begin(), out.end(),
              [](const AvoidedCrossing& a, const AvoidedCrossing& b) {
                  if (a.delta_c != b.delta_c) return a.delta_c < b.delta_c;
                  return a.lower_level < b.lower_level;
              });
    return out;
}

int Histogram::peak_bin() const {
    int best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[best]) best = static_cast<int>(i);
    return best;
}

Histogram density_of_states(const ModelParams& params, double delta,
                            int bin_count) {
    if (bin_count < 1)
        throw std::invalid_argument("density_of_states: bin_count must be >= 1");
    auto vals = tridiag_eigenvalues(build_hamiltonian(params, delta));
    const double shift = params.interaction_energy_offset();
    for (double& v : vals) v -= shift;
    const double lo = vals.front();
    const double hi = vals.back();
    const double width = std::max(hi - lo, 1e-300);
    Histogram h;
    h.edges.resize(bin_count + 1);
    h.counts.assign(bin_count, 0);
    for (int b = 0; b <= bin_count; ++b)
        h.edges[b] = lo + width * b / bin_count;
    for (double v : vals) {
        int b = static_cast<int>((v - lo) / width * bin_count);
        b = std::clamp(b, 0, bin_count - 1);
        ++h.counts[b];
    }
    return h;
}

} // namespace bhd
