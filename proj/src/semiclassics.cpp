#include "bhd/semiclassics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>

#include "bhd/util.hpp"

namespace bhd {

namespace {

constexpr double kPi = std::numbers::pi;

double sq(double x) { return x * x; }

} // namespace

double wrap_angle(double q) {
    double w = std::remainder(q, 2.0 * kPi);
    if (w >= kPi) w -= 2.0 * kPi;
    if (w < -kPi) w += 2.0 * kPi;
    return w;
}

double classical_energy(const ClassicalState& s, double delta,
                        const ModelParams& params) {
    const double p0 = params.p0();
    if (std::fabs(s.p) > p0)
        throw std::domain_error("classical_energy: |p| exceeds p0");
    const double U = params.interaction_per_particle();
    const double root = std::sqrt(std::max(p0 * p0 - s.p * s.p, 0.0));
    return -params.omega * root * std::cos(s.q) + U * s.p * s.p + delta * s.p;
}

ClassicalDeriv hamilton_eom(const ClassicalState& s, double delta,
                            const ModelParams& params) {
    const double p0 = params.p0();
    if (std::fabs(s.p) >= p0)
        throw std::domain_error("hamilton_eom: (q,p) chart singular at |p| = p0");
    const double U = params.interaction_per_particle();
    const double root = std::sqrt(p0 * p0 - s.p * s.p);
    ClassicalDeriv d;
    d.dq = params.omega * s.p * std::cos(s.q) / root + 2.0 * U * s.p + delta;
    d.dp = -params.omega * root * std::sin(s.q);
    return d;
}

PlotCoords plot_coordinates(const ClassicalState& s, const ModelParams& params) {
    const double p0 = params.p0();
    const double root = std::sqrt(std::max(p0 * p0 - s.p * s.p, 0.0));
    const double x = root * std::cos(s.q);
    PlotCoords out;
    // q' is undefined on the transform's polar axis (p = 0, cos q = 0);
    // convention: q' = sign(q) * pi/2 there.
    if (std::hypot(s.p, x) < 1e-12 * p0)
        out.qp = (s.q >= 0.0 ? 0.5 : -0.5) * kPi;
    else
        out.qp = std::atan(s.p / (x != 0.0 ? x : std::copysign(1e-300, x)));
    out.pp = -root * std::sin(s.q);
    return out;
}

// ---------------------------------------------------------------------------
// Fixed points and level-set geometry

namespace {

// Roots of f(p) = sgn*omega*p/sqrt(p0^2-p^2) + 2 U p + delta on (-p0, p0),
// the stationary condition on the q = 0 (sgn=+1) or q = pi (sgn=-1) line.
std::vector<double> branch_roots(double delta, const ModelParams& params,
                                 double sgn) {
    const double p0 = params.p0();
    const double U = params.interaction_per_particle();
    auto f = [&](double p) {
        const double root = std::sqrt(p0 * p0 - p * p);
        return sgn * params.omega * p / root + 2.0 * U * p + delta;
    };
    const int samples = 4001;
    const double edge = p0 * (1.0 - 1e-12);
    std::vector<double> roots;
    double prev_p = -edge;
    double prev_f = f(prev_p);
    for (int i = 1; i < samples; ++i) {
        const double p = -edge + 2.0 * edge * i / (samples - 1);
        const double fp = f(p);
        if ((prev_f < 0.0) != (fp < 0.0)) {
            double a = prev_p, b = p, fa = prev_f;
            for (int it = 0; it < 200; ++it) {
                const double m = 0.5 * (a + b);
                const double fm = f(m);
                if ((fa < 0.0) == (fm < 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
                if (b - a < 1e-15 * p0) break;
            }
            roots.push_back(0.5 * (a + b));
        }
        prev_p = p;
        prev_f = fp;
    }
    return roots;
}

struct Interval {
    double lo, hi;
};

// The p-intervals of {H(q, .) <= E} on [-p0, p0].
std::vector<Interval> sublevel_intervals(double q, double energy, double delta,
                                         const ModelParams& params,
                                         int samples = 257) {
    const double p0 = params.p0();
    const double U = params.interaction_per_particle();
    const double cq = std::cos(q);
    auto g = [&](double p) {
        const double root = std::sqrt(std::max(p0 * p0 - p * p, 0.0));
        return -params.omega * root * cq + U * p * p + delta * p - energy;
    };
    std::vector<double> cuts;
    double prev_p = -p0;
    double prev_g = g(prev_p);
    for (int i = 1; i < samples; ++i) {
        const double p = -p0 + 2.0 * p0 * i / (samples - 1);
        const double gp = g(p);
        if ((prev_g < 0.0) != (gp < 0.0)) {
            double a = prev_p, b = p, ga = prev_g;
            for (int it = 0; it < 200; ++it) {
                const double m = 0.5 * (a + b);
                const double gm = g(m);
                if ((ga < 0.0) == (gm < 0.0)) {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
                if (b - a < 4e-16 * p0) break;
            }
            cuts.push_back(0.5 * (a + b));
        }
        prev_p = p;
        prev_g = gp;
    }
    std::vector<Interval> out;
    bool inside = g(-p0) <= 0.0;
    double start = -p0;
    for (double c : cuts) {
        if (inside) out.push_back({start, c});
        inside = !inside;
        if (inside) start = c;
    }
    if (inside) out.push_back({start, p0});
    return out;
}

double simpson_rec(const std::function<double(double)>& f, double a, double b,
                   double fa, double fm, double fb, double whole, double tol,
                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0) return left + right;
    if (std::fabs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 42);
}

std::optional<FixedPoint> find_saddle(double delta, const ModelParams& params) {
    for (const auto& fp : fixed_points(delta, params))
        if (fp.stability == Stability::unstable) return fp;
    return std::nullopt;
}

} // namespace

std::vector<FixedPoint> fixed_points(double delta, const ModelParams& params) {
    const double U = params.interaction_per_particle();
    std::vector<FixedPoint> out;
    for (double q : {0.0, kPi}) {
        const double sgn = q == 0.0 ? 1.0 : -1.0;
        for (double p : branch_roots(delta, params, sgn)) {
            FixedPoint fp;
            fp.state = {q, p};
            fp.energy = classical_energy(fp.state, delta, params);
            const double p0 = params.p0();
            const double root2 = p0 * p0 - p * p;
            const double cq = q == 0.0 ? 1.0 : -1.0;
            const double h_qq = params.omega * std::sqrt(root2) * cq;
            const double h_pp =
                params.omega * cq * p0 * p0 / std::pow(root2, 1.5) + 2.0 * U;
            fp.stability =
                h_qq * h_pp > 0.0 ? Stability::stable : Stability::unstable;
            out.push_back(fp);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const FixedPoint& a, const FixedPoint& b) {
                  return a.energy < b.energy;
              });
    return out;
}

SeparatrixGeometry lobe_areas(double delta, const ModelParams& params) {
    SeparatrixGeometry geo;
    geo.delta = delta;
    const auto saddle = find_saddle(delta, params);
    if (!saddle) return geo;
    geo.exists = true;
    geo.unstable_point = saddle->state;
    geo.energy = saddle->energy;
    const double p0 = params.p0();
    const double px = saddle->state.p;
    const double ex = saddle->energy;

    // Lobe widths on one q row. The line p = p_saddle lies outside both
    // lobes (H(q, p_saddle) >= E_x with equality only at the saddle), so it
    // classifies every sublevel interval; a row spanning it is the pinched
    // row through the saddle and splits there.
    auto lengths = [&](double q, double& up_len, double& low_len) {
        up_len = 0.0;
        low_len = 0.0;
        for (const auto& iv : sublevel_intervals(q, ex, delta, params)) {
            if (iv.lo >= px) {
                up_len += iv.hi - iv.lo;
            } else if (iv.hi <= px) {
                low_len += iv.hi - iv.lo;
            } else {
                up_len += iv.hi - px;
                low_len += px - iv.lo;
            }
        }
    };
    const double tol = 1e-9 * 4.0 * kPi * p0;
    geo.area_upper = 2.0 * integrate(
                               [&](double q) {
                                   double u, l;
                                   lengths(q, u, l);
                                   return u;
                               },
                               0.0, kPi, tol);
    geo.area_lower = 2.0 * integrate(
                               [&](double q) {
                                   double u, l;
                                   lengths(q, u, l);
                                   return l;
                               },
                               0.0, kPi, tol);
    geo.area_outside = 4.0 * kPi * p0 - geo.area_upper - geo.area_lower;
    return geo;
}

double action_for_energy(double energy, double delta, const ModelParams& params,
                         int side) {
    const double p0 = params.p0();
    const auto saddle = find_saddle(delta, params);
    double px = 0.0;
    bool split = false;
    if (saddle && energy <= saddle->energy) {
        split = true;
        px = saddle->state.p;
    }
    auto row = [&](double q) {
        double len = 0.0;
        for (const auto& iv : sublevel_intervals(q, energy, delta, params)) {
            if (!split)
                len += iv.hi - iv.lo;
            else if (side > 0 && iv.lo >= px)
                len += iv.hi - iv.lo;
            else if (side < 0 && iv.hi <= px)
                len += iv.hi - iv.lo;
        }
        return len;
    };
    const double tol = 1e-9 * 4.0 * kPi * p0;
    return 2.0 * integrate(row, 0.0, kPi, tol);
}

double energy_for_action(double action, double delta, const ModelParams& params,
                         int side) {
    const auto fps = fixed_points(delta, params);
    if (fps.empty())
        throw std::runtime_error("energy_for_action: no fixed points");
    const auto saddle = find_saddle(delta, params);
    double e_lo = fps.front().energy;
    if (saddle) {
        bool found = false;
        for (const auto& fp : fps)
            if (fp.stability == Stability::stable &&
                ((side > 0 && fp.state.p > saddle->state.p) ||
                 (side < 0 && fp.state.p < saddle->state.p))) {
                e_lo = fp.energy;
                found = true;
                break;
            }
        if (!found)
            throw std::runtime_error("energy_for_action: no center on this side");
    }
    double e_hi = saddle ? saddle->energy : fps.back().energy;
    const double span = std::fabs(e_hi - e_lo);
    e_lo += 1e-12 * std::max(std::fabs(e_lo), 1.0);
    e_hi -= 1e-10 * std::max(span, 1.0);
    double a_lo = action_for_energy(e_lo, delta, params, side);
    double a_hi = action_for_energy(e_hi, delta, params, side);
    if (action <= a_lo) return e_lo;
    if (action >= a_hi)
        throw std::domain_error(
            "energy_for_action: action exceeds the available area");
    for (int it = 0; it < 120; ++it) {
        const double e = 0.5 * (e_lo + e_hi);
        const double a = action_for_energy(e, delta, params, side);
        if (a < action)
            e_lo = e;
        else
            e_hi = e;
        if (e_hi - e_lo < 1e-12 * std::max(std::fabs(e_hi), 1.0)) break;
    }
    return 0.5 * (e_lo + e_hi);
}

int ground_side(const ModelParams& params, const SweepProtocol& protocol) {
    const auto fps = fixed_points(protocol.delta_initial, params);
    for (const auto& fp : fps)
        if (fp.stability == Stability::stable)
            return fp.state.p >= 0.0 ? +1 : -1;
    return +1;
}

namespace {

// Detuning window (within the sweep) where an unstable point exists.
std::optional<std::pair<double, double>> saddle_window(
    const ModelParams& params, const SweepProtocol& protocol) {
    const int n = 257;
    const double lo = protocol.delta_initial, hi = protocol.delta_turn;
    std::vector<char> has(n);
    bool any = false;
    for (int i = 0; i < n; ++i) {
        const double d = lo + (hi - lo) * i / (n - 1);
        has[i] = find_saddle(d, params).has_value();
        any = any || has[i];
    }
    if (!any) return std::nullopt;
    int first = 0;
    while (!has[first]) ++first;
    int last = n - 1;
    while (!has[last]) --last;
    auto grid = [&](int i) { return lo + (hi - lo) * i / (n - 1); };
    auto refine = [&](double a, double b) {
        // a: no saddle, b: saddle
        for (int it = 0; it < 60; ++it) {
            const double m = 0.5 * (a + b);
            if (find_saddle(m, params).has_value())
                b = m;
            else
                a = m;
        }
        return b;
    };
    const double wlo = first == 0 ? lo : refine(grid(first - 1), grid(first));
    const double whi = last == n - 1 ? hi : refine(grid(last + 1), grid(last));
    return std::make_pair(wlo, whi);
}

double side_area(double delta, const ModelParams& params, int side) {
    const auto geo = lobe_areas(delta, params);
    if (!geo.exists)
        throw std::runtime_error("side_area: no separatrix at this detuning");
    return side > 0 ? geo.area_upper : geo.area_lower;
}

} // namespace

std::optional<double> delta_s_for_action(double action, const ModelParams& params,
                                         const SweepProtocol& protocol) {
    const auto window = saddle_window(params, protocol);
    if (!window) return std::nullopt;
    const int side = ground_side(params, protocol);
    const double margin = 1e-7 * std::max(1.0, window->second - window->first);
    double lo = window->first + margin;
    double hi = window->second - margin;
    const double a_lo = side_area(lo, params, side);
    const double a_hi = side_area(hi, params, side);
    if (action > a_lo)
        throw std::domain_error(
            "delta_s_for_action: ensemble action exceeds the ground-side lobe "
            "when the separatrix forms");
    if (action < a_hi) return std::nullopt; // lobe never shrinks to the orbit
    for (int it = 0; it < 80; ++it) {
        const double m = 0.5 * (lo + hi);
        if (side_area(m, params, side) > action)
            lo = m;
        else
            hi = m;
        if (hi - lo < 1e-10 * std::max(1.0, std::fabs(hi))) break;
    }
    return 0.5 * (lo + hi);
}

double kruskal_return_probability(double action, const ModelParams& params,
                                  const SweepProtocol& protocol) {
    const auto ds = delta_s_for_action(action, params, protocol);
    if (!ds) return 1.0; // never meets the separatrix: reversible
    const int side = ground_side(params, protocol);
    // The ensemble enters the growing lobe with action equal to that lobe's
    // area at the crossing, and the lobe areas are monotone around it, so
    // the backward sweep meets the separatrix at the same detuning.
    const double dstar = *ds;
    const auto window = saddle_window(params, protocol);
    double h = 5e-3 * std::max(1.0, window->second - window->first);
    h = std::min({h, 0.45 * (window->second - dstar), 0.45 * (dstar - window->first)});
    if (!(h > 0.0))
        throw std::runtime_error("kruskal_return_probability: crossing too close "
                                 "to the separatrix window edge");
    auto derivs = [&](double step, double& du, double& dl, double& dout) {
        const auto gp = lobe_areas(dstar + step, params);
        const auto gm = lobe_areas(dstar - step, params);
        if (!gp.exists || !gm.exists)
            throw std::runtime_error("kruskal_return_probability: separatrix "
                                     "vanished inside the difference stencil");
        du = (gp.area_upper - gm.area_upper) / (2.0 * step);
        dl = (gp.area_lower - gm.area_lower) / (2.0 * step);
        dout = (gp.area_outside - gm.area_outside) / (2.0 * step);
    };
    double du1, dl1, do1, du2, dl2, do2;
    derivs(h, du1, dl1, do1);
    derivs(0.5 * h, du2, dl2, do2);
    const double du = (4.0 * du2 - du1) / 3.0;
    const double dl = (4.0 * dl2 - dl1) / 3.0;
    const double dout = (4.0 * do2 - do1) / 3.0;
    const double scale = std::fabs(du) + std::fabs(dl) + std::fabs(dout);
    if (std::fabs(du - du2) > 1e-3 * scale || std::fabs(dout - do2) > 1e-3 * scale)
        throw std::runtime_error(
            "kruskal_return_probability: area derivatives did not converge");
    const double d_ground = side > 0 ? du : dl;
    const double d_other = side > 0 ? dl : du;
    // Forward pattern at the crossing: the ground lobe and the outside
    // shrink while the other lobe grows.
    if (!(d_ground < 0.0 && dout < 0.0 && d_other > 0.0))
        throw std::runtime_error(
            "kruskal_return_probability: area growth pattern inconsistent with "
            "a forward separatrix crossing");
    return d_ground / (d_ground + dout);
}

// ---------------------------------------------------------------------------
// Trajectory integration with chart switching

namespace {

struct ChartState {
    bool amp_chart = false;
    // qp chart: y[0] = unwrapped q, y[1] = p
    // amp chart: y = {re a1, im a1, re a2, im a2}
    double y[4] = {0.0, 0.0, 0.0, 0.0};
    double q_offset = 0.0; // unwrapped q = wrapped q + q_offset (amp chart)

    ClassicalState to_qp() const {
        if (!amp_chart) return {wrap_angle(y[0]), y[1]};
        const double n1 = y[0] * y[0] + y[1] * y[1];
        const double n2 = y[2] * y[2] + y[3] * y[3];
        // q = arg(conj(a1) a2) for a = sqrt(n) exp(-i phi)
        const double re = y[0] * y[2] + y[1] * y[3];
        const double im = y[0] * y[3] - y[1] * y[2];
        return {std::atan2(im, re), 0.5 * (n1 - n2)};
    }
};

void switch_to_amp(ChartState& s, const ModelParams& params) {
    const double p0 = params.p0();
    const double q = wrap_angle(s.y[0]);
    const double p = s.y[1];
    const double unwrapped = s.y[0];
    const double n1 = std::max(p0 + p, 0.0);
    const double n2 = std::max(p0 - p, 0.0);
    // a_i = sqrt(n_i) exp(-i phi_i) with phi1 = q/2, phi2 = -q/2
    s.y[0] = std::sqrt(n1) * std::cos(-0.5 * q);
    s.y[1] = std::sqrt(n1) * std::sin(-0.5 * q);
    s.y[2] = std::sqrt(n2) * std::cos(0.5 * q);
    s.y[3] = std::sqrt(n2) * std::sin(0.5 * q);
    s.amp_chart = true;
    s.q_offset = unwrapped - q;
}

void switch_to_qp(ChartState& s) {
    const ClassicalState c = s.to_qp();
    s.y[0] = c.q + s.q_offset;
    s.y[1] = c.p;
    s.amp_chart = false;
    s.q_offset = 0.0;
}

void chart_derivs(const ChartState& s, double delta, const ModelParams& params,
                  double dy[4]) {
    if (!s.amp_chart) {
        const ClassicalDeriv d =
            hamilton_eom({wrap_angle(s.y[0]), s.y[1]}, delta, params);
        dy[0] = d.dq;
        dy[1] = d.dp;
        dy[2] = dy[3] = 0.0;
    } else {
        const ModeAmplitudes st{{s.y[0], s.y[1]}, {s.y[2], s.y[3]}};
        const ModeAmplitudes d = mean_field_amplitude_eom(st, delta, params);
        dy[0] = std::real(d.a1);
        dy[1] = std::imag(d.a1);
        dy[2] = std::real(d.a2);
        dy[3] = std::imag(d.a2);
    }
}

// Dormand-Prince 5(4) adaptive stepper over a linear detuning ramp, with
// automatic switching between the (q,p) chart and the amplitude chart near
// the poles.
class ClassicalIntegrator {
public:
    ClassicalIntegrator(const ModelParams& params, double rel_tol)
        : params_(params), rtol_(rel_tol) {}

    // One accepted step from time t, at most h_want long; returns its size.
    double step(ChartState& s, double t, double h_want, double delta0,
                double t0, double rate) {
        const int dim = s.amp_chart ? 4 : 2;
        const double p0 = params_.p0();
        const double atol = 1e-10 * std::max(p0, 1.0);
        double h = h_want;
        static const double a2[] = {0.2};
        static const double a3[] = {3.0 / 40.0, 9.0 / 40.0};
        static const double a4[] = {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0};
        static const double a5[] = {19372.0 / 6561.0, -25360.0 / 2187.0,
                                    64448.0 / 6561.0, -212.0 / 729.0};
        static const double a6[] = {9017.0 / 3168.0, -355.0 / 33.0,
                                    46732.0 / 5247.0, 49.0 / 176.0,
                                    -5103.0 / 18656.0};
        static const double a7[] = {35.0 / 384.0,     0.0, 500.0 / 1113.0,
                                    125.0 / 192.0,    -2187.0 / 6784.0,
                                    11.0 / 84.0};
        static const double cs[] = {0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0};
        static const double err_w[] = {71.0 / 57600.0,      0.0,
                                       -71.0 / 16695.0,     71.0 / 1920.0,
                                       -17253.0 / 339200.0, 22.0 / 525.0,
                                       -1.0 / 40.0};
        for (int attempt = 0; attempt < 80; ++attempt) {
            double k[7][4];
            double ynew[4];
            const double* tableau[] = {nullptr, a2, a3, a4, a5, a6, a7};
            bool ok = true;
            chart_derivs(s, delta0 + rate * (t - t0), params_, k[0]);
            for (int stage = 1; stage < 7 && ok; ++stage) {
                ChartState tmp = s;
                for (int i = 0; i < dim; ++i) {
                    double acc = s.y[i];
                    for (int j = 0; j < stage; ++j)
                        acc += h * tableau[stage][j] * k[j][i];
                    tmp.y[i] = acc;
                }
                if (!tmp.amp_chart && std::fabs(tmp.y[1]) >= p0) {
                    ok = false; // left the chart mid-stage
                    break;
                }
                chart_derivs(tmp, delta0 + rate * (t + cs[stage] * h - t0),
                             params_, k[stage]);
            }
            double err = 0.0;
            if (ok) {
                for (int i = 0; i < dim; ++i) {
                    double yi = s.y[i];
                    double ei = 0.0;
                    for (int j = 0; j < 7; ++j) {
                        yi += h * a7_full(j) * k[j][i];
                        ei += h * err_w[j] * k[j][i];
                    }
                    ynew[i] = yi;
                    const double sc = atol + rtol_ * std::fabs(yi);
                    err += sq(ei / sc);
                }
                err = std::sqrt(err / dim);
                if (!s.amp_chart && std::fabs(ynew[1]) >= p0) ok = false;
            }
            if (ok && err <= 1.0) {
                for (int i = 0; i < dim; ++i) s.y[i] = ynew[i];
                maybe_switch(s);
                last_h_ =
                    h * std::min(5.0, std::max(0.2, 0.9 * std::pow(1.0 / std::max(
                                                                       err, 1e-10),
                                                                   0.2)));
                return h;
            }
            h *= ok ? std::max(0.2, 0.9 * std::pow(1.0 / err, 0.2)) : 0.3;
            if (h < 1e-13 * std::max(std::fabs(t), 1.0))
                throw std::runtime_error("classical integrator: step underflow");
        }
        throw std::runtime_error("classical integrator: too many rejected steps");
    }

    double suggested_h() const { return last_h_; }

private:
    ModelParams params_;
    double rtol_;
    double last_h_ = 0.05;

    static double a7_full(int j) {
        static const double b[] = {35.0 / 384.0,     0.0, 500.0 / 1113.0,
                                   125.0 / 192.0,    -2187.0 / 6784.0,
                                   11.0 / 84.0,      0.0};
        return b[j];
    }

    void maybe_switch(ChartState& s) const {
        const double p0 = params_.p0();
        if (!s.amp_chart) {
            if (std::fabs(s.y[1]) > 0.985 * p0) switch_to_amp(s, params_);
        } else {
            const ClassicalState c = s.to_qp();
            if (std::fabs(c.p) < 0.92 * p0) switch_to_qp(s);
        }
    }
};

ChartState make_chart_state(const ClassicalState& s, const ModelParams& params) {
    ChartState c;
    c.y[0] = s.q;
    c.y[1] = s.p;
    if (std::fabs(s.p) > 0.985 * params.p0()) switch_to_amp(c, params);
    return c;
}

// Starting point of the orbit at the given energy: the inner boundary (the
// point closest to the saddle line) of the side component on the q = 0 row.
double orbit_start_p(double energy, double delta, const ModelParams& params,
                     int side) {
    const auto saddle = find_saddle(delta, params);
    const auto ivs = sublevel_intervals(0.0, energy, delta, params, 1025);
    if (ivs.empty())
        throw std::runtime_error("no classical contour at this energy");
    if (saddle && energy <= saddle->energy) {
        const double px = saddle->state.p;
        for (const auto& iv : ivs) {
            if (side > 0 && iv.lo >= px) return iv.lo;
        }
        for (auto it = ivs.rbegin(); it != ivs.rend(); ++it)
            if (side < 0 && it->hi <= px) return it->hi;
        throw std::runtime_error("no contour on the requested side");
    }
    // single component
    return side > 0 ? ivs.front().lo : ivs.back().hi;
}

} // namespace

ClassicalState evolve_trajectory(const ClassicalState& start,
                                 const ModelParams& params, double delta_start,
                                 double delta_end, double duration,
                                 double rel_tol) {
    ChartState s = make_chart_state(start, params);
    ClassicalIntegrator integ(params, rel_tol);
    const double rate = (delta_end - delta_start) / duration;
    double t = 0.0;
    double h = std::min(0.05, duration);
    while (t < duration * (1.0 - 1e-15)) {
        const double taken =
            integ.step(s, t, std::min(h, duration - t), delta_start, 0.0, rate);
        t += taken;
        h = std::min(integ.suggested_h(), duration - t + 1e-300);
    }
    return s.to_qp();
}

double orbit_period(double energy, double delta, const ModelParams& params,
                    int side) {
    const double p0 = params.p0();
    const auto saddle = find_saddle(delta, params);
    if (saddle &&
        std::fabs(energy - saddle->energy) <
            1e-10 * std::max(1.0, std::fabs(saddle->energy)))
        throw std::runtime_error(
            "orbit_period: contour at the separatrix energy is not closed");
    const double p_start = orbit_start_p(energy, delta, params, side);
    const ClassicalState x0{0.0, p_start};
    const ClassicalDeriv f0 = hamilton_eom(x0, delta, params);
    if (std::hypot(f0.dq, f0.dp) < 1e-12 * std::max(1.0, p0))
        throw std::runtime_error("orbit_period: starting point is stationary");

    ChartState s = make_chart_state(x0, params);
    ClassicalIntegrator integ(params, 1e-11);
    const double t_max = 1e6;
    double t = 0.0;
    double h = 0.05;
    double s_prev = 0.0;
    double t_prev = 0.0;
    ChartState state_prev = s;
    auto section = [&](const ClassicalState& c) {
        return f0.dq * wrap_angle(c.q - x0.q) + f0.dp * (c.p - x0.p);
    };
    long accepted = 0;
    while (t < t_max) {
        state_prev = s;
        t_prev = t;
        const double taken = integ.step(s, t, h, delta, 0.0, 0.0);
        t += taken;
        h = integ.suggested_h();
        ++accepted;
        const ClassicalState c = s.to_qp();
        const double sv = section(c);
        const bool near = std::fabs(wrap_angle(c.q - x0.q)) < 1.2 &&
                          std::fabs(c.p - x0.p) < 0.35 * p0 + 0.1;
        if (accepted > 3 && s_prev < 0.0 && sv >= 0.0 && near) {
            // refine the crossing time by bisecting the last step
            double lo_t = t_prev, hi_t = t;
            ChartState lo_state = state_prev;
            for (int it = 0; it < 80 && hi_t - lo_t > 1e-11 * std::max(t, 1.0);
                 ++it) {
                const double target = 0.5 * (lo_t + hi_t);
                ChartState mid = lo_state;
                double tm = lo_t;
                while (tm < target * (1.0 - 1e-16)) {
                    const double got =
                        integ.step(mid, tm, target - tm, delta, 0.0, 0.0);
                    tm += got;
                }
                if (section(mid.to_qp()) < 0.0) {
                    lo_t = tm;
                    lo_state = mid;
                } else {
                    hi_t = tm;
                }
            }
            return 0.5 * (lo_t + hi_t);
        }
        s_prev = sv;
    }
    throw std::runtime_error(
        "orbit_period: orbit did not close (too close to a separatrix)");
}

ClassicalEnsemble sample_microcanonical(double energy, double delta,
                                        const ModelParams& params, int count,
                                        unsigned long long seed) {
    if (count < 1)
        throw std::invalid_argument("sample_microcanonical: count must be >= 1");
    const auto fps = fixed_points(delta, params);
    if (fps.empty())
        throw std::runtime_error("sample_microcanonical: no fixed points");
    if (energy <= fps.front().energy)
        throw std::domain_error(
            "sample_microcanonical: energy below the lowest stationary state");
    const auto saddle = find_saddle(delta, params);
    const int side =
        fps.front().state.p >= (saddle ? saddle->state.p : 0.0) ? +1 : -1;

    ClassicalEnsemble ens;
    ens.energy = energy;
    ens.delta = delta;
    ens.period = orbit_period(energy, delta, params, side);
    ens.action = action_for_energy(energy, delta, params, side);

    std::mt19937_64 rng(seed);
    const double offset = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double p_start = orbit_start_p(energy, delta, params, side);
    ChartState s = make_chart_state({0.0, p_start}, params);
    ClassicalIntegrator integ(params, 1e-11);
    double t = 0.0;
    double h = std::min(0.05, ens.period / (4.0 * count));
    ens.samples.reserve(count);
    for (int j = 0; j < count; ++j) {
        const double target = (j + offset) / count * ens.period;
        while (t < target * (1.0 - 1e-16)) {
            const double got =
                integ.step(s, t, std::min(h, target - t), delta, 0.0, 0.0);
            t += got;
            h = std::min(integ.suggested_h(), ens.period);
        }
        ens.samples.push_back(s.to_qp());
    }
    return ens;
}

namespace {

// Exact 1-d 2-means of the values; returns the two centroids and whether the
// split is significant (the centroid separation dominates the spread within
// the clusters).
bool two_cluster_split(std::vector<double> v, double& c_lo, double& c_hi) {
    std::sort(v.begin(), v.end());
    const int n = static_cast<int>(v.size());
    std::vector<double> pre(n + 1, 0.0), pre2(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
        pre[i + 1] = pre[i] + v[i];
        pre2[i + 1] = pre2[i] + v[i] * v[i];
    }
    double best = HUGE_VAL;
    int split = 1;
    for (int k = 1; k < n; ++k) {
        const double wl = k, wh = n - k;
        const double costl = pre2[k] - pre[k] * pre[k] / wl;
        const double costh =
            (pre2[n] - pre2[k]) - (pre[n] - pre[k]) * (pre[n] - pre[k]) / wh;
        if (costl + costh < best) {
            best = costl + costh;
            split = k;
        }
    }
    c_lo = pre[split] / split;
    c_hi = (pre[n] - pre[split]) / (n - split);
    const double var_lo =
        std::max(pre2[split] / split - c_lo * c_lo, 0.0);
    const double var_hi = std::max(
        (pre2[n] - pre2[split]) / (n - split) - c_hi * c_hi, 0.0);
    return c_hi - c_lo > 4.0 * (std::sqrt(var_lo) + std::sqrt(var_hi));
}

} // namespace

EnsembleEvolution evolve_ensemble(const ClassicalEnsemble& ensemble,
                                  const ModelParams& params,
                                  const SweepProtocol& protocol, double rel_tol) {
    const std::size_t n = ensemble.samples.size();
    if (n == 0) throw std::invalid_argument("evolve_ensemble: empty ensemble");
    EnsembleEvolution out;
    std::vector<char> failed(n, 0);
    std::vector<ClassicalState> finals(n);
    parallel_for(n, [&](std::size_t i) {
        try {
            const ClassicalState mid =
                evolve_trajectory(ensemble.samples[i], params,
                                  protocol.delta_initial, protocol.delta_turn,
                                  protocol.half_time, rel_tol);
            finals[i] = evolve_trajectory(mid, params, protocol.delta_turn,
                                          protocol.delta_initial,
                                          protocol.half_time, rel_tol);
        } catch (const std::exception&) {
            failed[i] = 1;
        }
    });
    int n_fail = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (failed[i]) {
            ++n_fail;
            continue;
        }
        out.final_states.push_back(finals[i]);
        out.final_energies.push_back(
            classical_energy(finals[i], protocol.delta_initial, params));
    }
    out.failure_rate = static_cast<double>(n_fail) / static_cast<double>(n);
    if (out.final_energies.empty())
        throw std::runtime_error("evolve_ensemble: every trajectory failed");

    double lo = HUGE_VAL, hi = -HUGE_VAL;
    for (double e : out.final_energies) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    const double scale = std::max({std::fabs(ensemble.energy), params.p0(), 1.0});
    const bool significant =
        hi - lo >= 1e-6 * scale &&
        two_cluster_split(out.final_energies, out.cluster_low, out.cluster_high);
    if (!significant) {
        // single final cluster: every trajectory came back to one shell
        out.p_return =
            std::fabs(0.5 * (lo + hi) - ensemble.energy) < 0.05 * scale ? 1.0 : 0.0;
        out.cluster_low = out.cluster_high = 0.5 * (lo + hi);
        return out;
    }
    const double threshold = 0.5 * (out.cluster_low + out.cluster_high);
    int low_count = 0;
    for (double e : out.final_energies)
        if (e < threshold) ++low_count;
    const bool init_is_low = std::fabs(ensemble.energy - out.cluster_low) <=
                             std::fabs(ensemble.energy - out.cluster_high);
    const double frac_low = static_cast<double>(low_count) /
                            static_cast<double>(out.final_energies.size());
    out.p_return = init_is_low ? frac_low : 1.0 - frac_low;
    return out;
}

} // namespace bhd
