#ifndef BHD_SEMICLASSICS_HPP
#define BHD_SEMICLASSICS_HPP

#include <optional>
#include <vector>

#include "bhd/model.hpp"

namespace bhd {

/// Mean-field phase-space point: relative phase q = phi1 - phi2 (wrapped to
/// [-pi, pi)) and population imbalance p = (n1 - n2)/2, with p0 = N/2.
struct ClassicalState {
    double q = 0.0;
    double p = 0.0;
};

double wrap_angle(double q);

/// H = -omega sqrt(p0^2 - p^2) cos q + U p^2 + Delta p
double classical_energy(const ClassicalState& s, double delta,
                        const ModelParams& params);

struct ClassicalDeriv {
    double dq = 0.0;
    double dp = 0.0;
};

/// Hamilton's equations in the (q, p) chart; |p| must stay below p0 (the
/// trajectory integrator switches to the amplitude chart near the poles).
ClassicalDeriv hamilton_eom(const ClassicalState& s, double delta,
                            const ModelParams& params);

enum class Stability { stable, unstable };

struct FixedPoint {
    ClassicalState state;
    double energy = 0.0;
    Stability stability = Stability::stable;
};

/// All interior stationary points (on the q = 0 and q = pi lines), sorted by
/// energy. Supercritical |u| > 1 yields three points on q = 0 inside the
/// swallowtail window, exactly one of them unstable.
std::vector<FixedPoint> fixed_points(double delta, const ModelParams& params);

struct SeparatrixGeometry {
    bool exists = false;
    double delta = 0.0;
    ClassicalState unstable_point;
    double energy = 0.0;      // separatrix (saddle) energy
    double area_upper = 0.0;  // lobe above the saddle branch (contains +p pole)
    double area_lower = 0.0;  // lobe below (contains -p pole)
    double area_outside = 0.0;
};

/// Separatrix lobe areas by direct per-q root finding on the energy level
/// set and adaptive quadrature; A_up + A_low + A_out = 4 pi p0.
SeparatrixGeometry lobe_areas(double delta, const ModelParams& params);

/// Phase-space area of the {H <= E} component around the center on the given
/// side (+1: upper/positive-p side, -1: lower). This is the action of the
/// orbit at energy E.
double action_for_energy(double energy, double delta, const ModelParams& params,
                         int side);

/// Energy whose orbit on the given side encloses the requested action
/// (inverse of action_for_energy).
double energy_for_action(double action, double delta, const ModelParams& params,
                         int side);

/// Side (+1/-1) of the lowest-energy stable fixed point at the sweep start;
/// the paper's lobe A_u is the lobe on this side.
int ground_side(const ModelParams& params, const SweepProtocol& protocol);

/// Detuning on the forward sweep where the shrinking ground-side lobe area
/// equals the ensemble action; empty when the lobe never shrinks to it
/// inside the swept window (reversible case).
std::optional<double> delta_s_for_action(double action, const ModelParams& params,
                                         const SweepProtocol& protocol);

/// Quasi-static return probability: ratio of the area growth rates of the
/// ground-side lobe and the outside region at the backward separatrix
/// crossing. Returns 1 when the sweep never reaches the separatrix.
double kruskal_return_probability(double action, const ModelParams& params,
                                  const SweepProtocol& protocol);

struct ClassicalEnsemble {
    std::vector<ClassicalState> samples;
    double energy = 0.0;
    double action = 0.0;
    double period = 0.0;
    double delta = 0.0;
};

/// `count` points on the energy contour, uniformly distributed in orbit time
/// (microcanonical measure). The common time offset is drawn from the seed.
ClassicalEnsemble sample_microcanonical(double energy, double delta,
                                        const ModelParams& params, int count,
                                        unsigned long long seed = 0);

struct EnsembleEvolution {
    std::vector<ClassicalState> final_states; // excluding failures
    std::vector<double> final_energies;       // at delta_initial
    double p_return = 0.0;
    double failure_rate = 0.0;
    double cluster_low = 0.0;  // centroids of the two final energy clusters
    double cluster_high = 0.0;
};

/// Integrates every sample through the full forward-and-back sweep and
/// classifies final energies into two clusters; p_return is the fraction in
/// the cluster containing the initial energy.
EnsembleEvolution evolve_ensemble(const ClassicalEnsemble& ensemble,
                                  const ModelParams& params,
                                  const SweepProtocol& protocol,
                                  double rel_tol = 1e-10);

/// Integrates one trajectory at a linearly varying detuning (chart-switching
/// adaptive Runge-Kutta); exposed for tests and diagnostics.
ClassicalState evolve_trajectory(const ClassicalState& start,
                                 const ModelParams& params, double delta_start,
                                 double delta_end, double duration,
                                 double rel_tol = 1e-10);

/// One orbital period at frozen detuning; throws when the contour is open or
/// at the separatrix energy.
double orbit_period(double energy, double delta, const ModelParams& params,
                    int side);

struct PlotCoords {
    double qp = 0.0;
    double pp = 0.0;
};

/// Area-preserving visualization coordinates
/// q' = arctan(p / (sqrt(p0^2-p^2) cos q)), p' = -sqrt(p0^2-p^2) sin q.
/// At p = 0, cos q = 0 the convention q' = sign(q) * pi/2 applies.
PlotCoords plot_coordinates(const ClassicalState& s, const ModelParams& params);

} // namespace bhd

#endif
