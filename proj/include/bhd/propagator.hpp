#ifndef BHD_PROPAGATOR_HPP
#define BHD_PROPAGATOR_HPP

#include <complex>
#include <vector>

#include "bhd/model.hpp"

namespace bhd {

struct QuantumState {
    std::vector<std::complex<double>> amplitudes;
    double time = 0.0;
    double current_delta = 0.0;

    int dim() const { return static_cast<int>(amplitudes.size()); }
    double norm() const;
    void normalize();

    /// Eigenstate `level` of H(delta), with time stamp t.
    static QuantumState eigenstate(const ModelParams& params, double delta,
                                   int level, double t = 0.0);
};

struct PropagationOptions {
    /// Local error target per unit time; the total discretization error over
    /// a sweep of duration D is of order tolerance * D.
    double tolerance = 1e-9;
    int max_krylov = 64;
    double max_step = 2.0;
    /// Number of equally spaced amplitude snapshots over the run (0 = none).
    int snapshot_count = 0;
};

struct Snapshot {
    double t = 0.0;
    double delta = 0.0;
    std::vector<std::complex<double>> amplitudes;
};

struct PropagationResult {
    QuantumState state;
    std::vector<Snapshot> snapshots;
    long steps = 0;
    long matvecs = 0;
    double max_norm_drift = 0.0;
};

/// Linear detuning ramp delta_start -> delta_end over `duration`.
PropagationResult propagate_linear(const QuantumState& initial,
                                   const ModelParams& params, double delta_start,
                                   double delta_end, double duration,
                                   const PropagationOptions& opts = {});

/// Full triangular sweep t in [-T, +T].
PropagationResult propagate(const QuantumState& initial, const ModelParams& params,
                            const SweepProtocol& protocol,
                            const PropagationOptions& opts = {});

/// Reference propagator: frozen-midpoint matrix exponentials through full
/// diagonalization at fixed step dt. Only sensible for small N.
QuantumState propagate_dense_oracle(const QuantumState& initial,
                                    const ModelParams& params,
                                    const SweepProtocol& protocol, double dt);

struct AdiabaticOccupation {
    std::vector<double> probabilities; // over instantaneous eigenstates
    std::vector<double> energies;      // matching eigenvalues
    double delta = 0.0;
    double time = 0.0;
};

AdiabaticOccupation project_adiabatic(const QuantumState& state,
                                      const ModelParams& params);

struct SplitOptions {
    double empty_threshold = 1e-6;   // a level below this counts as unoccupied
    double significant_mass = 0.01;  // a cluster below this is not a peak
    double residual_threshold = 1e-3;
};

struct FinalSplit {
    bool separable = false;
    double low_peak_mass = 0.0;
    double high_peak_mass = 0.0;
    double residual = 0.0;
    double p_return = 0.0;     // mass of the peak holding the initial energy
    double gap_energy_lo = 0.0; // energy interval of the separating run
    double gap_energy_hi = 0.0;
};

/// Two-peak decomposition of a final level distribution. Peaks are maximal
/// runs of occupied levels; they are separable when at most two of them carry
/// significant mass and the mass between them is below the residual
/// threshold. A distribution concentrated on a single level is the
/// degenerate separable case. When not separable, p_return falls back to the
/// probability of the level nearest the initial energy.
FinalSplit split_final_distribution(const std::vector<double>& probabilities,
                                    const std::vector<double>& level_energies,
                                    double initial_energy,
                                    const SplitOptions& opts = {});

struct WeightedLevel {
    int level = 0;
    double weight = 0.0;
};

/// The k consecutive eigenstates of H(delta) whose mean energy is closest to
/// target_energy, with equal weights.
std::vector<WeightedLevel> microcanonical_mixture(const ModelParams& params,
                                                  double delta,
                                                  double target_energy, int k);

double mixture_mean_energy(const ModelParams& params, double delta,
                           const std::vector<WeightedLevel>& mixture);

struct ReturnScanRow {
    double half_time = 0.0;
    double p_return = 0.0;
    bool separable = false;
};

/// Exact-propagation return probability for each sweep half-time in
/// `half_times`, starting from the given microcanonical mixture.
std::vector<ReturnScanRow> return_probability_scan(
    const std::vector<WeightedLevel>& mixture, const ModelParams& params,
    double delta_initial, double delta_turn,
    const std::vector<double>& half_times, const PropagationOptions& opts = {},
    const SplitOptions& split_opts = {});

} // namespace bhd

#endif
