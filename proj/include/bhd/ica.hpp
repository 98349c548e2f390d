#ifndef BHD_ICA_HPP
#define BHD_ICA_HPP

#include <vector>

#include "bhd/model.hpp"
#include "bhd/propagator.hpp"
#include "bhd/spectrum.hpp"

namespace bhd {

/// Landau-Zener diabatic transition probability exp(-pi gap^2 / (2 rate
/// slope)). The exponent is clamped to P = 1 when below 1e-12.
double lz_probability(double gap, double sweep_rate, double slope);

/// How gap and slope enter the Landau-Zener formula at each crossing.
///  - standard: coupling matrix element v and diabatic slope difference;
///    crossings between non-adjacent Fock lines have no direct element and
///    pass diabatically (a known deficiency of this variant).
///  - modified: v replaced by half the avoided-crossing gap, diabatic slopes.
///  - improved: the gap together with the asymptotic adiabatic slope
///    gap_max / |Delta_max - Delta_c|.
enum class IcaVariant { standard, modified, improved };

/// P_diab for a single crossing under the given variant. Crossings whose gap
/// sits at the numeric resolution floor pass diabatically (P = 1).
double crossing_probability(const AvoidedCrossing& crossing, double sweep_rate,
                            IcaVariant variant);

using LevelDistribution = std::vector<double>;

struct CrossingSchedule {
    std::vector<AvoidedCrossing> forward; // ascending encounter order
    double delta_lo = 0.0, delta_hi = 0.0;
    /// Backward leg is the exact reversal of the forward leg.
    std::size_t total_crossings() const { return 2 * forward.size(); }
};

/// Orders the crossings inside the swept window by encounter time.
CrossingSchedule build_schedule(const std::vector<AvoidedCrossing>& crossings,
                                const SweepProtocol& protocol);

/// Applies the incoherent probability mix at every crossing of the forward
/// leg and then the reversed backward leg. Each crossing mixes one adjacent
/// level pair doubly stochastically, so the total probability is conserved
/// exactly (compensated arithmetic keeps the sum at 1 to the last bit).
LevelDistribution incoherent_cascade(const LevelDistribution& initial,
                                     const CrossingSchedule& schedule,
                                     double sweep_rate,
                                     IcaVariant variant = IcaVariant::improved);

/// Forward leg only (used for comparisons against a single exact sweep).
LevelDistribution cascade_forward(const LevelDistribution& initial,
                                  const CrossingSchedule& schedule,
                                  double sweep_rate,
                                  IcaVariant variant = IcaVariant::improved);

struct IcaReturnResult {
    double p_return = 0.0;
    bool separable = false;       // peak rule succeeded as-is
    bool used_two_means = false;  // energy 2-means fallback decided the split
    LevelDistribution final_distribution;
};

/// Return probability of a microcanonical mixture in the incoherent
/// Landau-Zener approximation: cascade through both legs, then the same
/// peak-splitting rule as the exact propagation; if the cascaded
/// distribution is not peak-separable, a deterministic energy 2-means split
/// assigns the peaks.
IcaReturnResult ica_return_probability(const std::vector<WeightedLevel>& mixture,
                                       const ModelParams& params,
                                       const SweepProtocol& protocol,
                                       const CrossingSchedule& schedule,
                                       IcaVariant variant = IcaVariant::improved,
                                       const SplitOptions& split_opts = {});

struct VariantComparison {
    LevelDistribution exact;
    LevelDistribution standard;
    LevelDistribution modified;
    LevelDistribution improved;
    double l1_standard = 0.0;
    double l1_modified = 0.0;
    double l1_improved = 0.0;
};

/// Ground-state forward sweep: exact propagation against all three ICA
/// variants, with L1 distances to the exact final distribution.
VariantComparison compare_variants(const ModelParams& params,
                                   const SweepProtocol& protocol,
                                   const CrossingSchedule& schedule,
                                   const PropagationOptions& opts = {});

} // namespace bhd

#endif
