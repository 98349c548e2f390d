#ifndef BHD_SPECTRUM_HPP
#define BHD_SPECTRUM_HPP

#include <optional>
#include <vector>

#include "bhd/model.hpp"
#include "bhd/tridiag.hpp"

namespace bhd {

struct EigenResult {
    std::vector<double> values;                 // ascending
    std::optional<TridiagEigenSystem> system;   // present when vectors requested
    /// Adjacent separations below this are at the resolution limit of the
    /// solver (1e3 * machine epsilon * spectral norm bound).
    double gap_floor = 0.0;
};

EigenResult eigen_at(const ModelParams& params, double delta, bool want_vectors);

/// One refined local minimum of an adjacent-level separation.
struct GapMinimum {
    int pair = 0;             // lower level index
    double delta_c = 0.0;     // refined location
    double gap = 0.0;         // separation at the minimum (clamped to floor)
    double raw_gap = 0.0;     // fitted value before clamping (may be ~0)
    double steepness = 0.0;   // |d gap / d Delta| away from the minimum
    bool reliable = true;     // raw gap above the numeric floor
    bool resolved = true;     // refinement converged within budget
};

struct AdiabaticSpectrum {
    ModelParams params;
    double delta_lo = 0.0, delta_hi = 0.0;
    std::vector<double> delta_grid;   // ascending uniform base grid
    std::vector<double> levels;       // row-major: grid index x level index
    std::vector<GapMinimum> minima;   // all refined separation minima
    double gap_floor = 0.0;

    int grid_count() const { return static_cast<int>(delta_grid.size()); }
    int dim() const { return params.dim(); }
    double level(int g, int k) const {
        return levels[static_cast<std::size_t>(g) * dim() + k];
    }
    double separation(int g, int k) const { return level(g, k + 1) - level(g, k); }
};

/// Eigenvalue families on a uniform grid over [delta_initial, delta_turn]
/// with local refinement of every adjacent-separation minimum.
AdiabaticSpectrum scan_spectrum(const ModelParams& params,
                                const SweepProtocol& protocol,
                                int base_grid_count);

/// Global minimum of the adjacent-level separation over the swept window.
double min_gap(const ModelParams& params, const SweepProtocol& protocol,
               int base_grid_count = 801);

struct AvoidedCrossing {
    enum class SlopeSource { flanking_max, lowest_pair_rule, diabatic_fallback };

    int lower_level = 0;
    double delta_c = 0.0;
    double gap = 0.0;        // energy gap delta at the crossing
    double delta_max = 0.0;  // location of the reference separation maximum
    double gap_max = 0.0;    // separation at the reference maximum
    double slope = 0.0;      // alpha = gap_max / |delta_max - delta_c|
    SlopeSource slope_source = SlopeSource::flanking_max;
    bool reliable = true;
    bool resolved = true;
    // Diabatic (Fock) line indices that cross here, -1 when unidentified.
    int diab_i = -1;
    int diab_j = -1;
    double coupling_v = 0.0; // |H_ij|, nonzero only for adjacent Fock lines
};

/// One AvoidedCrossing per refined separation minimum. Pairs above the
/// swallowtail whose separation has no flanking maximum are not emitted;
/// the lowest pair uses the separation at the nearest crossing of the next
/// pair as its reference maximum.
std::vector<AvoidedCrossing> detect_crossings(const AdiabaticSpectrum& spectrum);

struct Histogram {
    std::vector<double> edges;   // bin_count + 1 ascending edges
    std::vector<int> counts;
    int peak_bin() const;
};

/// Eigenvalue histogram at fixed detuning. Energies are reported relative
/// to the constant interaction offset U N^2/4 so they line up with the
/// mean-field energy scale.
Histogram density_of_states(const ModelParams& params, double delta, int bin_count);

} // namespace bhd

#endif
