#ifndef BHD_MODEL_HPP
#define BHD_MODEL_HPP

#include <complex>
#include <vector>

namespace bhd {

/// Two-mode Bose-Hubbard parameters. Energies and times are measured in
/// units of the tunnelling rate (omega = 1, hbar = 1). The dimensionless
/// mean-field interaction u = U*N/omega is stored; the per-particle
/// interaction U is derived so that U*N = u*omega holds exactly for any N.
struct ModelParams {
    int n_particles = 1;
    double omega = 1.0;
    double interaction_u = 0.0;

    ModelParams() = default;
    ModelParams(int n, double u, double omega_ = 1.0);

    double interaction_per_particle() const {
        return interaction_u * omega / n_particles;
    }
    int dim() const { return n_particles + 1; }
    double p0() const { return 0.5 * n_particles; }

    /// Constant by which quantum eigenvalues exceed the mean-field energy
    /// H = -omega*sqrt(p0^2-p^2)cos q + U p^2 + Delta p at the same state:
    /// U/2 (n1^2+n2^2) = U p^2 + U N^2/4.
    double interaction_energy_offset() const {
        return interaction_per_particle() * 0.25 * n_particles * n_particles;
    }
};

/// Triangular detuning sweep: Delta(-T) = Delta(T) = delta_initial,
/// Delta(0) = delta_turn, linear in between.
struct SweepProtocol {
    double delta_initial = -2.0;
    double delta_turn = 2.0;
    double half_time = 1000.0;

    SweepProtocol() = default;
    SweepProtocol(double delta_i, double delta_0, double t_half);

    double rate() const { return (delta_turn - delta_initial) / half_time; }
};

double delta_of_t(double t, const SweepProtocol& protocol);

/// Real symmetric tridiagonal Hamiltonian in the Fock basis; index i is the
/// occupation of site 1, so the matrix dimension is N+1.
struct TridiagonalHamiltonian {
    std::vector<double> diagonal;
    std::vector<double> off_diagonal;

    int dim() const { return static_cast<int>(diagonal.size()); }
    /// Gershgorin bound on the spectral norm.
    double norm_bound() const;
    /// y = H x for complex amplitudes, O(N).
    void apply(const std::complex<double>* x, std::complex<double>* y) const;
};

TridiagonalHamiltonian build_hamiltonian(const ModelParams& params, double delta);

/// Mean-field (Gross-Pitaevskii) equations of motion for the two complex
/// mode amplitudes, normalized to |a1|^2 + |a2|^2 = N:
///   i da1/dt = -(omega/2) a2 + (U|a1|^2 + Delta/2) a1
///   i da2/dt = -(omega/2) a1 + (U|a2|^2 - Delta/2) a2
struct ModeAmplitudes {
    std::complex<double> a1;
    std::complex<double> a2;
    double norm_sq() const { return std::norm(a1) + std::norm(a2); }
};

ModeAmplitudes mean_field_amplitude_eom(const ModeAmplitudes& state, double delta,
                                        const ModelParams& params);

} // namespace bhd

#endif
