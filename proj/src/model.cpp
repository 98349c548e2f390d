#include "bhd/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bhd {

ModelParams::ModelParams(int n, double u, double omega_)
    : n_particles(n), omega(omega_), interaction_u(u) {
    if (n_particles < 1)
        throw std::invalid_argument("ModelParams: n_particles must be >= 1");
    if (!(omega > 0.0))
        throw std::invalid_argument("ModelParams: omega must be positive");
}

SweepProtocol::SweepProtocol(double delta_i, double delta_0, double t_half)
    : delta_initial(delta_i), delta_turn(delta_0), half_time(t_half) {
    if (!(delta_turn > delta_initial))
        throw std::invalid_argument("SweepProtocol: requires delta_turn > delta_initial");
    if (!(half_time > 0.0) || !std::isfinite(half_time))
        throw std::invalid_argument("SweepProtocol: half_time must be positive and finite");
}

double delta_of_t(double t, const SweepProtocol& protocol) {
    const double T = protocol.half_time;
    if (t < -T || t > T)
        throw std::domain_error("delta_of_t: t outside [-T, T]");
    const double a = std::fabs(t) / T;
    return protocol.delta_initial * a + protocol.delta_turn * (1.0 - a);
}

double TridiagonalHamiltonian::norm_bound() const {
    const int n = dim();
    double bound = 0.0;
    for (int i = 0; i < n; ++i) {
        double r = std::fabs(diagonal[i]);
        if (i > 0) r += std::fabs(off_diagonal[i - 1]);
        if (i < n - 1) r += std::fabs(off_diagonal[i]);
        if (r > bound) bound = r;
    }
    return bound;
}

void TridiagonalHamiltonian::apply(const std::complex<double>* x,
                                   std::complex<double>* y) const {
    const int n = dim();
    if (n == 1) {
        y[0] = diagonal[0] * x[0];
        return;
    }
    y[0] = diagonal[0] * x[0] + off_diagonal[0] * x[1];
    for (int i = 1; i < n - 1; ++i)
        y[i] = off_diagonal[i - 1] * x[i - 1] + diagonal[i] * x[i] +
               off_diagonal[i] * x[i + 1];
    y[n - 1] = off_diagonal[n - 2] * x[n - 2] + diagonal[n - 1] * x[n - 1];
}

TridiagonalHamiltonian build_hamiltonian(const ModelParams& params, double delta) {
    const int N = params.n_particles;
    const double U = params.interaction_per_particle();
    const double omega = params.omega;
    TridiagonalHamiltonian h;
    h.diagonal.resize(N + 1);
    h.off_diagonal.resize(N);
    for (int i = 0; i <= N; ++i) {
        const double eps = U * (0.5 * N * N + static_cast<double>(i) * i -
                                static_cast<double>(N) * i);
        h.diagonal[i] = eps + 0.5 * delta * (2.0 * i - N);
    }
    // Sign follows the Hamiltonian's -omega/2 tunnelling term; eigenvalues do
    // not depend on it.
    for (int i = 0; i < N; ++i)
        h.off_diagonal[i] =
            -0.5 * omega * std::sqrt(static_cast<double>(i + 1) * (N - i));
    return h;
}

ModeAmplitudes mean_field_amplitude_eom(const ModeAmplitudes& state, double delta,
                                        const ModelParams& params) {
    const double U = params.interaction_per_particle();
    const double half_omega = 0.5 * params.omega;
    const std::complex<double> minus_i(0.0, -1.0);
    ModeAmplitudes d;
    d.a1 = minus_i * (-half_omega * state.a2 +
                      (U * std::norm(state.a1) + 0.5 * delta) * state.a1);
    d.a2 = minus_i * (-half_omega * state.a1 +
                      (U * std::norm(state.a2) - 0.5 * delta) * state.a2);
    return d;
}

} // namespace bhd
