#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>

#include "bhd/model.hpp"
#include "bhd/tridiag.hpp"

using namespace bhd;

TEST_CASE("triangular sweep profile") {
    SweepProtocol p(-2.0, 2.0, 5000.0);
    CHECK(delta_of_t(-p.half_time, p) == doctest::Approx(-2.0));
    CHECK(delta_of_t(p.half_time, p) == doctest::Approx(-2.0));
    CHECK(delta_of_t(0.0, p) == doctest::Approx(2.0));
    CHECK(delta_of_t(-2500.0, p) == doctest::Approx(0.0));
    CHECK(delta_of_t(2500.0, p) == doctest::Approx(0.0));
    CHECK_THROWS_AS(delta_of_t(-5001.0, p), std::domain_error);
    CHECK_THROWS_AS(delta_of_t(5000.5, p), std::domain_error);
    CHECK_THROWS_AS(SweepProtocol(2.0, -2.0, 100.0), std::invalid_argument);
    CHECK_THROWS_AS(SweepProtocol(-2.0, 2.0, 0.0), std::invalid_argument);
    CHECK(p.rate() == doctest::Approx(4.0 / 5000.0));
}

TEST_CASE("parameters keep u exact") {
    ModelParams p(1000, -3.0);
    CHECK(p.interaction_per_particle() == doctest::Approx(-0.003).epsilon(1e-15));
    CHECK(p.interaction_per_particle() * p.n_particles == -3.0 * p.omega);
    CHECK_THROWS_AS(ModelParams(0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ModelParams(10, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("hamiltonian matrix elements") {
    SUBCASE("N=1 closed form") {
        ModelParams p(1, 0.7); // U = 0.7
        auto h = build_hamiltonian(p, 0.0);
        REQUIRE(h.dim() == 2);
        CHECK(h.diagonal[0] == doctest::Approx(0.35));
        CHECK(h.diagonal[1] == doctest::Approx(0.35));
        CHECK(h.off_diagonal[0] == doctest::Approx(-0.5));
    }
    SUBCASE("N=2 appendix values") {
        ModelParams p(2, 2.0); // U = 1
        auto h = build_hamiltonian(p, 0.0);
        CHECK(h.diagonal[0] == doctest::Approx(2.0)); // eps_0 = 2U
        // v_0 = (omega/2) sqrt(1*2) = omega/sqrt(2)
        CHECK(std::fabs(h.off_diagonal[0]) == doctest::Approx(1.0 / std::sqrt(2.0)));
    }
    SUBCASE("dimension and delta linearity") {
        ModelParams p(17, -3.0);
        auto h0 = build_hamiltonian(p, 0.0);
        auto h1 = build_hamiltonian(p, 0.9);
        REQUIRE(h0.dim() == 18);
        for (int i = 0; i <= p.n_particles; ++i) {
            const double want = 0.5 * 0.9 * (2.0 * i - p.n_particles);
            CHECK(h1.diagonal[i] - h0.diagonal[i] == doctest::Approx(want).epsilon(1e-15));
        }
        for (int i = 0; i < p.n_particles; ++i) {
            CHECK(h1.off_diagonal[i] == h0.off_diagonal[i]);
            CHECK(h1.off_diagonal[i] != 0.0);
        }
    }
    SUBCASE("mirror symmetry of the spectrum") {
        ModelParams p(14, -2.5);
        auto ep = tridiag_eigenvalues(build_hamiltonian(p, 1.3));
        auto em = tridiag_eigenvalues(build_hamiltonian(p, -1.3));
        REQUIRE(ep.size() == em.size());
        for (std::size_t i = 0; i < ep.size(); ++i)
            CHECK(ep[i] == doctest::Approx(em[i]).epsilon(1e-12));
    }
}

TEST_CASE("mean-field amplitude equations") {
    ModelParams p(10, -3.0);
    const double U = p.interaction_per_particle();

    SUBCASE("self-trapped phase evolution") {
        ModeAmplitudes s{std::sqrt(10.0), 0.0};
        auto d = mean_field_amplitude_eom(s, 0.0, p);
        const std::complex<double> want =
            std::complex<double>(0.0, -1.0) * (U * 10.0) * s.a1;
        CHECK(std::abs(d.a1 - want) < 1e-14);
        // site-1 population is stationary
        CHECK(std::fabs(2.0 * std::real(std::conj(s.a1) * d.a1)) < 1e-14);
    }
    SUBCASE("symmetric eigenmode of the linear coupler") {
        ModelParams lin(10, 0.0);
        ModeAmplitudes s{std::sqrt(5.0), std::sqrt(5.0)};
        auto d = mean_field_amplitude_eom(s, 0.0, lin);
        // d alpha/dt = +i (omega/2) alpha for both modes
        const std::complex<double> rate1 = d.a1 / s.a1;
        const std::complex<double> rate2 = d.a2 / s.a2;
        CHECK(std::abs(rate1 - std::complex<double>(0.0, 0.5)) < 1e-14);
        CHECK(std::abs(rate2 - std::complex<double>(0.0, 0.5)) < 1e-14);
    }
    SUBCASE("norm conservation for random states") {
        std::mt19937_64 rng(42);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        for (int trial = 0; trial < 20; ++trial) {
            ModeAmplitudes s{{uni(rng), uni(rng)}, {uni(rng), uni(rng)}};
            const double scale = std::sqrt(10.0 / s.norm_sq());
            s.a1 *= scale;
            s.a2 *= scale;
            const double delta = 2.0 * uni(rng);
            auto d = mean_field_amplitude_eom(s, delta, p);
            const double ndot = 2.0 * std::real(std::conj(s.a1) * d.a1 +
                                                std::conj(s.a2) * d.a2);
            CHECK(std::fabs(ndot) < 1e-12);
            // finite-difference cross-check along an Euler step
            const double h = 1e-6;
            ModeAmplitudes fwd{s.a1 + h * d.a1, s.a2 + h * d.a2};
            ModeAmplitudes bwd{s.a1 - h * d.a1, s.a2 - h * d.a2};
            CHECK(std::fabs(fwd.norm_sq() - bwd.norm_sq()) / (2.0 * h) < 1e-8);
        }
    }
}
