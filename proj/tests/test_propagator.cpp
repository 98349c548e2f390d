#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "bhd/model.hpp"
#include "bhd/propagator.hpp"
#include "bhd/spectrum.hpp"

using namespace bhd;
using cplx = std::complex<double>;

namespace {

QuantumState random_state(int dim, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    QuantumState s;
    s.amplitudes.resize(dim);
    for (auto& z : s.amplitudes) z = cplx(gauss(rng), gauss(rng));
    s.normalize();
    return s;
}

} // namespace

TEST_CASE("frozen detuning keeps occupations stationary") {
    ModelParams p(12, -3.0);
    QuantumState s = random_state(p.dim(), 7);
    s.current_delta = 0.4;
    auto before = project_adiabatic(s, p);
    auto res = propagate_linear(s, p, 0.4, 0.4, 50.0);
    auto after = project_adiabatic(res.state, p);
    for (int q = 0; q < p.dim(); ++q)
        CHECK(std::fabs(after.probabilities[q] - before.probabilities[q]) < 1e-8);
    CHECK(res.max_norm_drift < 1e-8);
}

TEST_CASE("two-level Landau-Zener transition probability") {
    ModelParams p(1, 0.0);
    for (double rate : {0.5, 0.2}) {
        const double span = 40.0;
        auto ground = QuantumState::eigenstate(p, -20.0, 0);
        PropagationOptions opts;
        opts.tolerance = 1e-11;
        auto res = propagate_linear(ground, p, -20.0, 20.0, span / rate, opts);
        auto occ = project_adiabatic(res.state, p);
        const double want = std::exp(-std::numbers::pi / (2.0 * rate));
        CHECK(occ.probabilities[1] == doctest::Approx(want).epsilon(0.01));
    }
}

TEST_CASE("adiabatic projection basics") {
    ModelParams p(9, -2.0);
    SUBCASE("single eigenvector gives an indicator") {
        auto s = QuantumState::eigenstate(p, 0.3, 3);
        auto occ = project_adiabatic(s, p);
        for (int q = 0; q < p.dim(); ++q)
            CHECK(occ.probabilities[q] ==
                  doctest::Approx(q == 3 ? 1.0 : 0.0).epsilon(1e-10));
    }
    SUBCASE("equal superposition splits evenly") {
        auto a = QuantumState::eigenstate(p, 0.3, 0);
        auto b = QuantumState::eigenstate(p, 0.3, 1);
        QuantumState s = a;
        for (int i = 0; i < p.dim(); ++i)
            s.amplitudes[i] =
                (a.amplitudes[i] + b.amplitudes[i]) / std::sqrt(2.0);
        auto occ = project_adiabatic(s, p);
        CHECK(occ.probabilities[0] == doctest::Approx(0.5).epsilon(1e-10));
        CHECK(occ.probabilities[1] == doctest::Approx(0.5).epsilon(1e-10));
        double sum = 0.0;
        for (double q : occ.probabilities) sum += q;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("dense-oracle agreement on a full sweep") {
    ModelParams p(8, -3.0);
    SweepProtocol proto(-2.0, 2.0, 50.0);
    auto init = QuantumState::eigenstate(p, -2.0, 1, -proto.half_time);
    auto res = propagate(init, p, proto);
    auto oracle = propagate_dense_oracle(init, p, proto, 0.004);
    auto occ_fast = project_adiabatic(res.state, p);
    auto occ_ref = project_adiabatic(oracle, p);
    for (int q = 0; q < p.dim(); ++q)
        CHECK(std::fabs(occ_fast.probabilities[q] - occ_ref.probabilities[q]) <
              1e-4);
}

TEST_CASE("time reversal returns the initial state") {
    ModelParams p(6, -3.0);
    auto init = QuantumState::eigenstate(p, -2.0, 2);
    PropagationOptions opts;
    opts.tolerance = 1e-11;
    auto fwd = propagate_linear(init, p, -2.0, 2.0, 30.0, opts);
    QuantumState back = fwd.state;
    for (auto& z : back.amplitudes) z = std::conj(z);
    back.time = 0.0;
    auto rev = propagate_linear(back, p, 2.0, -2.0, 30.0, opts);
    for (int i = 0; i < p.dim(); ++i) {
        const cplx got = std::conj(rev.state.amplitudes[i]);
        CHECK(std::abs(got - init.amplitudes[i]) < 1e-6);
    }
}

TEST_CASE("norm drift stays below contract on a slow sweep") {
    ModelParams p(30, -3.0);
    SweepProtocol proto(-2.0, 2.0, 200.0);
    auto init = QuantumState::eigenstate(p, -2.0, 1, -proto.half_time);
    auto res = propagate(init, p, proto);
    CHECK(res.max_norm_drift < 1e-8);
    auto occ = project_adiabatic(res.state, p);
    double sum = 0.0;
    for (double q : occ.probabilities) sum += q;
    CHECK(std::fabs(sum - 1.0) < 1e-8);
}

TEST_CASE("snapshots are taken at the requested times") {
    ModelParams p(5, -1.0);
    SweepProtocol proto(-2.0, 2.0, 20.0);
    auto init = QuantumState::eigenstate(p, -2.0, 0, -proto.half_time);
    PropagationOptions opts;
    opts.snapshot_count = 8;
    auto res = propagate(init, p, proto, opts);
    REQUIRE(res.snapshots.size() == 8);
    for (int s = 0; s < 8; ++s) {
        const double want_t = -20.0 + 40.0 * (s + 1) / 8.0;
        CHECK(res.snapshots[s].t == doctest::Approx(want_t).epsilon(1e-9));
        CHECK(res.snapshots[s].delta ==
              doctest::Approx(delta_of_t(want_t, proto)).epsilon(1e-9));
    }
}

TEST_CASE("final distribution splitting") {
    std::vector<double> energies(20);
    for (int i = 0; i < 20; ++i) energies[i] = i;

    SUBCASE("indicator is the degenerate separable case") {
        std::vector<double> p(20, 0.0);
        p[4] = 1.0;
        auto split = split_final_distribution(p, energies, 4.0);
        CHECK(split.separable);
        CHECK(split.p_return == doctest::Approx(1.0));
    }
    SUBCASE("two clean peaks") {
        std::vector<double> p(20, 0.0);
        p[2] = 0.3;
        p[3] = 0.3;
        p[14] = 0.2;
        p[15] = 0.2;
        auto split = split_final_distribution(p, energies, 2.4);
        CHECK(split.separable);
        CHECK(split.low_peak_mass == doctest::Approx(0.6));
        CHECK(split.high_peak_mass == doctest::Approx(0.4));
        CHECK(split.p_return == doctest::Approx(0.6));
        CHECK(split.gap_energy_lo <= split.gap_energy_hi);
        auto split_hi = split_final_distribution(p, energies, 14.6);
        CHECK(split_hi.p_return == doctest::Approx(0.4));
    }
    SUBCASE("broad overlapping spread is not separable") {
        std::vector<double> p(20, 0.0);
        for (int i = 2; i < 12; ++i) p[i] = 0.05;
        p[3] = 0.5;
        auto split = split_final_distribution(p, energies, 3.0);
        CHECK_FALSE(split.separable);
        CHECK(split.p_return == doctest::Approx(0.5)); // initial-level mass
    }
    SUBCASE("intermediate mass blocks separability") {
        std::vector<double> p(20, 0.0);
        p[2] = 0.5;
        p[8] = 0.01; // above the residual threshold
        p[15] = 0.49;
        auto split = split_final_distribution(p, energies, 2.0);
        CHECK_FALSE(split.separable);
    }
}

TEST_CASE("microcanonical mixtures") {
    ModelParams p(1000, -3.0);
    auto vals = eigen_at(p, -2.0, false).values;
    SUBCASE("k=1 picks the nearest eigenstate") {
        auto mix = microcanonical_mixture(p, -2.0, vals[36], 1);
        REQUIRE(mix.size() == 1);
        CHECK(mix[0].level == 36);
        CHECK(mix[0].weight == doctest::Approx(1.0));
    }
    SUBCASE("k=4 centers on the 37th level") {
        auto mix = microcanonical_mixture(p, -2.0, vals[36], 4);
        REQUIRE(mix.size() == 4);
        bool has36 = false;
        double wsum = 0.0;
        for (const auto& m : mix) {
            if (m.level == 36) has36 = true;
            wsum += m.weight;
        }
        CHECK(has36);
        CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(mix[3].level - mix[0].level == 3);
    }
    SUBCASE("k beyond the ladder is rejected") {
        CHECK_THROWS_AS(microcanonical_mixture(p, -2.0, 0.0, 1002),
                        std::invalid_argument);
    }
}
