#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "bhd/ica.hpp"
#include "bhd/util.hpp"

using namespace bhd;

namespace {

AvoidedCrossing synthetic_crossing(int pair, double delta_c, double gap,
                                   double slope) {
    AvoidedCrossing c;
    c.lower_level = pair;
    c.delta_c = delta_c;
    c.gap = gap;
    c.gap_max = std::max(gap, slope);
    c.delta_max = delta_c + 1.0;
    c.slope = slope;
    c.reliable = true;
    c.resolved = true;
    c.diab_i = 0;
    c.diab_j = 1;
    c.coupling_v = 0.5 * gap;
    return c;
}

} // namespace

TEST_CASE("Landau-Zener probability formula") {
    CHECK(lz_probability(0.0, 1e-3, 1.0) == 1.0);
    const double want = std::exp(-std::numbers::pi * 4e-4 / (2e-3));
    CHECK(lz_probability(0.02, 1e-3, 1.0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(want == doctest::Approx(0.5335).epsilon(1e-3));
    // clamped exponent
    CHECK(lz_probability(1e-10, 1.0, 1.0) == 1.0);
    CHECK_THROWS_AS(lz_probability(-0.1, 1e-3, 1.0), std::domain_error);
    CHECK_THROWS_AS(lz_probability(0.1, 0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(lz_probability(0.1, 1e-3, -1.0), std::domain_error);
}

TEST_CASE("all variants coincide with the analytic two-level result") {
    ModelParams p(1, 0.0);
    SweepProtocol proto(-20.0, 20.0, 200.0); // rate = 0.2
    auto crossings = detect_crossings(scan_spectrum(p, proto, 2001));
    REQUIRE(crossings.size() == 1);
    const double rate = proto.rate();
    const double analytic = std::exp(-std::numbers::pi / (2.0 * rate));
    for (IcaVariant v :
         {IcaVariant::standard, IcaVariant::modified, IcaVariant::improved}) {
        CHECK(crossing_probability(crossings[0], rate, v) ==
              doctest::Approx(analytic).epsilon(1e-9));
    }
}

TEST_CASE("schedule construction") {
    std::vector<AvoidedCrossing> cs = {
        synthetic_crossing(0, 0.5, 0.1, 1.0),
        synthetic_crossing(1, -0.5, 0.1, 1.0),
        synthetic_crossing(2, 1.5, 0.1, 1.0),
        synthetic_crossing(0, 3.0, 0.1, 1.0), // outside window
    };
    SweepProtocol proto(-1.0, 2.0, 100.0);
    auto s = build_schedule(cs, proto);
    REQUIRE(s.forward.size() == 3);
    CHECK(s.forward[0].delta_c == -0.5);
    CHECK(s.forward[1].delta_c == 0.5);
    CHECK(s.forward[2].delta_c == 1.5);

    SweepProtocol early(-6.0, -4.0, 100.0); // window below every crossing
    auto empty = build_schedule(cs, early);
    CHECK(empty.forward.empty());
    LevelDistribution d = {0.2, 0.5, 0.3};
    auto out = incoherent_cascade(d, empty, early.rate());
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(out[i] == d[i]);
}

TEST_CASE("cascade limit behaviors") {
    // Two diabatic crossings: pair 0 then pair 1.
    std::vector<AvoidedCrossing> cs = {
        synthetic_crossing(0, -0.5, 1e-9, 1.0),
        synthetic_crossing(1, 0.5, 1e-9, 1.0),
    };
    SweepProtocol proto(-1.0, 1.0, 100.0);
    auto s = build_schedule(cs, proto);

    SUBCASE("P=1 everywhere is a pure permutation") {
        LevelDistribution d = {1.0, 0.0, 0.0};
        auto fwd = cascade_forward(d, s, proto.rate());
        CHECK(fwd[2] == doctest::Approx(1.0));
        auto round = incoherent_cascade(d, s, proto.rate());
        CHECK(round[0] == doctest::Approx(1.0));
    }
    SUBCASE("P=0 everywhere is the identity") {
        std::vector<AvoidedCrossing> wide = {
            synthetic_crossing(0, -0.5, 50.0, 1.0),
            synthetic_crossing(1, 0.5, 50.0, 1.0),
        };
        auto sw = build_schedule(wide, proto);
        LevelDistribution d = {0.7, 0.2, 0.1};
        auto out = incoherent_cascade(d, sw, proto.rate());
        for (std::size_t i = 0; i < d.size(); ++i)
            CHECK(out[i] == doctest::Approx(d[i]).epsilon(1e-12));
    }
}

TEST_CASE("cascade conserves probability exactly") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int n = 40;
    std::vector<AvoidedCrossing> cs;
    for (int r = 0; r < 5000; ++r) {
        const int pair = static_cast<int>(uni(rng) * (n - 1));
        cs.push_back(synthetic_crossing(pair, -2.0 + 4.0 * uni(rng),
                                        0.05 * uni(rng), 0.5 + uni(rng)));
    }
    SweepProtocol proto(-2.0, 2.0, 3000.0);
    auto s = build_schedule(cs, proto);
    LevelDistribution d(n, 0.0);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        d[i] = uni(rng);
        acc += d[i];
    }
    // normalize so the input sums to exactly 1
    for (int i = 0; i < n; ++i) d[i] /= acc;
    double resid = 1.0 - accurate_sum(d);
    d[0] += resid;
    REQUIRE(accurate_sum(d) == 1.0);

    auto out = incoherent_cascade(d, s, proto.rate());
    CHECK(accurate_sum(out) == 1.0);
    for (double v : out) CHECK(v >= 0.0);
}

TEST_CASE("uniform distribution is invariant under both legs") {
    std::vector<AvoidedCrossing> cs;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int r = 0; r < 200; ++r)
        cs.push_back(synthetic_crossing(static_cast<int>(uni(rng) * 7),
                                        -1.0 + 2.0 * uni(rng), 0.03 * uni(rng),
                                        1.0));
    SweepProtocol proto(-1.0, 1.0, 2000.0);
    auto s = build_schedule(cs, proto);
    LevelDistribution u(8, 1.0 / 8.0);
    auto fwd = cascade_forward(u, s, proto.rate());
    for (double v : fwd) CHECK(v == doctest::Approx(1.0 / 8.0).epsilon(1e-13));
    auto round = incoherent_cascade(u, s, proto.rate());
    for (double v : round) CHECK(v == doctest::Approx(1.0 / 8.0).epsilon(1e-13));
}

TEST_CASE("adiabatic limit returns every mixture to itself") {
    ModelParams p(10, -3.0);
    SweepProtocol scan_window(-2.0, 2.0, 1.0);
    auto crossings = detect_crossings(scan_spectrum(p, scan_window, 2001));
    REQUIRE(!crossings.empty());

    SweepProtocol slow(-2.0, 2.0, 1e8);
    auto schedule = build_schedule(crossings, slow);
    std::vector<WeightedLevel> single = {{1, 1.0}};
    auto res = ica_return_probability(single, p, slow, schedule);
    CHECK(res.p_return >= 0.99);
    CHECK(res.separable);

    // P_diab is monotone in the sweep rate for every reliable crossing
    for (const auto& c : crossings) {
        if (!c.reliable) continue;
        const double p_fast = crossing_probability(c, 4e-4, IcaVariant::improved);
        const double p_slow = crossing_probability(c, 4e-8, IcaVariant::improved);
        CHECK(p_slow <= p_fast);
    }
}
