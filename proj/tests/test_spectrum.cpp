#include "doctest.h"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bhd/model.hpp"
#include "bhd/spectrum.hpp"
#include "bhd/tridiag.hpp"

using namespace bhd;

namespace {

// Dense full-matrix diagonalization, independent of the tridiagonal path.
std::vector<double> dense_eigenvalues(const TridiagonalHamiltonian& h) {
    const int n = h.dim();
    std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        a[static_cast<std::size_t>(i) * n + i] = h.diagonal[i];
        if (i + 1 < n) {
            a[static_cast<std::size_t>(i) * n + i + 1] = h.off_diagonal[i];
            a[static_cast<std::size_t>(i + 1) * n + i] = h.off_diagonal[i];
        }
    }
    std::vector<double> w(n);
    int info = LAPACKE_dsyev(LAPACK_COL_MAJOR, 'N', 'U', n, a.data(), n, w.data());
    REQUIRE(info == 0);
    return w;
}

} // namespace

TEST_CASE("two-level closed form") {
    ModelParams p(1, 0.4); // U = 0.4
    for (double delta : {0.0, 0.3, -1.7, 2.0}) {
        auto r = eigen_at(p, delta, false);
        const double mid = 0.5 * 0.4;
        const double rad = 0.5 * std::sqrt(delta * delta + 1.0);
        REQUIRE(r.values.size() == 2);
        CHECK(r.values[0] == doctest::Approx(mid - rad).epsilon(1e-13));
        CHECK(r.values[1] == doctest::Approx(mid + rad).epsilon(1e-13));
    }
    auto r0 = eigen_at(p, 0.0, false);
    CHECK(r0.values[1] - r0.values[0] == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("eigen_at vectors are orthonormal eigenvectors") {
    ModelParams p(12, -3.0);
    auto r = eigen_at(p, 0.7, true);
    REQUIRE(r.system.has_value());
    const auto& es = *r.system;
    const auto h = build_hamiltonian(p, 0.7);
    const int n = es.n;
    for (int j = 0; j < n; ++j) {
        const double* v = es.vec(j);
        // residual H v - E v
        for (int i = 0; i < n; ++i) {
            double hv = h.diagonal[i] * v[i];
            if (i > 0) hv += h.off_diagonal[i - 1] * v[i - 1];
            if (i + 1 < n) hv += h.off_diagonal[i] * v[i + 1];
            CHECK(std::fabs(hv - es.values[j] * v[i]) < 1e-10);
        }
        for (int j2 = 0; j2 <= j; ++j2) {
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += v[i] * es.vec(j2)[i];
            CHECK(std::fabs(dot - (j2 == j ? 1.0 : 0.0)) < 1e-10);
        }
    }
}

TEST_CASE("near-degenerate cat-state gap against dense oracle") {
    ModelParams p(20, -3.0);
    auto tri = tridiag_eigenvalues(build_hamiltonian(p, 0.0));
    auto dense = dense_eigenvalues(build_hamiltonian(p, 0.0));
    REQUIRE(tri.size() == dense.size());
    for (std::size_t i = 0; i < tri.size(); ++i)
        CHECK(tri[i] == doctest::Approx(dense[i]).epsilon(1e-10));
    CHECK(tri[1] - tri[0] < 1e-2); // far below the tunnelling scale
}

TEST_CASE("pair gap evaluator matches full solves") {
    ModelParams p(37, -3.0);
    for (int k : {0, 5, 18, 35}) {
        PairGapEvaluator eval(p, k);
        for (double delta : {-1.7, -0.4, 0.0, 0.11, 0.9, 1.7}) {
            auto all = tridiag_eigenvalues(build_hamiltonian(p, delta));
            const double want = all[k + 1] - all[k];
            CHECK(eval.gap(delta, 0.0) == doctest::Approx(want).epsilon(1e-9));
            auto [a, b] = eval.eigenpair(delta);
            CHECK(a == doctest::Approx(all[k]).epsilon(1e-11));
            CHECK(b == doctest::Approx(all[k + 1]).epsilon(1e-11));
        }
    }
}

TEST_CASE("subcritical scan has no narrow minima") {
    ModelParams p(20, -0.5);
    SweepProtocol w(-2.0, 2.0, 1.0);
    auto sp = scan_spectrum(p, w, 801);
    for (const auto& m : sp.minima) CHECK(m.gap > 0.1);
    // strict ordering of levels everywhere on the grid
    for (int g = 0; g < sp.grid_count(); ++g)
        for (int k = 0; k + 1 < sp.dim(); ++k)
            CHECK(sp.separation(g, k) > 0.0);
}

TEST_CASE("supercritical scan finds narrow swallowtail gaps") {
    ModelParams p(20, -3.0);
    SweepProtocol w(-2.0, 2.0, 1.0);
    auto sp = scan_spectrum(p, w, 801);
    int narrow = 0;
    for (const auto& m : sp.minima)
        if (m.gap < 1e-2) ++narrow;
    CHECK(narrow >= 3);
}

TEST_CASE("N=1 crossing detection") {
    ModelParams p(1, 0.0);
    SweepProtocol w(-2.0, 2.0, 1.0);
    auto sp = scan_spectrum(p, w, 801);
    REQUIRE(sp.minima.size() == 1);
    auto crossings = detect_crossings(sp);
    REQUIRE(crossings.size() == 1);
    const auto& c = crossings[0];
    CHECK(std::fabs(c.delta_c) < 1e-5);
    CHECK(c.gap == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(c.slope == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(c.diab_i == 0);
    CHECK(c.diab_j == 1);
    CHECK(c.coupling_v == doctest::Approx(0.5));
}

TEST_CASE("crossing completeness against 10x brute-force grid") {
    for (int N : {6, 8}) {
        ModelParams p(N, -3.0);
        SweepProtocol w(-2.0, 2.0, 1.0);
        const int G = 401;
        auto sp = scan_spectrum(p, w, G);

        // Independent oracle: discrete minima of each separation on a grid
        // ten times denser, refined only by a local parabola on that grid.
        const int GF = 10 * G;
        std::vector<std::vector<double>> oracle(N); // per pair
        std::vector<double> grid(GF);
        for (int g = 0; g < GF; ++g)
            grid[g] = -2.0 + 4.0 * g / (GF - 1);
        std::vector<std::vector<double>> lv(GF);
        for (int g = 0; g < GF; ++g)
            lv[g] = tridiag_eigenvalues(build_hamiltonian(p, grid[g]));
        for (int k = 0; k < N; ++k) {
            for (int g = 1; g + 1 < GF; ++g) {
                const double sm = lv[g][k + 1] - lv[g][k];
                const double sl = lv[g - 1][k + 1] - lv[g - 1][k];
                const double sr = lv[g + 1][k + 1] - lv[g + 1][k];
                if (sm < sl && sm < sr) {
                    // vertex of the squared-separation parabola
                    const double h = grid[1] - grid[0];
                    const double y0 = sl * sl, y1 = sm * sm, y2 = sr * sr;
                    const double denom = y0 - 2.0 * y1 + y2;
                    double x = grid[g];
                    if (denom > 0.0) x += 0.5 * h * (y0 - y2) / denom;
                    oracle[k].push_back(x);
                }
            }
        }
        for (int k = 0; k < N; ++k) {
            std::vector<double> found;
            for (const auto& m : sp.minima)
                if (m.pair == k) found.push_back(m.delta_c);
            REQUIRE(found.size() == oracle[k].size());
            for (std::size_t i = 0; i < found.size(); ++i)
                CHECK(std::fabs(found[i] - oracle[k][i]) < 1e-4);
        }
    }
}

TEST_CASE("crossing mirror symmetry") {
    ModelParams p(8, -3.0);
    SweepProtocol w(-2.0, 2.0, 1.0);
    auto crossings = detect_crossings(scan_spectrum(p, w, 801));
    for (const auto& c : crossings) {
        bool found = false;
        for (const auto& d : crossings) {
            if (d.lower_level != c.lower_level) continue;
            if (std::fabs(d.delta_c + c.delta_c) < 1e-4 &&
                std::fabs(d.gap - c.gap) < 1e-6 * std::max(1.0, c.gap)) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("minimal gap values") {
    SweepProtocol w(-2.0, 2.0, 1.0);
    SUBCASE("u = 0 stays at the tunnelling scale") {
        CHECK(min_gap(ModelParams(60, 0.0), w) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("subcritical settles near sqrt(1+u)") {
        CHECK(min_gap(ModelParams(60, -0.5), w) ==
              doctest::Approx(std::sqrt(0.5)).epsilon(0.05));
    }
    SUBCASE("supercritical gap shrinks with N") {
        const double g10 = min_gap(ModelParams(10, -3.0), w);
        const double g20 = min_gap(ModelParams(20, -3.0), w);
        const double g30 = min_gap(ModelParams(30, -3.0), w);
        CHECK(g20 < 0.5 * g10);
        CHECK(g30 < 0.5 * g20);
    }
}

TEST_CASE("density of states") {
    SUBCASE("total count equals the dimension") {
        auto h = density_of_states(ModelParams(10, -3.0), 0.0, 7);
        int total = 0;
        for (int c : h.counts) total += c;
        CHECK(total == 11);
    }
    SUBCASE("supercritical peak sits at the separatrix energy") {
        ModelParams p(1000, -3.0);
        auto h = density_of_states(p, 0.0, 61);
        const int pb = h.peak_bin();
        // classical saddle at (q,p)=(0,0): H = -omega*p0 = -N/2
        const double e_sep = -0.5 * p.n_particles;
        CHECK(h.edges[pb] <= e_sep);
        CHECK(h.edges[pb + 1] >= e_sep);
    }
    SUBCASE("subcritical histogram has no sharp interior peak") {
        ModelParams p(1000, -0.5);
        auto h = density_of_states(p, 0.0, 61);
        std::vector<int> sorted = h.counts;
        std::sort(sorted.begin(), sorted.end());
        const int median = sorted[sorted.size() / 2];
        const int peak = h.counts[h.peak_bin()];
        CHECK(peak < 3 * median);
    }
}
