#include "bhd/ica.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bhd/tridiag.hpp"
#include "bhd/util.hpp"

namespace bhd {

double lz_probability(double gap, double sweep_rate, double slope) {
    if (gap < 0.0)
        throw std::domain_error("lz_probability: gap must be nonnegative");
    if (!(sweep_rate > 0.0))
        throw std::domain_error("lz_probability: sweep rate must be positive");
    if (!(slope > 0.0))
        throw std::domain_error("lz_probability: slope must be positive");
    const double x = std::numbers::pi * gap * gap / (2.0 * sweep_rate * slope);
    if (x < 1e-12) return 1.0;
    return std::exp(-x);
}

double crossing_probability(const AvoidedCrossing& c, double sweep_rate,
                            IcaVariant variant) {
    if (!c.reliable) return 1.0;
    switch (variant) {
        case IcaVariant::improved:
            return lz_probability(c.gap, sweep_rate, c.slope);
        case IcaVariant::modified: {
            const double dslope =
                c.diab_i >= 0 ? static_cast<double>(c.diab_j - c.diab_i) : 1.0;
            return lz_probability(c.gap, sweep_rate, dslope);
        }
        case IcaVariant::standard: {
            // A separation minimum with no underlying diabatic line crossing
            // does not appear in the standard ICA's crossing list at all.
            if (c.diab_i < 0) return 0.0;
            // Crossing lines with a vanishing direct matrix element pass
            // diabatically: the variant's known deficiency.
            if (c.diab_j - c.diab_i != 1) return 1.0;
            // exp(-2 pi v^2 / (rate * dslope)) == lz_probability(2v, ...)
            return lz_probability(2.0 * c.coupling_v, sweep_rate, 1.0);
        }
    }
    return 1.0;
}

CrossingSchedule build_schedule(const std::vector<AvoidedCrossing>& crossings,
                                const SweepProtocol& protocol) {
    CrossingSchedule s;
    s.delta_lo = protocol.delta_initial;
    s.delta_hi = protocol.delta_turn;
    for (const auto& c : crossings)
        if (c.delta_c >= s.delta_lo && c.delta_c <= s.delta_hi)
            s.forward.push_back(c);
    std::sort(s.forward.begin(), s.forward.end(),
              [](const AvoidedCrossing& a, const AvoidedCrossing& b) {
                  if (a.delta_c != b.delta_c) return a.delta_c < b.delta_c;
                  return a.lower_level < b.lower_level;
              });
    return s;
}

namespace {

// Doubly stochastic pair mix with compensated bookkeeping. The transfer
// t = P (p_{k+1} - p_k) keeps the pair sum invariant in exact arithmetic;
// the rounding of the two additions is accumulated in `comp` and folded
// back at the end of the cascade.
struct ExactMixer {
    LevelDistribution p;
    double comp = 0.0;

    void mix(int k, double prob) {
        const double t = prob * (p[k + 1] - p[k]);
        const TwoSum a = two_sum(p[k], t);
        const TwoSum b = two_sum(p[k + 1], -t);
        p[k] = a.sum;
        p[k + 1] = b.sum;
        comp += a.err + b.err;
        if (p[k] < 0.0) {
            comp += p[k];
            p[k] = 0.0;
        }
        if (p[k + 1] < 0.0) {
            comp += p[k + 1];
            p[k + 1] = 0.0;
        }
    }

    LevelDistribution finish() {
        if (comp != 0.0) {
            std::size_t imax = 0;
            for (std::size_t i = 1; i < p.size(); ++i)
                if (p[i] > p[imax]) imax = i;
            p[imax] += comp;
        }
        return std::move(p);
    }
};

void apply_leg(ExactMixer& mixer, const CrossingSchedule& schedule,
               double sweep_rate, IcaVariant variant, bool backward) {
    const auto& fw = schedule.forward;
    const std::size_t n = fw.size();
    for (std::size_t idx = 0; idx < n; ++idx) {
        const AvoidedCrossing& c = fw[backward ? n - 1 - idx : idx];
        const double prob = crossing_probability(c, sweep_rate, variant);
        mixer.mix(c.lower_level, prob);
    }
}

} // namespace

LevelDistribution incoherent_cascade(const LevelDistribution& initial,
                                     const CrossingSchedule& schedule,
                                     double sweep_rate, IcaVariant variant) {
    ExactMixer m{initial, 0.0};
    apply_leg(m, schedule, sweep_rate, variant, false);
    apply_leg(m, schedule, sweep_rate, variant, true);
    return m.finish();
}

LevelDistribution cascade_forward(const LevelDistribution& initial,
                                  const CrossingSchedule& schedule,
                                  double sweep_rate, IcaVariant variant) {
    ExactMixer m{initial, 0.0};
    apply_leg(m, schedule, sweep_rate, variant, false);
    return m.finish();
}

namespace {

// Deterministic 1-d 2-means on (energy, mass): exact optimal split of the
// sorted energies by scanning all prefix boundaries.
double two_means_return(const LevelDistribution& dist,
                        const std::vector<double>& energies, double e_init) {
    const int n = static_cast<int>(dist.size());
    double total = 0.0, esum = 0.0, e2sum = 0.0;
    for (int i = 0; i < n; ++i) {
        total += dist[i];
        esum += dist[i] * energies[i];
        e2sum += dist[i] * energies[i] * energies[i];
    }
    if (total <= 0.0) return 0.0;
    double best_cost = HUGE_VAL;
    int best_split = n; // all in the low cluster
    double wl = 0.0, el = 0.0, e2l = 0.0;
    for (int split = 1; split <= n; ++split) {
        wl += dist[split - 1];
        el += dist[split - 1] * energies[split - 1];
        e2l += dist[split - 1] * energies[split - 1] * energies[split - 1];
        const double wh = total - wl;
        if (wl <= 0.0 || wh <= 0.0) continue;
        const double costl = e2l - el * el / wl;
        const double eh = esum - el, e2h = e2sum - e2l;
        const double costh = e2h - eh * eh / wh;
        if (costl + costh < best_cost) {
            best_cost = costl + costh;
            best_split = split;
        }
    }
    double low = 0.0;
    for (int i = 0; i < best_split; ++i) low += dist[i];
    // The low cluster holds the smaller energies; assign by centroid.
    double el2 = 0.0, wl2 = 0.0;
    for (int i = 0; i < best_split; ++i) {
        el2 += dist[i] * energies[i];
        wl2 += dist[i];
    }
    double eh2 = esum - el2, wh2 = total - wl2;
    const double cl = wl2 > 0 ? el2 / wl2 : energies.front();
    const double chh = wh2 > 0 ? eh2 / wh2 : energies.back();
    const bool init_low = std::fabs(e_init - cl) <= std::fabs(e_init - chh);
    return init_low ? low : total - low;
}

} // namespace

IcaReturnResult ica_return_probability(const std::vector<WeightedLevel>& mixture,
                                       const ModelParams& params,
                                       const SweepProtocol& protocol,
                                       const CrossingSchedule& schedule,
                                       IcaVariant variant,
                                       const SplitOptions& split_opts) {
    LevelDistribution init(params.dim(), 0.0);
    for (const auto& m : mixture) {
        if (m.level < 0 || m.level >= params.dim())
            throw std::invalid_argument("ica_return_probability: level out of range");
        init[m.level] += m.weight;
    }
    const double e_init = mixture_mean_energy(params, protocol.delta_initial, mixture);
    IcaReturnResult out;
    out.final_distribution =
        incoherent_cascade(init, schedule, protocol.rate(), variant);
    const auto energies =
        tridiag_eigenvalues(build_hamiltonian(params, protocol.delta_initial));
    const auto split = split_final_distribution(out.final_distribution, energies,
                                                e_init, split_opts);
    out.separable = split.separable;
    if (split.separable) {
        out.p_return = split.p_return;
    } else {
        out.used_two_means = true;
        out.p_return = two_means_return(out.final_distribution, energies, e_init);
    }
    return out;
}

VariantComparison compare_variants(const ModelParams& params,
                                   const SweepProtocol& protocol,
                                   const CrossingSchedule& schedule,
                                   const PropagationOptions& opts) {
    VariantComparison cmp;
    LevelDistribution init(params.dim(), 0.0);
    init[0] = 1.0;
    const double rate = protocol.rate();
    cmp.standard = cascade_forward(init, schedule, rate, IcaVariant::standard);
    cmp.modified = cascade_forward(init, schedule, rate, IcaVariant::modified);
    cmp.improved = cascade_forward(init, schedule, rate, IcaVariant::improved);

    auto ground =
        QuantumState::eigenstate(params, protocol.delta_initial, 0, -protocol.half_time);
    auto res = propagate_linear(ground, params, protocol.delta_initial,
                                protocol.delta_turn, protocol.half_time, opts);
    cmp.exact = project_adiabatic(res.state, params).probabilities;

    auto l1 = [&](const LevelDistribution& d) {
        double s = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i)
            s += std::fabs(d[i] - cmp.exact[i]);
        return s;
    };
    cmp.l1_standard = l1(cmp.standard);
    cmp.l1_modified = l1(cmp.modified);
    cmp.l1_improved = l1(cmp.improved);
    return cmp;
}

} // namespace bhd
