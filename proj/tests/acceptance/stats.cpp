#include <cmath>

#include "criteria.hpp"
#include "oracles.hpp"
#include "xlg/align.hpp"
#include "xlg/rng.hpp"

namespace xlg::acceptance {

namespace {

Outcome fisher_z(const Context&) {
    Checks checks;
    Rng rng(99);
    double worst_identity = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const double r = 2.0 * rng.uniform() - 1.0;
        const std::vector<double> same(1 + rng.below(12), r);
        worst_identity = std::max(worst_identity, std::abs(align::fisher_z_average(same) - r));
    }
    checks.require(worst_identity <= 1e-12, "identical-list identity off by " + fmt(worst_identity));

    // Closed form evaluated in long double here and in Python (0.5721224617320373).
    const long double closed = std::tanh((std::atanh(0.8L) + std::atanh(0.2L)) / 2.0L);
    const double got = align::fisher_z_average(std::vector<double>{0.8, 0.2});
    checks.require(std::abs(got - static_cast<double>(closed)) <= 1e-5,
                   "[0.8, 0.2] gave " + fmt(got, 10) + ", closed form " + fmt(static_cast<double>(closed), 10));
    checks.require(std::abs(static_cast<double>(closed) - 0.5721224617320373) < 1e-15,
                   "long double closed form disagrees with the Python value");

    std::size_t outside = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> rs(2 + rng.below(20));
        for (auto& r : rs) r = 1.998 * rng.uniform() - 0.999;
        if (std::adjacent_find(rs.begin(), rs.end(), std::not_equal_to<>()) == rs.end()) rs[0] = -rs[0] + 0.0001;
        const double v = align::fisher_z_average(rs);
        const auto [lo, hi] = std::minmax_element(rs.begin(), rs.end());
        if (!(v > *lo && v < *hi)) ++outside;
    }
    checks.require(outside == 0, std::to_string(outside) + " of 1000 averages not strictly inside (min, max)");
    checks.note("identity max error " + fmt(worst_identity) + "; [0.8, 0.2] -> " + fmt(got, 10) +
                " (closed form " + fmt(static_cast<double>(closed), 10) +
                "; the 0.57236 literal sits " + fmt(std::abs(0.57236 - static_cast<double>(closed)), 3) +
                " from it, so the formula is the reference); 1000/1000 strictly inside");
    return checks.outcome();
}

void gaussian_pair(std::uint64_t seed, std::size_t m, double rho, std::vector<double>& x, std::vector<double>& y) {
    auto r = Rng::stream(seed, "acceptance/ksg");
    x.resize(m);
    y.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        x[i] = r.normal();
        y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * r.normal();
    }
}

Outcome ksg(const Context&) {
    Checks checks;
    const double rho = 0.8, truth = -0.5 * std::log(1 - rho * rho);
    checks.require(std::abs(truth - 0.5108) < 1e-4, "analytic MI " + fmt(truth) + " is not 0.5108");
    double sum = 0.0, worst_indep = 0.0;
    bool symmetric = true;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::vector<double> x, y;
        gaussian_pair(seed, 4096, rho, x, y);
        const double mi = align::mutual_information_knn(x, y, 3);
        sum += mi;
        symmetric = symmetric && mi == align::mutual_information_knn(y, x, 3);
        if (seed == 0) {
            const double brute = testing::ksg_bruteforce(x, y, 3);
            checks.require(std::abs(mi - brute) < 1e-9,
                           "engine " + fmt(mi, 12) + " vs brute-force " + fmt(brute, 12));
        }
        std::vector<double> a, b;
        gaussian_pair(1000 + seed, 4096, 0.0, a, b);
        const double indep = align::mutual_information_knn(a, b, 3);
        worst_indep = std::max(worst_indep, indep);
        symmetric = symmetric && indep == align::mutual_information_knn(b, a, 3);
    }
    const double mean = sum / 10.0;
    checks.require(std::abs(mean - 0.5108) <= 0.07, "mean MI " + fmt(mean) + " outside 0.5108 +- 0.07");
    checks.require(worst_indep <= 0.05, "independent MI " + fmt(worst_indep) + " > 0.05");
    checks.require(symmetric, "MI(x, y) != MI(y, x)");
    checks.note("rho=0.8 mean " + fmt(mean) + " (truth " + fmt(truth) + "), max independent " + fmt(worst_indep) +
                ", symmetric, matches brute force");
    return checks.outcome();
}

}  // namespace

std::vector<Criterion> stats_criteria() { return {{"fisher-z", fisher_z}, {"ksg-mutual-information", ksg}}; }

}  // namespace xlg::acceptance
