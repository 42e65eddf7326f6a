#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "xlg/align.hpp"
#include "xlg/error.hpp"

namespace xlg::align {

namespace {

// Divides by the population standard deviation (left unchanged when it is 0).
// Moments are summed over the sorted values so the result does not depend on
// the order of the observations.
std::vector<double> unit_scale(std::span<const double> v) {
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double x : sorted) sum += x;
    const double mean = sum / static_cast<double>(sorted.size());
    double ss = 0.0;
    for (double x : sorted) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(sorted.size()));
    std::vector<double> out(v.begin(), v.end());
    if (sd > 0.0)
        for (auto& x : out) x /= sd;
    return out;
}

// Number of j != i with |v_j - v_i| <= radius, using the sorted marginal.
std::size_t count_within(const std::vector<double>& sorted, double value, double radius) {
    const auto within = [&](double a) { return std::fabs(a - value) <= radius; };
    const auto n = sorted.size();
    auto lo = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), value - radius) - sorted.begin());
    while (lo > 0 && within(sorted[lo - 1])) --lo;
    while (lo < n && sorted[lo] < value && !within(sorted[lo])) ++lo;
    auto hi = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), value + radius) - sorted.begin());
    while (hi < n && within(sorted[hi])) ++hi;
    while (hi > lo && sorted[hi - 1] > value && !within(sorted[hi - 1])) --hi;
    return hi - lo - 1;  // exclude the point itself
}

// Sum of digamma(n + 1) over counts, accumulated by ascending n so the value
// is independent of observation order.
double digamma_sum(const std::vector<std::size_t>& counts) {
    std::vector<std::size_t> occurrences(counts.size() + 1, 0);
    for (auto c : counts) ++occurrences[c];
    double sum = 0.0;
    for (std::size_t n = 0; n < occurrences.size(); ++n)
        if (occurrences[n])
            sum += static_cast<double>(occurrences[n]) * boost::math::digamma(static_cast<double>(n + 1));
    return sum;
}

}  // namespace

double mutual_information_knn(std::span<const double> x, std::span<const double> y, std::size_t k) {
    if (x.size() != y.size()) throw ArgumentError("mutual information needs paired samples of equal length");
    if (k < 1) throw ArgumentError("mutual information needs k >= 1");
    const std::size_t m = x.size();
    if (m <= k)
        throw ArgumentError("mutual information needs more than k = " + std::to_string(k) +
                            " samples, got " + std::to_string(m));
    for (std::size_t i = 0; i < m; ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw ArgumentError("non-finite sample at index " + std::to_string(i));

    const auto xs = unit_scale(x);
    const auto ys = unit_scale(y);

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return xs[a] != xs[b] ? xs[a] < xs[b] : a < b;
    });

    // k-th nearest neighbour distance in the joint (max-norm) space. Walk
    // outwards along x; stop once the x gap alone exceeds the current k-th best.
    std::vector<double> eps(m);
    std::priority_queue<double> best;
    for (std::size_t p = 0; p < m; ++p) {
        const std::size_t i = order[p];
        best = {};
        std::size_t left = p, right = p + 1;
        while (true) {
            const bool has_left = left > 0;
            const bool has_right = right < m;
            if (!has_left && !has_right) break;
            const double dl = has_left ? xs[i] - xs[order[left - 1]] : INFINITY;
            const double dr = has_right ? xs[order[right]] - xs[i] : INFINITY;
            const bool take_left = dl <= dr;
            const double dx = take_left ? dl : dr;
            if (best.size() == k && dx >= best.top()) break;
            const std::size_t j = take_left ? order[--left] : order[right++];
            const double d = std::max(dx, std::fabs(ys[j] - ys[i]));
            if (best.size() < k) {
                best.push(d);
            } else if (d < best.top()) {
                best.pop();
                best.push(d);
            }
        }
        eps[i] = best.top();
    }

    std::vector<double> sx(xs), sy(ys);
    std::sort(sx.begin(), sx.end());
    std::sort(sy.begin(), sy.end());
    std::vector<std::size_t> nx(m), ny(m);
    for (std::size_t i = 0; i < m; ++i) {
        // Strictly inside eps; for eps = 0 this degenerates to exact duplicates.
        const double radius = eps[i] > 0.0 ? std::nextafter(eps[i], 0.0) : 0.0;
        nx[i] = count_within(sx, xs[i], radius);
        ny[i] = count_within(sy, ys[i], radius);
    }

    const double md = static_cast<double>(m);
    const double constant = boost::math::digamma(md) + boost::math::digamma(static_cast<double>(k));
    const double marginal = digamma_sum(nx) / md + digamma_sum(ny) / md;
    return std::max(0.0, constant - marginal);
}

}  // namespace xlg::align
