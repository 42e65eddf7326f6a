#include "oracles.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>

#include <unistd.h>

namespace xlg::testing {

double threshold_sweep_ap(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    std::size_t p = 0;
    for (auto l : labels) p += l;
    if (p == 0) throw std::invalid_argument("no positives");
    std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        std::size_t tp = 0, predicted = 0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (scores[i] >= t) {
                ++predicted;
                tp += labels[i];
            }
        const double recall = static_cast<double>(tp) / static_cast<double>(p);
        const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

double digamma_int(std::size_t n) {
    if (n == 0) throw std::invalid_argument("digamma pole");
    long double h = 0.0L;
    for (std::size_t i = 1; i < n; ++i) h += 1.0L / static_cast<long double>(i);
    return static_cast<double>(h - 0.57721566490153286060651209L);
}

namespace {
std::vector<double> standardize(const std::vector<double>& v) {
    const double sd = pstd_of(v);
    std::vector<double> out(v);
    if (sd > 0)
        for (auto& x : out) x /= sd;
    return out;
}
}  // namespace

double ksg_bruteforce(const std::vector<double>& x0, const std::vector<double>& y0, std::size_t k) {
    const auto x = standardize(x0);
    const auto y = standardize(y0);
    const std::size_t m = x.size();
    double marginal = 0.0;
    std::vector<double> d;
    for (std::size_t i = 0; i < m; ++i) {
        d.clear();
        for (std::size_t j = 0; j < m; ++j)
            if (j != i) d.push_back(std::max(std::fabs(x[i] - x[j]), std::fabs(y[i] - y[j])));
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
        const double eps = d[k - 1];
        std::size_t nx = 0, ny = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            if (eps > 0 ? std::fabs(x[i] - x[j]) < eps : x[i] == x[j]) ++nx;
            if (eps > 0 ? std::fabs(y[i] - y[j]) < eps : y[i] == y[j]) ++ny;
        }
        marginal += digamma_int(nx + 1) + digamma_int(ny + 1);
    }
    const double mi = digamma_int(m) + digamma_int(k) - marginal / static_cast<double>(m);
    return std::max(0.0, mi);
}

double pearson_textbook(const std::vector<double>& x, const std::vector<double>& y) {
    long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
        syy += static_cast<long double>(y[i]) * y[i];
        sxy += static_cast<long double>(x[i]) * y[i];
    }
    return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

double mean_of(const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / v.size());
}

double pstd_of(const std::vector<double>& v) {
    const long double m = mean_of(v);
    long double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return static_cast<double>(std::sqrt(ss / v.size()));
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("xlg-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

}  // namespace xlg::testing
