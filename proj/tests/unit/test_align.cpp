#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "xlg/align.hpp"
#include "xlg/error.hpp"
#include "xlg/rng.hpp"

using namespace xlg;

TEST_CASE("pearson matches the textbook formula") {
    const std::vector<double> x{1, 2, 3, 4}, y{1, 2, 3, 5};
    CHECK(align::pearson(x, y) == doctest::Approx(0.9827076298239908).epsilon(1e-12));
    Rng r(1);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a(100), b(100);
        for (std::size_t i = 0; i < 100; ++i) {
            a[i] = r.normal();
            b[i] = 0.3 * a[i] + r.normal();
        }
        CHECK(std::abs(align::pearson(a, b) - testing::pearson_textbook(a, b)) < 1e-12);
    }
    CHECK(align::pearson(x, x) == 1.0);
    const std::vector<double> c{2, 2, 2, 2};
    CHECK_THROWS_AS(align::pearson(x, c), UndefinedMetricError);
    CHECK_THROWS_AS(align::pearson(x, std::vector<double>{1, 2}), ArgumentError);
}

TEST_CASE("Fisher-Z average") {
    const std::vector<double> pair{0.8, 0.2};
    // tanh((atanh 0.8 + atanh 0.2) / 2), evaluated independently in Python
    CHECK(std::abs(align::fisher_z_average(pair) - 0.5721224617320373) < 1e-12);
    const std::vector<double> same{0.37, 0.37, 0.37};
    CHECK(std::abs(align::fisher_z_average(same) - 0.37) < 1e-12);
    align::Diagnostics diag;
    const std::vector<double> edge{1.0, 0.5};
    const double v = align::fisher_z_average(edge, &diag);
    CHECK(std::isfinite(v));
    CHECK(v < 1.0);
    CHECK(diag.warnings.size() == 1);
    CHECK_THROWS_AS(align::fisher_z_average(std::vector<double>{}), ArgumentError);
}

TEST_CASE("overlap and layer overlap") {
    const expert::TopKSet a{4, {0, 5, 6, 9}}, b{4, {9, 1, 5, 2}};
    CHECK(align::overlap_proportion(a, b) == 0.5);
    const actstore::LayerLayout layout({5, 5});
    const auto per = align::layer_overlap(a, b, layout);
    CHECK(per == std::vector<double>{0.0, 0.5});
    CHECK_THROWS_AS(align::overlap_proportion(a, expert::TopKSet{3, {0, 1, 2}}), ArgumentError);
}

namespace {
expert::ExpertScoreVector vec(const std::string& c, const std::string& l, std::vector<double> s) {
    return {c, l, 5, actstore::LayerLayout({2, 2}), std::move(s)};
}

align::ScoreTable small_table() {
    align::ScoreTable t;
    t[{"c1", "aa"}] = vec("c1", "aa", {0.9, 0.1, 0.8, 0.2});
    t[{"c1", "bb"}] = vec("c1", "bb", {0.85, 0.2, 0.7, 0.1});
    t[{"c1", "cc"}] = vec("c1", "cc", {0.1, 0.9, 0.2, 0.7});
    t[{"c2", "aa"}] = vec("c2", "aa", {0.3, 0.4, 0.1, 0.9});
    t[{"c2", "bb"}] = vec("c2", "bb", {0.2, 0.5, 0.1, 0.8});
    t[{"c2", "cc"}] = vec("c2", "cc", {0.6, 0.5, 0.4, 0.3});
    return t;
}
}  // namespace

TEST_CASE("alignment report averages per metric") {
    const auto t = small_table();
    align::AlignOptions o;
    o.k = 2;
    o.mi_neighbors = 1;
    o.keep_per_concept = true;
    const auto r = align::build_alignment_report(t, o);
    CHECK(r.languages == std::vector<std::string>{"aa", "bb", "cc"});
    CHECK(r.concepts == std::vector<std::string>{"c1", "c2"});
    const auto& corr = r.matrices.at(align::Metric::correlation);
    const auto& ov = r.matrices.at(align::Metric::overlap);
    const auto& mi = r.matrices.at(align::Metric::mutual_information);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(corr[i][i] == 1.0);
        CHECK(ov[i][i] == 1.0);
        CHECK(std::isnan(mi[i][i]));
    }
    // Fisher-Z average of the two concepts' correlations.
    const double r1 = align::pearson(t.at({"c1", "aa"}), t.at({"c1", "bb"}));
    const double r2 = align::pearson(t.at({"c2", "aa"}), t.at({"c2", "bb"}));
    CHECK(corr[0][1] == doctest::Approx(std::tanh((std::atanh(r1) + std::atanh(r2)) / 2)).epsilon(1e-14));
    CHECK(corr[1][0] == corr[0][1]);
    // top-2: c1 aa {0,2}, bb {0,2}; c2 aa {3,1}, bb {3,1}
    CHECK(ov[0][1] == 1.0);
    CHECK(r.per_concept.at("c1").at(align::Metric::overlap)[0][2] == 0.0);
    double sum = 0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) sum += ov[i][j];
    CHECK(r.summary.at(align::Metric::overlap) == doctest::Approx(sum / 3));
    REQUIRE(r.profile);
    double layer_sum = 0;
    for (double v : r.profile->cross_lingual_overlap) layer_sum += v;
    CHECK(std::abs(layer_sum - r.summary.at(align::Metric::overlap)) < 1e-12);
    double frac = 0;
    for (double v : r.profile->expert_fraction) frac += v;
    CHECK(frac == doctest::Approx(1.0));
}

TEST_CASE("alignment report JSON round-trips with null MI diagonal") {
    align::AlignOptions o;
    o.k = 2;
    o.mi_neighbors = 1;
    const auto r = align::build_alignment_report(small_table(), o);
    const auto json = align::report_to_json(r);
    CHECK(json.find("null") != std::string::npos);
    const auto back = align::report_from_json(json);
    CHECK(align::report_to_json(back) == json);
    CHECK(back.summary == r.summary);
}

TEST_CASE("alignment report checks completeness and metric selection") {
    auto t = small_table();
    t.erase({"c2", "cc"});
    align::AlignOptions o;
    o.k = 2;
    o.mi_neighbors = 1;
    CHECK_THROWS_AS(align::build_alignment_report(t, o), CompletenessError);
    o.metrics = {align::Metric::overlap};
    o.languages = {"bb", "aa"};
    const auto r = align::build_alignment_report(small_table(), o);
    CHECK(r.languages == std::vector<std::string>{"bb", "aa"});
    CHECK(r.matrices.size() == 1);
    CHECK(align::parse_metric("corr") == align::Metric::correlation);
    CHECK(align::parse_metric("mi") == align::Metric::mutual_information);
    CHECK_THROWS_AS(align::parse_metric("cosine"), Error);
}

TEST_CASE("format_double is shortest round-trip") {
    CHECK(align::format_double(0.1) == "0.1");
    CHECK(align::format_double(1.0) == "1");
    CHECK(align::format_double(NAN) == "nan");
    CHECK(std::stod(align::format_double(1.0 / 3)) == 1.0 / 3);
}

TEST_CASE("matrix csv layout") {
    const align::Matrix m{{1, 0.5}, {0.5, 1}};
    CHECK(align::matrix_to_csv({"aa", "bb"}, m) == "language,aa,bb\naa,1,0.5\nbb,0.5,1\n");
}
