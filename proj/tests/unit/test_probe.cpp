#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "xlg/actstore.hpp"
#include "xlg/error.hpp"
#include "xlg/probe.hpp"
#include "xlg/rng.hpp"

using namespace xlg;

namespace {

probe::LabeledVectors clusters(std::uint64_t seed, std::size_t classes, std::size_t per_class, std::size_t dim,
                               double spread) {
    Rng r(seed);
    probe::LabeledVectors v;
    v.dim = dim;
    std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
    for (auto& c : centers)
        for (auto& x : c) x = 4.0 * r.normal();
    for (std::size_t k = 0; k < classes; ++k)
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<double> x(dim);
            for (std::size_t j = 0; j < dim; ++j) x[j] = centers[k][j] + spread * r.normal();
            v.push_back(x, static_cast<std::uint32_t>(k));
        }
    return v;
}

// Numerical gradient check of the objective around the fitted model.
double finite_difference(const probe::ProbeModel& m, const probe::LabeledVectors& d, double lambda, std::size_t w) {
    auto plus = m, minus = m;
    const double h = 1e-6;
    plus.weights[w] += h;
    minus.weights[w] -= h;
    return (probe::probe_objective(plus, d, lambda) - probe::probe_objective(minus, d, lambda)) / (2 * h);
}

}  // namespace

TEST_CASE("sample_positions is deterministic and in range") {
    const std::vector<std::uint32_t> lengths{1, 5, 30, 2};
    const auto a = probe::sample_positions(lengths, 9);
    CHECK(a == probe::sample_positions(lengths, 9));
    for (std::size_t i = 0; i < lengths.size(); ++i) CHECK(a[i] < lengths[i]);
    CHECK(a[0] == 0);
    CHECK_THROWS_AS(probe::sample_positions(std::vector<std::uint32_t>{3, 0}, 1), ArgumentError);
}

TEST_CASE("probe separates clusters and converges to a stationary point") {
    const auto train = clusters(1, 3, 40, 5, 0.5);
    const auto test = clusters(1, 3, 40, 5, 0.5);
    probe::TrainOptions o;
    o.l2_strength = 0.01;
    o.tol = 1e-7;
    const auto m = probe::train_probe(train, o);
    CHECK(m.converged);
    CHECK(probe::evaluate_probe(m, test) == 1.0);
    for (std::size_t i = 1; i < m.loss_trace.size(); ++i) CHECK(m.loss_trace[i] <= m.loss_trace[i - 1]);
    CHECK(m.loss_trace.front() == doctest::Approx(std::log(3.0)));
    CHECK(m.loss_trace.back() == doctest::Approx(probe::probe_objective(m, train, o.l2_strength)));
    for (std::size_t w : {0, 4, 7, 14}) CHECK(std::abs(finite_difference(m, train, o.l2_strength, w)) < 1e-5);
}

TEST_CASE("stronger regularization shrinks the weights") {
    const auto train = clusters(2, 2, 30, 3, 1.0);
    probe::TrainOptions weak, strong;
    weak.l2_strength = 1e-3;
    strong.l2_strength = 1.0;
    const auto a = probe::train_probe(train, weak);
    const auto b = probe::train_probe(train, strong);
    double na = 0, nb = 0;
    for (double w : a.weights) na += w * w;
    for (double w : b.weights) nb += w * w;
    CHECK(nb < na);
}

TEST_CASE("probe input validation") {
    probe::LabeledVectors one;
    one.dim = 2;
    one.push_back(std::vector<double>{1, 2}, 0);
    one.push_back(std::vector<double>{2, 1}, 0);
    CHECK_THROWS_AS(probe::train_probe(one), ArgumentError);
    probe::LabeledVectors empty;
    empty.dim = 2;
    CHECK_THROWS_AS(probe::evaluate_probe(probe::ProbeModel{}, empty), ArgumentError);
}

namespace {
probe::ProbeData make_data(std::uint64_t seed, std::size_t layers, std::size_t langs, std::size_t n, std::size_t dim,
                           bool separable) {
    probe::ProbeData d;
    d.checkpoint_step = 3;
    Rng r(seed);
    for (std::size_t li = 0; li < langs; ++li) d.languages.push_back("l" + std::to_string(li));
    for (std::size_t layer = 0; layer < layers; ++layer)
        for (const auto& lang : d.languages) {
            probe::HiddenSet h;
            h.dim = dim;
            std::vector<double> center(dim, 0.0);
            if (separable)
                for (auto& c : center) c = 3.0 * r.normal();
            for (std::size_t i = 0; i < n; ++i) {
                h.sample_ids.push_back(lang + "-" + std::to_string(i));
                h.token_positions.push_back(0);
                for (std::size_t j = 0; j < dim; ++j) h.vectors.push_back(center[j] + r.normal());
            }
            d.layers[static_cast<std::uint32_t>(layer)][lang] = std::move(h);
        }
    return d;
}
}  // namespace

TEST_CASE("probe sweep aggregates per seed then averages") {
    const auto d = make_data(5, 3, 3, 40, 6, true);
    probe::SweepOptions o;
    o.seeds = {0, 1, 2, 3};
    const auto r = probe::probe_sweep(d, o);
    REQUIRE(r.layers.size() == 3);
    REQUIRE(r.per_seed.size() == 4);
    std::vector<double> means, stds, firsts;
    for (std::size_t s = 0; s < 4; ++s) {
        std::vector<double> across;
        for (const auto& l : r.layers) across.push_back(l.accuracy[s]);
        means.push_back(testing::mean_of(across));
        stds.push_back(testing::pstd_of(across));
        firsts.push_back(across[0]);
    }
    CHECK(std::abs(r.mean - testing::mean_of(means)) < 1e-12);
    CHECK(std::abs(r.std - testing::mean_of(stds)) < 1e-12);
    CHECK(std::abs(r.first_layer - testing::mean_of(firsts)) < 1e-12);
    for (const auto& l : r.layers) {
        CHECK(std::abs(l.mean - testing::mean_of(l.accuracy)) < 1e-12);
        CHECK(std::abs(l.std - testing::pstd_of(l.accuracy)) < 1e-12);
    }
    o.workers = 4;
    const auto r4 = probe::probe_sweep(d, o);
    CHECK(probe::report_to_json(r4) == probe::report_to_json(r));
}

TEST_CASE("probe report JSON and CSV") {
    const auto d = make_data(6, 2, 2, 20, 3, true);
    const auto r = probe::probe_sweep(d);
    const auto json = probe::report_to_json(r);
    CHECK(probe::report_to_json(probe::report_from_json(json)) == json);
    const auto csv = probe::report_to_csv(r);
    CHECK(csv.rfind("layer,mean,std,seed_0,seed_1,seed_2\n", 0) == 0);
}

TEST_CASE("probe sweep reports missing languages") {
    auto d = make_data(7, 2, 2, 10, 2, true);
    d.layers[1].erase("l1");
    CHECK_THROWS_AS(probe::probe_sweep(d), CompletenessError);
}

TEST_CASE("hidden dumps load from a directory") {
    testing::TempDir dir("hidden");
    for (std::uint32_t layer = 0; layer < 2; ++layer)
        for (const std::string lang : {"bb", "aa"}) {
            actstore::ActivationMatrix m;
            m.header.model_id = "t";
            m.header.checkpoint_step = 11;
            m.header.language = lang;
            m.header.pooling = actstore::Pooling::token;
            m.header.layout = actstore::LayerLayout({3});
            m.header.layer = layer;
            for (int i = 0; i < 4; ++i) {
                m.header.sample_ids.push_back(lang + std::to_string(i));
                m.header.labels.push_back(0);
                m.header.token_positions.push_back(static_cast<std::uint32_t>(i));
                for (int j = 0; j < 3; ++j) m.values.push_back(static_cast<float>(i * 3 + j));
            }
            actstore::write_activation_matrix(m, dir / ("l" + std::to_string(layer) + lang + ".xlga"));
        }
    const auto d = probe::load_hidden_dir(dir.path());
    CHECK(d.checkpoint_step == 11);
    CHECK(d.languages == std::vector<std::string>{"aa", "bb"});
    CHECK(d.layers.size() == 2);
    CHECK(d.layers.at(1).at("bb").vectors[4] == 4.0);
}
