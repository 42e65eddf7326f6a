#include <cmath>

#include "criteria.hpp"
#include "oracles.hpp"
#include "xlg/probe.hpp"
#include "xlg/rng.hpp"

namespace xlg::acceptance {

namespace {

constexpr std::size_t kLanguages = 4;

probe::ProbeData clustered(std::uint64_t seed, std::size_t layers, std::size_t per_language, std::size_t dim,
                           double center_scale) {
    probe::ProbeData d;
    d.checkpoint_step = 1000;
    auto r = Rng::stream(seed, "acceptance/probe/data");
    for (std::size_t li = 0; li < kLanguages; ++li) d.languages.push_back("lang" + std::to_string(li));
    for (std::uint32_t layer = 0; layer < layers; ++layer)
        for (const auto& lang : d.languages) {
            probe::HiddenSet h;
            h.dim = dim;
            std::vector<double> center(dim);
            for (auto& c : center) c = center_scale * r.normal();
            for (std::size_t i = 0; i < per_language; ++i) {
                h.sample_ids.push_back(lang + "/" + std::to_string(i));
                h.token_positions.push_back(static_cast<std::uint32_t>(i % 7));
                for (std::size_t j = 0; j < dim; ++j) h.vectors.push_back(center[j] + r.normal());
            }
            d.layers[layer][lang] = std::move(h);
        }
    return d;
}

// Deals every layer's vectors back to the languages in random order, so the
// language label carries no information about the vector.
probe::ProbeData shuffled_labels(probe::ProbeData d, std::uint64_t seed) {
    auto r = Rng::stream(seed, "acceptance/probe/shuffle");
    for (auto& [layer, per_lang] : d.layers) {
        const std::size_t dim = per_lang.begin()->second.dim;
        std::vector<std::vector<double>> pool;
        for (const auto& [_, h] : per_lang)
            for (std::size_t i = 0; i < h.sample_ids.size(); ++i)
                pool.emplace_back(h.vectors.begin() + static_cast<std::ptrdiff_t>(i * dim),
                                  h.vectors.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
        r.shuffle(pool.begin(), pool.end());
        std::size_t next = 0;
        for (auto& [_, h] : per_lang) {
            h.vectors.clear();
            for (std::size_t i = 0; i < h.sample_ids.size(); ++i, ++next)
                h.vectors.insert(h.vectors.end(), pool[next].begin(), pool[next].end());
        }
    }
    return d;
}

Outcome probe_suites(const Context&) {
    Checks checks;
    probe::SweepOptions opts;
    opts.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

    // Separable clusters.
    const auto separable = clustered(1, 3, 60, 8, 6.0);
    const auto sep = probe::probe_sweep(separable, opts);
    double min_sep = 1.0;
    for (const auto& l : sep.layers)
        for (double a : l.accuracy) min_sep = std::min(min_sep, a);
    checks.require(min_sep == 1.0, "separable clusters: min accuracy " + fmt(min_sep));

    // Label shuffle: chance is 1 / L.
    const auto noise = shuffled_labels(clustered(2, 3, 100, 8, 6.0), 3);
    const auto shuf = probe::probe_sweep(noise, opts);
    const double chance = 1.0 / kLanguages;
    double worst_gap = 0.0;
    for (const auto& l : shuf.layers) worst_gap = std::max(worst_gap, std::abs(l.mean - chance));
    worst_gap = std::max(worst_gap, std::abs(shuf.mean - chance));
    checks.require(worst_gap <= 0.1, "shuffled labels: accuracy " + fmt(chance + worst_gap) + " vs chance " +
                                         fmt(chance) + " +- 0.1");

    // Loss traces over a spread of problems and penalties.
    std::size_t traces = 0, non_monotone = 0, unconverged = 0;
    auto r = Rng::stream(4, "acceptance/probe/traces");
    for (int t = 0; t < 60; ++t) {
        const auto d = t % 2 ? clustered(10 + t, 1, 30, 5, 2.0 * r.uniform()) : shuffled_labels(clustered(10 + t, 1, 30, 5, 3.0), t);
        probe::LabeledVectors train;
        train.dim = 5;
        std::uint32_t cls = 0;
        for (const auto& [_, h] : d.layers.at(0)) {
            for (std::size_t i = 0; i < h.sample_ids.size(); ++i)
                train.push_back(std::span<const double>(h.vectors).subspan(i * 5, 5), cls);
            ++cls;
        }
        probe::TrainOptions o;
        o.l2_strength = std::pow(10.0, -4.0 + 4.0 * r.uniform());
        const auto m = probe::train_probe(train, o);
        ++traces;
        if (!m.converged) ++unconverged;
        for (std::size_t i = 1; i < m.loss_trace.size(); ++i)
            if (m.loss_trace[i] > m.loss_trace[i - 1]) {
                ++non_monotone;
                break;
            }
    }
    checks.require(non_monotone == 0, std::to_string(non_monotone) + " of " + std::to_string(traces) +
                                          " loss traces increased");

    // Aggregates recomputed from the per-layer, per-seed accuracies.
    double worst_agg = 0.0;
    for (const auto* rep : {&sep, &shuf}) {
        std::vector<double> means, stds, firsts;
        for (std::size_t s = 0; s < rep->seeds.size(); ++s) {
            std::vector<double> across;
            for (const auto& l : rep->layers) across.push_back(l.accuracy.at(s));
            means.push_back(testing::mean_of(across));
            stds.push_back(testing::pstd_of(across));
            firsts.push_back(across.front());
        }
        worst_agg = std::max({worst_agg, std::abs(rep->mean - testing::mean_of(means)),
                              std::abs(rep->std - testing::mean_of(stds)),
                              std::abs(rep->first_layer - testing::mean_of(firsts))});
        for (const auto& l : rep->layers)
            worst_agg = std::max({worst_agg, std::abs(l.mean - testing::mean_of(l.accuracy)),
                                  std::abs(l.std - testing::pstd_of(l.accuracy))});
        const auto back = probe::report_from_json(probe::report_to_json(*rep));
        worst_agg = std::max({worst_agg, std::abs(back.mean - rep->mean), std::abs(back.std - rep->std),
                              std::abs(back.first_layer - rep->first_layer)});
    }
    checks.require(worst_agg <= 1e-12, "aggregates differ from recomputation by " + fmt(worst_agg));

    checks.note("separable min accuracy " + fmt(min_sep) + "; shuffled mean " + fmt(shuf.mean) + " (chance " +
                fmt(chance) + ", L=4, 10 seeds); " + std::to_string(traces) + " monotone traces (" +
                std::to_string(unconverged) + " hit max_iters); aggregate error " + fmt(worst_agg));
    return checks.outcome();
}

}  // namespace

std::vector<Criterion> probe_criteria() { return {{"probe-suites", probe_suites}}; }

}  // namespace xlg::acceptance
