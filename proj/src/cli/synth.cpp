#include <set>

#include "commands.hpp"
#include "xlg/actstore.hpp"
#include "xlg/binio.hpp"
#include "xlg/corpus.hpp"
#include "xlg/error.hpp"
#include "xlg/probe.hpp"
#include "xlg/rng.hpp"

namespace xlg::cli {

namespace {

std::string two_digits(std::size_t v) { return (v < 10 ? "0" : "") + std::to_string(v); }

std::set<std::uint64_t> choose_planted(std::uint64_t seed, const std::string& concept_id, std::uint64_t begin,
                                       std::uint64_t end, std::size_t count) {
    if (count > end - begin)
        throw ArgumentError("cannot plant " + std::to_string(count) + " neurons in a range of " +
                            std::to_string(end - begin));
    auto rng = Rng::stream(seed, "synth/planted/" + concept_id);
    std::vector<std::uint64_t> pool(end - begin);
    for (std::uint64_t i = 0; i < pool.size(); ++i) pool[i] = begin + i;
    for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    return {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count)};
}

}  // namespace

void run_synth(const SynthOptions& o, const Common& c) {
    if (o.layers < 1 || o.layer_size < 1) throw UsageError("--layers and --layer-size must be >= 1");
    RunManifest manifest("synth");
    manifest.config("seed", c.seed);
    manifest.config("concepts", o.concepts);
    manifest.config("languages", o.languages);
    manifest.config("n_pos", o.n_pos);
    manifest.config("n_neg", o.n_neg);
    manifest.config("layers", o.layers);
    manifest.config("layer_size", o.layer_size);
    manifest.config("planted", o.planted);
    manifest.config("planted_layer", o.planted_layer ? nlohmann::ordered_json(*o.planted_layer) : nullptr);
    manifest.config("signal", o.signal);
    manifest.config("noise_sd", o.noise_sd);
    manifest.config("checkpoint", o.checkpoint);
    manifest.config("probe_layers", o.probe_layers);
    manifest.config("probe_dim", o.probe_dim);
    manifest.config("probe_sentences", o.probe_sentences);
    manifest.config("probe_separable_from", o.probe_separable_from);

    const auto catalog = corpus::synth_catalog({c.seed, o.concepts, o.languages, o.n_pos, o.n_neg});
    const actstore::LayerLayout layout(std::vector<std::uint32_t>(o.layers, static_cast<std::uint32_t>(o.layer_size)));
    if (o.planted_layer && *o.planted_layer >= o.layers) throw UsageError("--planted-layer outside [0, --layers)");

    std::vector<fs::path> outputs;
    const auto catalog_path = o.out / "catalog.json";
    corpus::write_catalog(catalog, catalog_path);
    outputs.push_back(catalog_path);

    nlohmann::ordered_json planted_doc;
    planted_doc["signal"] = o.signal;
    planted_doc["noise_sd"] = o.noise_sd;
    planted_doc["concepts"] = nlohmann::ordered_json::object();
    std::vector<std::set<std::uint64_t>> planted(catalog.concepts.size());
    for (std::size_t ci = 0; ci < catalog.concepts.size(); ++ci) {
        const auto begin = o.planted_layer ? layout.layer_begin(*o.planted_layer) : 0;
        const auto end = o.planted_layer ? layout.layer_end(*o.planted_layer) : layout.total();
        planted[ci] = choose_planted(c.seed, catalog.concepts[ci], begin, end, o.planted);
        planted_doc["concepts"][catalog.concepts[ci]] = std::vector<std::uint64_t>(planted[ci].begin(), planted[ci].end());
    }
    const auto planted_path = o.out / "planted.json";
    binio::write_file(planted_path, planted_doc.dump(2) + "\n");
    outputs.push_back(planted_path);

    for (const auto& d : catalog.datasets) {
        const auto ci = static_cast<std::size_t>(
            std::find(catalog.concepts.begin(), catalog.concepts.end(), d.concept_id) - catalog.concepts.begin());
        const auto matrix_seed = Rng::stream(c.seed, "synth/activations/" + d.concept_id + "/" + d.language).next_u64();
        const auto m = actstore::synth_planted_matrix(matrix_seed, d, layout, {planted[ci], o.signal, o.noise_sd},
                                                      "synthetic", o.checkpoint);
        const auto path = o.out / "activations" / (d.concept_id + "__" + d.language + ".xlga");
        actstore::write_activation_matrix(m, path);
        outputs.push_back(path);
    }

    for (std::size_t layer = 0; layer < o.probe_layers; ++layer) {
        for (const auto& lang : o.languages) {
            actstore::ActivationMatrix m;
            auto& h = m.header;
            h.model_id = "synthetic";
            h.checkpoint_step = o.checkpoint;
            h.concept_id = "";
            h.language = lang;
            h.pooling = actstore::Pooling::token;
            h.layout = actstore::LayerLayout({static_cast<std::uint32_t>(o.probe_dim)});
            h.layer = static_cast<std::uint32_t>(layer);
            auto len_rng = Rng::stream(c.seed, "synth/hidden/lengths/" + lang);
            std::vector<std::uint32_t> lengths;
            for (std::size_t i = 0; i < o.probe_sentences; ++i) {
                h.sample_ids.push_back(lang + "-s" + std::to_string(i));
                h.labels.push_back(0);
                lengths.push_back(static_cast<std::uint32_t>(5 + len_rng.below(26)));
            }
            h.token_positions = probe::sample_positions(
                lengths, Rng::stream(c.seed, "synth/hidden/positions/" + lang).next_u64());

            std::vector<double> center(o.probe_dim, 0.0);
            if (layer >= o.probe_separable_from) {
                auto crng = Rng::stream(c.seed, "synth/hidden/center/" + std::to_string(layer) + "/" + lang);
                for (auto& v : center) v = 3.0 * crng.normal();
            }
            auto noise = Rng::stream(c.seed, "synth/hidden/noise/" + std::to_string(layer) + "/" + lang);
            m.values.reserve(o.probe_sentences * o.probe_dim);
            for (std::size_t i = 0; i < o.probe_sentences; ++i)
                for (std::size_t j = 0; j < o.probe_dim; ++j)
                    m.values.push_back(static_cast<float>(center[j] + noise.normal()));
            const auto path = o.out / "hidden" / ("layer" + two_digits(layer) + "__" + lang + ".xlga");
            actstore::write_activation_matrix(m, path);
            outputs.push_back(path);
        }
    }

    for (const auto& p : outputs) manifest.output(p, o.out);
    manifest.write(o.out / "manifest.json");
}

}  // namespace xlg::cli
