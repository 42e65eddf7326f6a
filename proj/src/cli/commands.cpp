#include "commands.hpp"

#include <set>

#include "xlg/actstore.hpp"
#include "xlg/align.hpp"
#include "xlg/binio.hpp"
#include "xlg/corpus.hpp"
#include "xlg/error.hpp"
#include "xlg/expert.hpp"
#include "xlg/probe.hpp"
#include "xlg/steer.hpp"

namespace xlg::cli {

using ojson = nlohmann::ordered_json;

namespace {

fs::path manifest_path_for_file(const fs::path& out) { return sibling(out, ".manifest.json"); }

std::string topk_json(const expert::ExpertScoreVector& e, const expert::TopKSet& top) {
    ojson j;
    j["concept_id"] = e.concept_id;
    j["language"] = e.language;
    j["checkpoint_step"] = e.checkpoint_step;
    j["k"] = top.k;
    j["members"] = ojson::array();
    for (auto g : top.members) {
        const auto loc = e.layout.locate(g);
        j["members"].push_back({{"neuron", g}, {"layer", loc.layer}, {"index", loc.index}, {"score", e.scores[g]}});
    }
    return j.dump(2) + "\n";
}

}  // namespace

// ---------------------------------------------------------------------------

void run_ingest(const IngestOptions& o, const Common&) {
    RunManifest manifest("ingest");
    manifest.config("catalog", o.catalog.generic_string());
    manifest.config("activations_dir", o.activations_dir.generic_string());
    manifest.input(o.catalog);
    manifest.input(o.activations_dir);

    const auto catalog = corpus::load_catalog(o.catalog);
    const auto files = list_files(o.activations_dir, ".xlga");
    if (files.empty()) throw ValidationError("no .xlga files in " + o.activations_dir.string());

    std::set<std::pair<std::string, std::string>> covered;
    std::optional<actstore::LayerLayout> layout;
    std::optional<std::int64_t> step;
    ojson entries = ojson::array();
    for (const auto& path : files) {
        const actstore::ActivationFile file(path);
        const auto& h = file.header();
        const std::string where = path.string();
        if (h.pooling != actstore::Pooling::max)
            throw ValidationError(where + ": expected max-pooled activations");
        const auto* d = catalog.find(h.concept_id, h.language);
        if (!d)
            throw ValidationError(where + ": concept '" + h.concept_id + "' / language '" + h.language +
                                  "' is not in the catalog");
        if (d->samples.size() != h.n_rows())
            throw ValidationError(where + ": " + std::to_string(h.n_rows()) + " rows, catalog lists " +
                                  std::to_string(d->samples.size()) + " samples");
        for (std::size_t r = 0; r < h.n_rows(); ++r)
            if (d->samples[r].id != h.sample_ids[r] || d->samples[r].label != h.labels[r])
                throw ValidationError(where + ": row " + std::to_string(r) + " (sample '" + h.sample_ids[r] +
                                      "') disagrees with the catalog");
        if (layout && !(*layout == h.layout)) throw ValidationError(where + ": layer layout differs from other files");
        if (step && *step != h.checkpoint_step) throw ValidationError(where + ": checkpoint step differs from other files");
        layout = h.layout;
        step = h.checkpoint_step;
        if (!covered.emplace(h.concept_id, h.language).second)
            throw ValidationError(where + ": duplicate activations for concept '" + h.concept_id + "' / '" +
                                  h.language + "'");
        // Full payload scan for finiteness.
        actstore::ColumnCursor cursor(file);
        actstore::Column col;
        while (cursor.next(col)) {
        }
        entries.push_back({{"file", path.filename().generic_string()},
                           {"concept_id", h.concept_id},
                           {"language", h.language},
                           {"n_rows", h.n_rows()},
                           {"n_pos", h.n_pos()},
                           {"layer_sizes", h.layout.layer_sizes()},
                           {"checkpoint_step", h.checkpoint_step}});
    }
    for (const auto& d : catalog.datasets)
        if (!covered.count({d.concept_id, d.language}))
            throw CompletenessError("no activations for concept '" + d.concept_id + "' in language '" + d.language + "'");

    ojson doc;
    doc["kind"] = "ingest_index";
    doc["concepts"] = catalog.concepts;
    doc["languages"] = catalog.languages;
    doc["checkpoint_step"] = *step;
    doc["layer_sizes"] = layout->layer_sizes();
    doc["files"] = std::move(entries);
    const auto index = o.out / "ingest.json";
    binio::write_file(index, doc.dump(2) + "\n");
    manifest.output(index, o.out);
    manifest.write(o.out / "manifest.json");
}

// ---------------------------------------------------------------------------

void run_experts(const ExpertsOptions& o, const Common& c) {
    if (o.activations.has_value() == o.activations_dir.has_value())
        throw UsageError("experts: give exactly one of --activations or --activations-dir");
    RunManifest manifest("experts");
    manifest.config("top_k", o.top_k ? ojson(*o.top_k) : ojson(nullptr));

    const auto score_one = [&](const fs::path& in, const fs::path& out_file, const fs::path& root) {
        const actstore::ActivationFile file(in);
        const auto scores = expert::score_matrix(file, {c.workers, 0});
        expert::write_experts(scores, out_file);
        manifest.output(out_file, root);
        if (o.top_k) {
            const auto top = expert::top_k(scores, *o.top_k);
            const auto topk_path = sibling(out_file, ".topk.json");
            binio::write_file(topk_path, topk_json(scores, top));
            manifest.output(topk_path, root);
        }
    };

    if (o.activations) {
        manifest.config("activations", o.activations->generic_string());
        manifest.input(*o.activations);
        const auto root = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
        score_one(*o.activations, o.out, root);
        manifest.write(manifest_path_for_file(o.out));
    } else {
        manifest.config("activations_dir", o.activations_dir->generic_string());
        manifest.input(*o.activations_dir);
        const auto files = list_files(*o.activations_dir, ".xlga");
        if (files.empty()) throw ValidationError("no .xlga files in " + o.activations_dir->string());
        for (const auto& f : files) score_one(f, o.out / (f.stem().string() + ".xlge"), o.out);
        manifest.write(o.out / "manifest.json");
    }
}

// ---------------------------------------------------------------------------

void run_align(const AlignOptions& o, const Common& c) {
    RunManifest manifest("align");
    manifest.config("experts_dir", o.experts_dir.generic_string());
    manifest.config("k", o.k);
    manifest.config("metrics", o.metrics);
    manifest.config("mi_k", o.mi_k);
    manifest.config("languages", o.languages);
    manifest.config("per_concept", o.per_concept);
    manifest.config("csv", o.csv);
    manifest.input(o.experts_dir);

    align::ScoreTable table;
    const auto files = list_files(o.experts_dir, ".xlge");
    if (files.empty()) throw ValidationError("no .xlge files in " + o.experts_dir.string());
    for (const auto& f : files) {
        auto e = expert::read_experts(f);
        auto key = std::pair{e.concept_id, e.language};
        if (table.count(key))
            throw ValidationError(f.string() + ": duplicate expert scores for concept '" + key.first + "' / '" +
                                  key.second + "'");
        table.emplace(std::move(key), std::move(e));
    }

    align::AlignOptions opts;
    opts.k = o.k;
    opts.mi_neighbors = o.mi_k;
    opts.metrics.clear();
    for (const auto& m : o.metrics) {
        const auto metric = align::parse_metric(m);
        if (std::find(opts.metrics.begin(), opts.metrics.end(), metric) == opts.metrics.end())
            opts.metrics.push_back(metric);
    }
    opts.languages = o.languages;
    opts.workers = c.workers;
    opts.keep_per_concept = o.per_concept;
    const auto report = align::build_alignment_report(table, opts);

    const auto root = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
    binio::write_file(o.out, align::report_to_json(report));
    manifest.output(o.out, root);
    if (o.csv) {
        for (const auto& [metric, m] : report.matrices) {
            const auto path = sibling(o.out, "." + align::to_string(metric) + ".csv");
            binio::write_file(path, align::matrix_to_csv(report.languages, m));
            manifest.output(path, root);
        }
        if (report.profile) {
            std::string csv = "layer,expert_fraction,cross_lingual_overlap\n";
            for (std::size_t l = 0; l < report.profile->layer_sizes.size(); ++l)
                csv += std::to_string(l) + "," + align::format_double(report.profile->expert_fraction[l]) + "," +
                       align::format_double(report.profile->cross_lingual_overlap[l]) + "\n";
            const auto path = sibling(o.out, ".layer_profile.csv");
            binio::write_file(path, csv);
            manifest.output(path, root);
        }
    }
    manifest.write(manifest_path_for_file(o.out));
}

// ---------------------------------------------------------------------------

void run_probe(const ProbeOptions& o, const Common& c) {
    RunManifest manifest("probe");
    manifest.config("hidden_dir", o.hidden_dir.generic_string());
    manifest.config("seed", c.seed);
    manifest.config("seeds", o.seeds);
    manifest.config("l2", o.l2 ? ojson(*o.l2) : ojson("1/n_train"));
    manifest.config("max_iters", o.max_iters);
    manifest.config("tol", o.tol);
    manifest.config("train_fraction", o.train_fraction);
    manifest.input(o.hidden_dir);

    const auto data = probe::load_hidden_dir(o.hidden_dir);
    probe::SweepOptions opts;
    opts.seeds = o.seeds;
    opts.base_seed = c.seed;
    opts.train_fraction = o.train_fraction;
    opts.l2_strength = o.l2;
    opts.max_iters = o.max_iters;
    opts.tol = o.tol;
    opts.workers = c.workers;
    const auto report = probe::probe_sweep(data, opts);

    const auto root = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
    binio::write_file(o.out, probe::report_to_json(report));
    manifest.output(o.out, root);
    const auto csv = sibling(o.out, ".csv");
    binio::write_file(csv, probe::report_to_csv(report));
    manifest.output(csv, root);
    manifest.write(manifest_path_for_file(o.out));
}

// ---------------------------------------------------------------------------

void run_steer_spec(const SteerSpecOptions& o, const Common&) {
    RunManifest manifest("steer-spec");
    manifest.config("experts", o.experts.generic_string());
    manifest.config("activations", o.activations.generic_string());
    manifest.config("k", o.k);
    manifest.config("p", o.p);
    manifest.config("temperature", o.temperature);
    manifest.config("max_length", o.max_length);
    manifest.config("n_seeds", o.n_seeds);
    manifest.config("hook_point", o.hook_point);
    manifest.input(o.experts);
    manifest.input(o.activations);

    const auto scores = expert::read_experts(o.experts);
    const actstore::ActivationFile file(o.activations);
    const auto& h = file.header();
    if (h.concept_id != scores.concept_id || h.language != scores.language)
        throw ValidationError("activations are for concept '" + h.concept_id + "' / '" + h.language +
                              "' but expert scores are for '" + scores.concept_id + "' / '" + scores.language + "'");
    if (!(h.layout == scores.layout)) throw ValidationError("activations and expert scores have different layouts");

    const auto top = expert::top_k(scores, o.k);
    auto clamps = steer::median_clamp_values(file, top);
    auto spec = steer::make_spec(scores.concept_id, scores.language, scores.checkpoint_step, std::move(clamps),
                                 {o.p, o.temperature, o.max_length, o.n_seeds, "bos"});
    spec.hook_point = o.hook_point;

    const auto root = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
    binio::write_file(o.out, steer::emit_spec(spec));
    manifest.output(o.out, root);
    manifest.write(manifest_path_for_file(o.out));
}

// ---------------------------------------------------------------------------

void run_lang_freq(const LangFreqOptions& o, const Common&) {
    RunManifest manifest("lang-freq");
    manifest.config("records", o.records.generic_string());
    manifest.config("top_n", o.top_n);
    manifest.input(o.records);

    const auto records = steer::parse_records(binio::read_file(o.records), o.records.string());
    if (records.empty()) throw ValidationError(o.records.string() + ": no generation records");
    const auto report = steer::aggregate_language_frequencies(records, o.top_n);

    const auto root = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
    binio::write_file(o.out, steer::report_to_json(report));
    manifest.output(o.out, root);
    manifest.write(manifest_path_for_file(o.out));
}

}  // namespace xlg::cli
