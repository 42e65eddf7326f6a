#include "xlg/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "xlg/error.hpp"

namespace xlg::cli {

namespace {

std::string error_kind(const Error& e) {
    if (dynamic_cast<const ParseError*>(&e)) return "parse";
    if (dynamic_cast<const ValidationError*>(&e)) return "validation";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    if (dynamic_cast<const LengthError*>(&e)) return "length";
    if (dynamic_cast<const DataError*>(&e)) return "data";
    if (dynamic_cast<const RangeError*>(&e)) return "range";
    if (dynamic_cast<const ArgumentError*>(&e)) return "argument";
    if (dynamic_cast<const UndefinedMetricError*>(&e)) return "undefined-metric";
    if (dynamic_cast<const CompletenessError*>(&e)) return "completeness";
    if (dynamic_cast<const IoError*>(&e)) return "io";
    return "error";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"xlg: cross-lingual expert-neuron analytics"};
    app.name("xlg");
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string("xlg ") + kToolVersion);
    app.set_config("--config", "", "key = value configuration file; command-line flags take precedence");

    Common common;
    // XLG_WORKERS is read by hand below: CLI11 drops env values that fail validation.
    auto* workers_opt = app.add_option("--workers", common.workers,
                                       "Worker threads (results do not depend on this); default $XLG_WORKERS or 1")
                            ->check(CLI::PositiveNumber);
    app.add_option("--seed", common.seed, "Root seed for all named random streams");

    SynthOptions synth;
    auto* s = app.add_subcommand("synth", "Generate a deterministic synthetic catalog with planted experts");
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--concepts", synth.concepts)->check(CLI::PositiveNumber);
    s->add_option("--languages", synth.languages)->delimiter(',');
    s->add_option("--n-pos", synth.n_pos)->check(CLI::PositiveNumber);
    s->add_option("--n-neg", synth.n_neg)->check(CLI::PositiveNumber);
    s->add_option("--layers", synth.layers)->check(CLI::PositiveNumber);
    s->add_option("--layer-size", synth.layer_size)->check(CLI::PositiveNumber);
    s->add_option("--planted", synth.planted, "Planted expert neurons per concept, shared across languages");
    s->add_option("--planted-layer", synth.planted_layer, "Restrict planted neurons to one layer");
    s->add_option("--signal", synth.signal)->check(CLI::PositiveNumber);
    s->add_option("--noise-sd", synth.noise_sd)->check(CLI::NonNegativeNumber);
    s->add_option("--checkpoint", synth.checkpoint);
    s->add_option("--probe-layers", synth.probe_layers, "Hidden-state dump layers (0 = none)");
    s->add_option("--probe-dim", synth.probe_dim)->check(CLI::PositiveNumber);
    s->add_option("--probe-sentences", synth.probe_sentences)->check(CLI::Range(2, 1 << 20));
    s->add_option("--probe-separable-from", synth.probe_separable_from,
                  "First layer whose language clusters are separated");

    IngestOptions ingest;
    auto* in = app.add_subcommand("ingest", "Validate activation files against a concept catalog");
    in->add_option("--catalog", ingest.catalog)->required()->check(CLI::ExistingFile);
    in->add_option("--activations-dir", ingest.activations_dir)->required()->check(CLI::ExistingDirectory);
    in->add_option("--out", ingest.out, "Output directory")->required();

    ExpertsOptions experts;
    auto* ex = app.add_subcommand("experts", "Average-precision expert scores per neuron");
    ex->add_option("--activations", experts.activations, "XLGA file")->check(CLI::ExistingFile);
    ex->add_option("--activations-dir", experts.activations_dir, "Directory of XLGA files")
        ->check(CLI::ExistingDirectory);
    ex->add_option("--out", experts.out, "XLGE file (or directory with --activations-dir)")->required();
    ex->add_option("--top-k", experts.top_k, "Also write the top-k neurons as JSON")->check(CLI::PositiveNumber);

    AlignOptions align_opts;
    auto* al = app.add_subcommand("align", "Cross-lingual alignment report");
    al->add_option("--experts-dir", align_opts.experts_dir)->required()->check(CLI::ExistingDirectory);
    al->add_option("--out", align_opts.out, "Report JSON")->required();
    al->add_option("--k", align_opts.k)->check(CLI::PositiveNumber);
    al->add_option("--metrics", align_opts.metrics)
        ->delimiter(',')
        ->check(CLI::IsMember({"corr", "correlation", "mi", "mutual_information", "overlap"}));
    al->add_option("--mi-k", align_opts.mi_k, "Neighbours for the KSG estimator")->check(CLI::PositiveNumber);
    al->add_option("--languages", align_opts.languages, "Languages to include, in report order")->delimiter(',');
    al->add_flag("--per-concept", align_opts.per_concept, "Keep per-concept matrices");
    al->add_flag("--csv", align_opts.csv, "Write one CSV per metric next to the report");

    ProbeOptions probe_opts;
    auto* pr = app.add_subcommand("probe", "Language-identity probing across layers");
    pr->add_option("--hidden-dir", probe_opts.hidden_dir)->required()->check(CLI::ExistingDirectory);
    pr->add_option("--out", probe_opts.out, "Report JSON")->required();
    pr->add_option("--seeds", probe_opts.seeds)->delimiter(',');
    pr->add_option("--l2", probe_opts.l2, "L2 strength on mean cross-entropy (default 1/n_train)")
        ->check(CLI::NonNegativeNumber);
    pr->add_option("--max-iters", probe_opts.max_iters)->check(CLI::PositiveNumber);
    pr->add_option("--tol", probe_opts.tol)->check(CLI::PositiveNumber);
    pr->add_option("--train-fraction", probe_opts.train_fraction)->check(CLI::Range(0.0, 1.0));

    SteerSpecOptions steer_opts;
    auto* st = app.add_subcommand("steer-spec", "Median-clamp intervention spec for steered generation");
    st->add_option("--experts", steer_opts.experts)->required()->check(CLI::ExistingFile);
    st->add_option("--activations", steer_opts.activations)->required()->check(CLI::ExistingFile);
    st->add_option("--out", steer_opts.out, "Spec JSON")->required();
    st->add_option("--k", steer_opts.k)->check(CLI::PositiveNumber);
    st->add_option("--p", steer_opts.p, "Nucleus sampling mass")->check(CLI::Range(0.0, 1.0));
    st->add_option("--temperature", steer_opts.temperature)->check(CLI::PositiveNumber);
    st->add_option("--max-length", steer_opts.max_length)->check(CLI::PositiveNumber);
    st->add_option("--n-seeds", steer_opts.n_seeds)->check(CLI::PositiveNumber);
    st->add_option("--hook-point", steer_opts.hook_point, "Adapter hook name recorded in the intervention spec");

    LangFreqOptions freq_opts;
    auto* lf = app.add_subcommand("lang-freq", "Detected-language frequencies of steered generations");
    lf->add_option("--records", freq_opts.records, "GenerationRecord JSONL")->required()->check(CLI::ExistingFile);
    lf->add_option("--out", freq_opts.out, "Report JSON")->required();
    lf->add_option("--top-n", freq_opts.top_n)->check(CLI::PositiveNumber);

    ReportOptions report_opts;
    auto* rp = app.add_subcommand("report", "Consolidate report JSONs into figure CSVs");
    rp->add_option("--inputs,inputs", report_opts.inputs, "align/probe/lang-freq JSON files")->delimiter(',');
    rp->add_option("--out", report_opts.out, "Output directory")->required();

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    if (args.empty()) argv.push_back("xlg");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << "xlg " << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "xlg: usage error: " << e.what() << "\n";
        return 2;
    }

    if (workers_opt->count() == 0) {
        if (const char* env = std::getenv("XLG_WORKERS"); env && *env) {
            const std::string_view text(env);
            std::size_t value = 0;
            const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc() || end != text.data() + text.size() || value < 1) {
                err << "xlg: usage error: XLG_WORKERS must be a positive integer, got '" << text << "'\n";
                return 2;
            }
            common.workers = value;
        }
    }

    try {
        if (s->parsed()) run_synth(synth, common);
        else if (in->parsed()) run_ingest(ingest, common);
        else if (ex->parsed()) run_experts(experts, common);
        else if (al->parsed()) run_align(align_opts, common);
        else if (pr->parsed()) run_probe(probe_opts, common);
        else if (st->parsed()) run_steer_spec(steer_opts, common);
        else if (lf->parsed()) run_lang_freq(freq_opts, common);
        else if (rp->parsed()) run_report(report_opts, common);
    } catch (const UsageError& e) {
        err << "xlg: usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "xlg: error[" << error_kind(e) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "xlg: error[internal]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace xlg::cli
