#include <map>

#include "commands.hpp"
#include "xlg/align.hpp"
#include "xlg/binio.hpp"
#include "xlg/error.hpp"
#include "xlg/probe.hpp"
#include "xlg/steer.hpp"

namespace xlg::cli {

using align::format_double;

void run_report(const ReportOptions& o, const Common&) {
    if (o.inputs.empty()) throw UsageError("report: no input files given");
    RunManifest manifest("report");
    std::vector<std::string> names;
    for (const auto& p : o.inputs) names.push_back(p.generic_string());
    manifest.config("inputs", names);

    std::map<std::int64_t, align::AlignmentReport> alignments;
    std::map<std::int64_t, probe::ProbeReport> probes;
    std::vector<steer::LanguageFrequencyReport> freqs;

    for (const auto& path : o.inputs) {
        manifest.input(path);
        const auto text = binio::read_file(path);
        nlohmann::json head;
        try {
            head = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            throw ValidationError(path.string() + ": not valid JSON");
        }
        const auto kind = head.is_object() && head.contains("kind") && head["kind"].is_string()
                              ? head["kind"].get<std::string>()
                              : std::string();
        if (kind == "alignment_report") {
            auto r = align::report_from_json(text, path.string());
            if (alignments.count(r.checkpoint_step))
                throw ValidationError(path.string() + ": second alignment report for step " +
                                      std::to_string(r.checkpoint_step));
            alignments.emplace(r.checkpoint_step, std::move(r));
        } else if (kind == "probe_report") {
            auto r = probe::report_from_json(text, path.string());
            if (probes.count(r.checkpoint_step))
                throw ValidationError(path.string() + ": second probe report for step " +
                                      std::to_string(r.checkpoint_step));
            probes.emplace(r.checkpoint_step, std::move(r));
        } else if (kind == "language_frequency_report") {
            freqs.push_back(steer::report_from_json(text, path.string()));
        } else {
            throw ValidationError(path.string() + ": unrecognized report kind '" + kind + "'");
        }
    }

    std::vector<fs::path> outputs;
    const auto emit = [&](const std::string& name, const std::string& body) {
        const auto path = o.out / name;
        binio::write_file(path, body);
        outputs.push_back(path);
    };

    if (!alignments.empty()) {
        std::string trajectory = "step,correlation,mutual_information,overlap\n";
        std::string layers = "step,layer,layer_size,expert_fraction,cross_lingual_overlap\n";
        for (const auto& [step, r] : alignments) {
            for (const auto& [metric, m] : r.matrices)
                emit("alignment_" + align::to_string(metric) + "_step" + std::to_string(step) + ".csv",
                     align::matrix_to_csv(r.languages, m));
            trajectory += std::to_string(step);
            for (auto metric : {align::Metric::correlation, align::Metric::mutual_information, align::Metric::overlap}) {
                const auto it = r.summary.find(metric);
                trajectory += "," + (it == r.summary.end() ? std::string() : format_double(it->second));
            }
            trajectory += "\n";
            if (r.profile)
                for (std::size_t l = 0; l < r.profile->layer_sizes.size(); ++l)
                    layers += std::to_string(step) + "," + std::to_string(l) + "," +
                              std::to_string(r.profile->layer_sizes[l]) + "," +
                              format_double(r.profile->expert_fraction[l]) + "," +
                              format_double(r.profile->cross_lingual_overlap[l]) + "\n";
        }
        emit("alignment_trajectory.csv", trajectory);
        emit("layer_profile.csv", layers);
    }

    if (!probes.empty()) {
        std::string trajectory = "step,mean,std,first_layer\n";
        for (const auto& [step, r] : probes)
            trajectory += std::to_string(step) + "," + format_double(r.mean) + "," + format_double(r.std) + "," +
                          format_double(r.first_layer) + "\n";
        emit("probe_trajectory.csv", trajectory);
    }

    if (!freqs.empty()) {
        std::map<std::pair<std::int64_t, std::string>, const steer::LanguageFrequencies*> groups;
        std::map<std::pair<std::int64_t, std::string>, std::size_t> top_n;
        for (const auto& f : freqs)
            for (const auto& g : f.groups) {
                const auto key = std::pair{g.checkpoint_step, g.source_language};
                if (groups.count(key))
                    throw ValidationError("language frequencies for step " + std::to_string(key.first) + " / '" +
                                          key.second + "' appear in more than one input");
                groups.emplace(key, &g);
                top_n.emplace(key, f.top_n);
            }
        std::string csv = "step,source_language,rank,language,frequency\n";
        for (const auto& [key, g] : groups)
            for (std::size_t i = 0; i < g->frequencies.size() && i < top_n.at(key); ++i)
                csv += std::to_string(key.first) + "," + key.second + "," + std::to_string(i + 1) + "," +
                       g->frequencies[i].first + "," + format_double(g->frequencies[i].second) + "\n";
        emit("language_frequency.csv", csv);
    }

    for (const auto& p : outputs) manifest.output(p, o.out);
    manifest.write(o.out / "manifest.json");
}

}  // namespace xlg::cli
