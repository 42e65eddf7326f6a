#include "xlg/steer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <json.hpp>

#include "xlg/error.hpp"

namespace xlg::steer {

using ojson = nlohmann::ordered_json;

double median(std::vector<double> v) {
    if (v.empty()) throw ArgumentError("median of an empty list");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return (lower + upper) / 2.0;
}

std::vector<Clamp> median_clamp_values(const actstore::ColumnSource& source, const expert::TopKSet& neurons) {
    const auto& h = source.header();
    if (h.n_pos() == 0) throw ArgumentError("median clamp values need at least one positive sample");
    const auto n = h.n_rows();
    std::vector<float> column(n);
    std::vector<Clamp> out;
    out.reserve(neurons.members.size());
    for (auto g : neurons.members) {
        const auto loc = h.layout.locate(g);
        source.read_columns(g, 1, column);
        std::vector<double> positives;
        for (std::size_t r = 0; r < n; ++r)
            if (h.labels[r]) positives.push_back(column[r]);
        out.push_back({static_cast<std::uint32_t>(loc.layer), static_cast<std::uint32_t>(loc.index),
                       static_cast<float>(median(std::move(positives)))});
    }
    return out;
}

std::vector<Clamp> median_clamp_values(const actstore::ActivationMatrix& matrix, const expert::TopKSet& neurons) {
    actstore::MatrixColumns columns(matrix);
    return median_clamp_values(columns, neurons);
}

void validate_spec(const InterventionSpec& s) {
    if (s.version != 1) throw ValidationError("unsupported intervention spec version " + std::to_string(s.version));
    if (s.neurons.empty()) throw ValidationError("intervention spec needs at least one neuron");
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const auto& c : s.neurons) {
        if (!seen.emplace(c.layer, c.index).second)
            throw ValidationError("duplicate neuron (layer " + std::to_string(c.layer) + ", index " +
                                  std::to_string(c.index) + ")");
        if (!std::isfinite(c.value))
            throw ValidationError("non-finite clamp value for (layer " + std::to_string(c.layer) + ", index " +
                                  std::to_string(c.index) + ")");
    }
    const auto& g = s.generation;
    if (!(g.nucleus_p > 0.0 && g.nucleus_p <= 1.0)) throw ValidationError("nucleus p must lie in (0, 1]");
    if (!(g.temperature > 0.0 && std::isfinite(g.temperature))) throw ValidationError("temperature must be > 0");
    if (g.max_length < 1) throw ValidationError("max_length must be >= 1");
    if (g.n_seeds < 1) throw ValidationError("n_seeds must be >= 1");
}

InterventionSpec make_spec(std::string concept_id, std::string source_language, std::int64_t checkpoint_step,
                           std::vector<Clamp> clamps, GenerationParams params) {
    InterventionSpec s;
    s.concept_id = std::move(concept_id);
    s.source_language = std::move(source_language);
    s.checkpoint_step = checkpoint_step;
    s.neurons = std::move(clamps);
    s.generation = std::move(params);
    validate_spec(s);
    return s;
}

std::string emit_spec(const InterventionSpec& s) {
    validate_spec(s);
    ojson j;
    j["version"] = s.version;
    j["concept_id"] = s.concept_id;
    j["source_language"] = s.source_language;
    j["checkpoint_step"] = s.checkpoint_step;
    j["hook_point"] = s.hook_point;
    j["neurons"] = ojson::array();
    for (const auto& c : s.neurons)
        j["neurons"].push_back({{"layer", c.layer}, {"index", c.index}, {"value", static_cast<double>(c.value)}});
    j["generation"] = {{"p", s.generation.nucleus_p},
                       {"temperature", s.generation.temperature},
                       {"max_length", s.generation.max_length},
                       {"n_seeds", s.generation.n_seeds},
                       {"prompt", s.generation.prompt}};
    return j.dump(2) + "\n";
}

std::string emit_spec(std::string concept_id, std::string source_language, std::int64_t checkpoint_step,
                      std::vector<Clamp> clamps, GenerationParams params) {
    return emit_spec(make_spec(std::move(concept_id), std::move(source_language), checkpoint_step, std::move(clamps),
                               std::move(params)));
}

InterventionSpec parse_spec(std::string_view text, std::string_view source) {
    const std::string src(source);
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        throw ParseError(src + ": malformed JSON");
    }
    InterventionSpec s;
    try {
        s.version = j.at("version").get<std::uint32_t>();
        s.concept_id = j.at("concept_id").get<std::string>();
        s.source_language = j.at("source_language").get<std::string>();
        s.checkpoint_step = j.at("checkpoint_step").get<std::int64_t>();
        s.hook_point = j.value("hook_point", std::string(kDefaultHookPoint));
        for (const auto& n : j.at("neurons"))
            s.neurons.push_back({n.at("layer").get<std::uint32_t>(), n.at("index").get<std::uint32_t>(),
                                 static_cast<float>(n.at("value").get<double>())});
        GenerationParams defaults;
        if (j.contains("generation")) {
            const auto& g = j["generation"];
            s.generation.nucleus_p = g.value("p", defaults.nucleus_p);
            s.generation.temperature = g.value("temperature", defaults.temperature);
            s.generation.max_length = g.value("max_length", defaults.max_length);
            s.generation.n_seeds = g.value("n_seeds", defaults.n_seeds);
            s.generation.prompt = g.value("prompt", defaults.prompt);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(src + ": schema mismatch: " + e.what());
    }
    try {
        validate_spec(s);
    } catch (const ValidationError& e) {
        throw ValidationError(src + ": " + e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Generation records

std::vector<GenerationRecord> parse_records(std::string_view jsonl, std::string_view source) {
    std::vector<GenerationRecord> out;
    std::set<std::tuple<std::string, std::string, std::int64_t, std::uint64_t>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        auto end = jsonl.find('\n', pos);
        if (end == std::string_view::npos) end = jsonl.size();
        auto line = jsonl.substr(pos, end - pos);
        ++line_no;
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (end == jsonl.size()) break;
            continue;
        }
        const std::string where = std::string(source) + ": line " + std::to_string(line_no);
        GenerationRecord r;
        try {
            const auto j = nlohmann::json::parse(line);
            r.concept_id = j.at("concept_id").get<std::string>();
            r.source_language = j.at("source_language").get<std::string>();
            r.checkpoint_step = j.at("checkpoint_step").get<std::int64_t>();
            r.seed = j.at("seed").get<std::uint64_t>();
            r.detected_language = j.at("detected_language").get<std::string>();
            if (j.contains("text") && !j["text"].is_null()) r.text = j["text"].get<std::string>();
        } catch (const nlohmann::json::parse_error&) {
            throw ParseError(where + ": malformed JSON");
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (r.detected_language.empty()) throw ValidationError(where + ": empty detected_language");
        if (!seen.emplace(r.concept_id, r.source_language, r.checkpoint_step, r.seed).second)
            throw ValidationError(where + ": duplicate record for seed " + std::to_string(r.seed));
        out.push_back(std::move(r));
        if (end == jsonl.size()) break;
    }
    return out;
}

std::string records_to_jsonl(std::span<const GenerationRecord> records) {
    std::string out;
    for (const auto& r : records) {
        ojson j;
        j["concept_id"] = r.concept_id;
        j["source_language"] = r.source_language;
        j["checkpoint_step"] = r.checkpoint_step;
        j["seed"] = r.seed;
        j["detected_language"] = r.detected_language;
        if (r.text) j["text"] = *r.text;
        out += j.dump() + "\n";
    }
    return out;
}

LanguageFrequencyReport aggregate_language_frequencies(std::span<const GenerationRecord> records,
                                                       std::size_t top_n) {
    if (records.empty()) throw ArgumentError("language frequencies need at least one generation record");
    std::map<std::pair<std::int64_t, std::string>, std::map<std::string, std::size_t>> counts;
    for (const auto& r : records) ++counts[{r.checkpoint_step, r.source_language}][r.detected_language];

    LanguageFrequencyReport report;
    report.top_n = top_n;
    for (const auto& [key, per_lang] : counts) {
        LanguageFrequencies g;
        g.checkpoint_step = key.first;
        g.source_language = key.second;
        for (const auto& [_, c] : per_lang) g.n_records += c;
        std::vector<std::pair<std::string, std::size_t>> sorted(per_lang.begin(), per_lang.end());
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        for (const auto& [lang, c] : sorted)
            g.frequencies.emplace_back(lang, static_cast<double>(c) / static_cast<double>(g.n_records));
        report.groups.push_back(std::move(g));
    }
    return report;
}

std::string report_to_json(const LanguageFrequencyReport& report) {
    ojson j;
    j["kind"] = "language_frequency_report";
    j["version"] = 1;
    j["top_n"] = report.top_n;
    j["groups"] = ojson::array();
    for (const auto& g : report.groups) {
        ojson all = ojson::array();
        for (const auto& [lang, f] : g.frequencies) all.push_back({{"language", lang}, {"frequency", f}});
        ojson top = ojson::array();
        for (std::size_t i = 0; i < g.frequencies.size() && i < report.top_n; ++i)
            top.push_back({{"language", g.frequencies[i].first}, {"frequency", g.frequencies[i].second}});
        j["groups"].push_back({{"checkpoint_step", g.checkpoint_step},
                               {"source_language", g.source_language},
                               {"n_records", g.n_records},
                               {"top", std::move(top)},
                               {"frequencies", std::move(all)}});
    }
    return j.dump(2) + "\n";
}

LanguageFrequencyReport report_from_json(std::string_view text, std::string_view source) {
    const std::string src(source);
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        throw ParseError(src + ": malformed JSON");
    }
    LanguageFrequencyReport r;
    try {
        if (j.at("kind") != "language_frequency_report")
            throw ValidationError(src + ": not a language frequency report");
        r.top_n = j.at("top_n").get<std::size_t>();
        for (const auto& g : j.at("groups")) {
            LanguageFrequencies lf;
            lf.checkpoint_step = g.at("checkpoint_step").get<std::int64_t>();
            lf.source_language = g.at("source_language").get<std::string>();
            lf.n_records = g.at("n_records").get<std::size_t>();
            for (const auto& f : g.at("frequencies"))
                lf.frequencies.emplace_back(f.at("language").get<std::string>(), f.at("frequency").get<double>());
            r.groups.push_back(std::move(lf));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(src + ": schema mismatch: " + e.what());
    }
    return r;
}

}  // namespace xlg::steer
