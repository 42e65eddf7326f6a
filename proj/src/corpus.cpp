#include "xlg/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "xlg/binio.hpp"
#include "xlg/error.hpp"
#include "xlg/rng.hpp"

namespace xlg::corpus {

using ojson = nlohmann::ordered_json;

const ConceptDataset* ConceptCatalog::find(std::string_view concept_id,
                                           std::string_view language) const {
    for (const auto& d : datasets)
        if (d.concept_id == concept_id && d.language == language) return &d;
    return nullptr;
}

const ConceptDataset& ConceptCatalog::at(std::string_view concept_id,
                                         std::string_view language) const {
    if (const auto* d = find(concept_id, language)) return *d;
    throw CompletenessError("catalog has no dataset for concept '" + std::string(concept_id) +
                            "' in language '" + std::string(language) + "'");
}

namespace {

std::string cell_name(const ConceptDataset& d) {
    return "concept '" + d.concept_id + "' / language '" + d.language + "'";
}

std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

[[noreturn]] void field_error(std::string_view source, const std::string& pointer,
                              const std::string& what) {
    throw ParseError(std::string(source) + ": field " + pointer + ": " + what);
}

}  // namespace

void validate(ConceptCatalog& catalog) {
    std::set<std::string> seen_concepts;
    for (const auto& c : catalog.concepts) {
        if (c.empty()) throw ValidationError("empty concept_id");
        if (!seen_concepts.insert(c).second)
            throw ValidationError("duplicate concept_id '" + c + "'");
    }
    std::set<std::pair<std::string, std::string>> cells;
    for (auto& d : catalog.datasets) {
        if (!seen_concepts.count(d.concept_id))
            throw ValidationError(cell_name(d) + ": concept not listed in catalog");
        if (std::find(catalog.languages.begin(), catalog.languages.end(), d.language) ==
            catalog.languages.end())
            throw ValidationError(cell_name(d) + ": language not listed in catalog");
        if (d.language.empty()) throw ValidationError(cell_name(d) + ": empty language tag");
        if (!cells.emplace(d.concept_id, d.language).second)
            throw ValidationError(cell_name(d) + ": duplicate dataset");
        std::unordered_set<std::string_view> ids;
        d.n_pos = d.n_neg = 0;
        for (const auto& s : d.samples) {
            if (s.label > 1) throw ValidationError(cell_name(d) + ": label must be 0 or 1");
            if (!ids.insert(s.id).second)
                throw ValidationError(cell_name(d) + ": duplicate sample_id '" + s.id + "'");
            (s.label ? d.n_pos : d.n_neg) += 1;
        }
        if (d.n_pos == 0) throw ValidationError(cell_name(d) + ": no positive samples");
        if (d.n_neg == 0) throw ValidationError(cell_name(d) + ": no negative samples");
    }
    if (catalog.parallel) {
        for (const auto& c : catalog.concepts) {
            const ConceptDataset* reference = nullptr;
            std::set<std::string_view> ref_ids;
            for (const auto& d : catalog.datasets) {
                if (d.concept_id != c) continue;
                std::set<std::string_view> ids;
                for (const auto& s : d.samples) ids.insert(s.id);
                if (!reference) {
                    reference = &d;
                    ref_ids = std::move(ids);
                } else if (ids != ref_ids) {
                    throw ValidationError(cell_name(d) +
                                          ": parallel catalog but sample_ids differ from language '" +
                                          reference->language + "'");
                }
            }
        }
    }
}

ConceptCatalog parse_catalog(std::string_view text, std::string_view source) {
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF)
        throw ParseError(std::string(source) + ": line 1: byte-order mark not allowed");

    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ParseError(std::string(source) + ": line " + std::to_string(line) + ", column " +
                         std::to_string(col) + ": malformed JSON");
    }

    if (!doc.is_object()) field_error(source, "/", "manifest must be a JSON object");
    if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1)
        field_error(source, "/version", "expected integer 1");
    if (!doc.contains("parallel") || !doc["parallel"].is_boolean())
        field_error(source, "/parallel", "expected boolean");
    if (!doc.contains("concepts") || !doc["concepts"].is_array())
        field_error(source, "/concepts", "expected array");

    ConceptCatalog catalog;
    catalog.parallel = doc["parallel"].get<bool>();
    const auto& concepts = doc["concepts"];
    for (std::size_t ci = 0; ci < concepts.size(); ++ci) {
        const std::string cptr = "/concepts/" + std::to_string(ci);
        const auto& c = concepts[ci];
        if (!c.is_object()) field_error(source, cptr, "expected object");
        if (!c.contains("concept_id") || !c["concept_id"].is_string())
            field_error(source, cptr + "/concept_id", "expected string");
        if (!c.contains("per_language") || !c["per_language"].is_object())
            field_error(source, cptr + "/per_language", "expected object");
        const auto concept_id = c["concept_id"].get<std::string>();
        catalog.concepts.push_back(concept_id);
        for (const auto& [language, entry] : c["per_language"].items()) {
            const std::string lptr = cptr + "/per_language/" + language;
            if (!entry.is_object() || !entry.contains("samples") || !entry["samples"].is_array())
                field_error(source, lptr + "/samples", "expected array");
            ConceptDataset d;
            d.concept_id = concept_id;
            d.language = language;
            const auto& samples = entry["samples"];
            d.samples.reserve(samples.size());
            for (std::size_t si = 0; si < samples.size(); ++si) {
                const std::string sptr = lptr + "/samples/" + std::to_string(si);
                const auto& s = samples[si];
                if (!s.is_object()) field_error(source, sptr, "expected object");
                if (!s.contains("id") || !s["id"].is_string())
                    field_error(source, sptr + "/id", "expected string");
                if (!s.contains("label") || !s["label"].is_number_integer() ||
                    (s["label"] != 0 && s["label"] != 1))
                    field_error(source, sptr + "/label", "expected 0 or 1");
                d.samples.push_back({s["id"].get<std::string>(),
                                     static_cast<std::uint8_t>(s["label"].get<int>())});
            }
            if (std::find(catalog.languages.begin(), catalog.languages.end(), language) ==
                catalog.languages.end())
                catalog.languages.push_back(language);
            catalog.datasets.push_back(std::move(d));
        }
    }
    try {
        validate(catalog);
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(source) + ": " + e.what());
    }
    return catalog;
}

ConceptCatalog load_catalog(const std::filesystem::path& path) {
    return parse_catalog(binio::read_file(path), path.string());
}

std::string to_manifest(const ConceptCatalog& catalog) {
    ojson doc;
    doc["version"] = 1;
    doc["parallel"] = catalog.parallel;
    doc["concepts"] = ojson::array();
    for (const auto& c : catalog.concepts) {
        ojson entry;
        entry["concept_id"] = c;
        entry["per_language"] = ojson::object();
        for (const auto& d : catalog.datasets) {
            if (d.concept_id != c) continue;
            ojson samples = ojson::array();
            for (const auto& s : d.samples) samples.push_back({{"id", s.id}, {"label", s.label}});
            entry["per_language"][d.language] = {{"samples", std::move(samples)}};
        }
        doc["concepts"].push_back(std::move(entry));
    }
    return doc.dump(2) + "\n";
}

void write_catalog(const ConceptCatalog& catalog, const std::filesystem::path& path) {
    binio::write_file(path, to_manifest(catalog));
}

ConceptCatalog synth_catalog(const SynthCatalogParams& p) {
    if (p.n_concepts < 1 || p.languages.empty() || p.n_pos < 1 || p.n_neg < 1)
        throw ArgumentError("synth_catalog: all counts must be >= 1 and languages non-empty");
    ConceptCatalog catalog;
    catalog.parallel = true;
    for (const auto& l : p.languages) {
        if (std::find(catalog.languages.begin(), catalog.languages.end(), l) !=
            catalog.languages.end())
            throw ArgumentError("synth_catalog: duplicate language '" + l + "'");
        catalog.languages.push_back(l);
    }
    for (std::size_t ci = 0; ci < p.n_concepts; ++ci) {
        char name[32];
        std::snprintf(name, sizeof name, "synth-%03zu-1_00_00", ci);
        catalog.concepts.emplace_back(name);

        auto id_rng = Rng::stream(p.seed, "corpus/ids/" + std::to_string(ci));
        std::vector<Sample> samples;
        std::unordered_set<std::string> used;
        const std::size_t total = p.n_pos + p.n_neg;
        samples.reserve(total);
        while (samples.size() < total) {
            char id[24];
            std::snprintf(id, sizeof id, "s%016llx",
                          static_cast<unsigned long long>(id_rng.next_u64()));
            if (!used.insert(id).second) continue;
            samples.push_back({id, static_cast<std::uint8_t>(samples.size() < p.n_pos ? 1 : 0)});
        }
        Rng::stream(p.seed, "corpus/order/" + std::to_string(ci)).shuffle(samples.begin(), samples.end());
        for (const auto& l : p.languages)
            catalog.datasets.push_back({catalog.concepts.back(), l, samples, 0, 0});
    }
    validate(catalog);
    return catalog;
}

}  // namespace xlg::corpus
