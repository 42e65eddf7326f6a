#pragma once

// Concept catalogs: which sentences (by opaque id) are positive or negative
// examples of a concept, per language. Sentence text never enters the engine.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xlg::corpus {

struct Sample {
    std::string id;
    std::uint8_t label = 0;  // 1 = sentence contains the concept

    bool operator==(const Sample&) const = default;
};

struct ConceptDataset {
    std::string concept_id;  // opaque sense key, e.g. "earthquake-1_11_00"
    std::string language;    // free-form tag, matched by exact equality
    std::vector<Sample> samples;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;

    bool operator==(const ConceptDataset&) const = default;
};

struct ConceptCatalog {
    bool parallel = false;
    std::vector<std::string> concepts;   // manifest order
    std::vector<std::string> languages;  // first-seen order across concepts
    std::vector<ConceptDataset> datasets;

    const ConceptDataset* find(std::string_view concept_id, std::string_view language) const;
    /// Throws CompletenessError when the cell is missing.
    const ConceptDataset& at(std::string_view concept_id, std::string_view language) const;

    bool operator==(const ConceptCatalog&) const = default;
};

/// Recomputes n_pos/n_neg and checks every catalog invariant. Throws ValidationError.
void validate(ConceptCatalog& catalog);

/// Parses manifest text; `source` names the input in error messages.
ConceptCatalog parse_catalog(std::string_view text, std::string_view source = "<manifest>");
ConceptCatalog load_catalog(const std::filesystem::path& path);

/// Canonical manifest bytes (two-space indented JSON, trailing newline).
std::string to_manifest(const ConceptCatalog& catalog);
void write_catalog(const ConceptCatalog& catalog, const std::filesystem::path& path);

struct SynthCatalogParams {
    std::uint64_t seed = 0;
    std::size_t n_concepts = 1;
    std::vector<std::string> languages;
    std::size_t n_pos = 1;
    std::size_t n_neg = 1;
};

/// Deterministic parallel catalog: every language of a concept shares one id set.
ConceptCatalog synth_catalog(const SynthCatalogParams& params);

}  // namespace xlg::corpus
