#pragma once

// Neuron clamping specs for steered generation, and aggregation of the
// language-detection results that come back from the generation harness.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xlg/actstore.hpp"
#include "xlg/expert.hpp"

namespace xlg::steer {

struct Clamp {
    std::uint32_t layer = 0;
    std::uint32_t index = 0;  // within layer
    float value = 0.0f;

    bool operator==(const Clamp&) const = default;
};

/// Median pooled activation of each selected neuron over label = 1 rows (mean
/// of the two central values for an even count), in the order of `neurons`.
/// Throws ArgumentError when the matrix has no positive rows.
std::vector<Clamp> median_clamp_values(const actstore::ColumnSource& source, const expert::TopKSet& neurons);
std::vector<Clamp> median_clamp_values(const actstore::ActivationMatrix& matrix, const expert::TopKSet& neurons);

/// Median of a non-empty list (even count -> mean of the central pair).
double median(std::vector<double> values);

struct GenerationParams {
    double nucleus_p = 0.9;
    double temperature = 0.8;
    std::uint32_t max_length = 64;
    std::uint32_t n_seeds = 100;
    std::string prompt = "bos";  // generation starts from the beginning-of-sequence token only

    bool operator==(const GenerationParams&) const = default;
};

inline constexpr const char* kDefaultHookPoint = "post_activation";

struct InterventionSpec {
    std::uint32_t version = 1;
    std::string concept_id;
    std::string source_language;
    std::int64_t checkpoint_step = 0;
    std::string hook_point = kDefaultHookPoint;
    std::vector<Clamp> neurons;
    GenerationParams generation;

    bool operator==(const InterventionSpec&) const = default;
};

/// Throws ValidationError on empty or duplicate neurons, non-finite values or
/// out-of-range generation parameters.
void validate_spec(const InterventionSpec& spec);

InterventionSpec make_spec(std::string concept_id, std::string source_language, std::int64_t checkpoint_step,
                           std::vector<Clamp> clamps, GenerationParams params = {});

/// Deterministic JSON bytes for a validated spec.
std::string emit_spec(const InterventionSpec& spec);
std::string emit_spec(std::string concept_id, std::string source_language, std::int64_t checkpoint_step,
                      std::vector<Clamp> clamps, GenerationParams params = {});
InterventionSpec parse_spec(std::string_view text, std::string_view source = "<spec>");

inline constexpr const char* kUnknownLanguage = "unknown";

struct GenerationRecord {
    std::string concept_id;
    std::string source_language;
    std::int64_t checkpoint_step = 0;
    std::uint64_t seed = 0;
    std::string detected_language;  // "unknown" when detection failed
    std::optional<std::string> text;

    bool operator==(const GenerationRecord&) const = default;
};

/// One JSON object per line; blank lines are skipped. Errors carry the line number.
/// Throws ValidationError when a (spec, seed) pair repeats.
std::vector<GenerationRecord> parse_records(std::string_view jsonl, std::string_view source = "<records>");
std::string records_to_jsonl(std::span<const GenerationRecord> records);

struct LanguageFrequencies {
    std::int64_t checkpoint_step = 0;
    std::string source_language;
    std::size_t n_records = 0;
    // Every detected label, by descending frequency then label. Sums to 1.
    std::vector<std::pair<std::string, double>> frequencies;
};

struct LanguageFrequencyReport {
    std::size_t top_n = 10;
    std::vector<LanguageFrequencies> groups;  // ordered by (checkpoint_step, source_language)
};

/// Relative frequency of each detected language per (checkpoint, source language).
/// Throws ArgumentError for an empty record list.
LanguageFrequencyReport aggregate_language_frequencies(std::span<const GenerationRecord> records,
                                                       std::size_t top_n = 10);

std::string report_to_json(const LanguageFrequencyReport& report);
LanguageFrequencyReport report_from_json(std::string_view text, std::string_view source = "<freq>");

}  // namespace xlg::steer
