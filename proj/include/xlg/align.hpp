#pragma once

// Cross-lingual alignment of expert score vectors.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xlg/actstore.hpp"
#include "xlg/expert.hpp"

namespace xlg::align {

/// Collects non-fatal notices (e.g. clamped correlations) in emission order.
struct Diagnostics {
    std::vector<std::string> warnings;
};

/// Pearson correlation with float64 accumulation, clamped to [-1, 1].
/// Throws UndefinedMetricError if either vector is constant.
double pearson(std::span<const double> x, std::span<const double> y);
double pearson(const expert::ExpertScoreVector& a, const expert::ExpertScoreVector& b);

/// tanh(mean(atanh(r))). Inputs with |r| >= 1 are clamped to +-(1 - 1e-12)
/// and reported through `diag`. Throws ArgumentError on an empty list.
double fisher_z_average(std::span<const double> rs, Diagnostics* diag = nullptr);

inline constexpr double kFisherClamp = 1.0 - 1e-12;

/// Kraskov-Stoegbauer-Grassberger estimator (variant 1), in nats, clamped at 0.
/// Each variable is divided by its population standard deviation first; the
/// joint space uses the max norm. Marginal counts include points strictly
/// closer than the k-th joint neighbour distance. Deterministic, no jitter.
/// Throws ArgumentError when x.size() <= k or sizes differ.
double mutual_information_knn(std::span<const double> x, std::span<const double> y, std::size_t k = 3);

/// |s1 ∩ s2| / k. Throws ArgumentError when the k differ.
double overlap_proportion(const expert::TopKSet& s1, const expert::TopKSet& s2);

/// Per-layer |S1_l ∩ S2_l| / k, where S_l restricts the global set to layer l.
/// Sums to overlap_proportion(s1, s2).
std::vector<double> layer_overlap(const expert::TopKSet& s1, const expert::TopKSet& s2,
                                  const actstore::LayerLayout& layout);

using ScoreTable = std::map<std::pair<std::string, std::string>, expert::ExpertScoreVector>;  // (concept, language)
using TopKTable = std::map<std::pair<std::string, std::string>, expert::TopKSet>;

struct LayerProfile {
    std::int64_t checkpoint_step = 0;
    std::size_t k = 0;
    std::vector<std::uint32_t> layer_sizes;
    std::vector<double> expert_fraction;        // sums to 1
    std::vector<double> cross_lingual_overlap;  // sums to the mean global overlap
    std::size_t language_pairs = 0;             // (concept, pair) cells averaged

    bool operator==(const LayerProfile&) const = default;
};

/// Layer-wise expert distribution and per-layer cross-lingual overlap.
/// Throws ArgumentError when sets disagree on k or reference neurons outside `layout`.
LayerProfile layer_profile(const TopKTable& top_sets, const actstore::LayerLayout& layout);

enum class Metric { correlation, mutual_information, overlap };

std::string to_string(Metric m);
Metric parse_metric(std::string_view text);

using Matrix = std::vector<std::vector<double>>;  // L x L, row-major

struct AlignOptions {
    std::size_t k = 500;
    std::size_t mi_neighbors = 3;
    std::vector<Metric> metrics{Metric::correlation, Metric::mutual_information, Metric::overlap};
    std::vector<std::string> languages;  // selection and order; empty = all tags, sorted
    std::size_t workers = 1;
    bool keep_per_concept = false;
};

struct AlignmentReport {
    std::int64_t checkpoint_step = 0;
    std::size_t k = 0;
    std::size_t mi_neighbors = 3;
    std::vector<std::string> languages;
    std::vector<std::string> concepts;
    // Present only for requested metrics. MI diagonal is NaN (not estimated).
    std::map<Metric, Matrix> matrices;
    // Averages over all concepts and unordered language pairs (Fisher-Z for correlation).
    std::map<Metric, double> summary;
    std::optional<LayerProfile> profile;
    std::map<std::string, std::map<Metric, Matrix>> per_concept;
    std::vector<std::string> warnings;
};

/// Averages pairwise metrics across concepts: Fisher-Z for correlation,
/// arithmetic mean for MI and overlap. Self-pairs are excluded from averages;
/// the correlation and overlap diagonals are fixed at 1.
/// Throws CompletenessError for a missing (concept, language) cell.
AlignmentReport build_alignment_report(const ScoreTable& vectors, const AlignOptions& options);

/// Report JSON (kind "alignment_report"). Deterministic bytes.
std::string report_to_json(const AlignmentReport& report);
AlignmentReport report_from_json(std::string_view text, std::string_view source = "<report>");

/// CSV for one metric: header "language,<l1>,<l2>,...", one row per language.
std::string matrix_to_csv(const std::vector<std::string>& languages, const Matrix& m);

/// Shortest round-trip decimal form; "nan" for NaN.
std::string format_double(double v);

}  // namespace xlg::align
