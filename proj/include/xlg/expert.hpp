#pragma once

// Expert-neuron scoring: each neuron's pooled activations are treated as
// concept prediction scores and ranked against the concept labels by Average
// Precision.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xlg/actstore.hpp"

namespace xlg::expert {

struct ExpertScoreVector {
    std::string concept_id;
    std::string language;
    std::int64_t checkpoint_step = 0;
    actstore::LayerLayout layout;
    std::vector<double> scores;  // one AP per global neuron index, each in [0, 1]

    bool operator==(const ExpertScoreVector&) const = default;
};

/// k global neuron indices ordered by descending score, ties by ascending index.
struct TopKSet {
    std::size_t k = 0;
    std::vector<std::uint64_t> members;

    bool operator==(const TopKSet&) const = default;
};

/// Step-function Average Precision. Equal scores form a single threshold level:
///   AP = (1/P) * sum over levels (descending) of tp_level * TP / (TP + FP)
/// where TP/FP are cumulative counts down to and including the level.
/// Throws UndefinedMetricError when labels hold a single class, DataError on NaN/Inf.
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels);
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Reusable AP evaluator for float32 columns. Uses an LSD radix sort on the
/// order-preserving bit pattern of each score; gives bit-identical results to
/// average_precision().
class ApScorer {
public:
    double operator()(std::span<const float> scores, std::span<const std::uint8_t> labels);

private:
    std::vector<std::uint64_t> keys_;
    std::vector<std::uint64_t> scratch_;
};

struct ScoreOptions {
    std::size_t workers = 1;
    std::size_t block_columns = 0;  // 0 = actstore::block_width(n_rows)
};

/// AP of every neuron column against the matrix labels. Each worker streams a
/// contiguous index range through one column block, so peak memory is about
/// workers * block_columns * n_rows * 4 bytes plus the M-length result.
ExpertScoreVector score_matrix(const actstore::ColumnSource& source, const ScoreOptions& options = {});
ExpertScoreVector score_matrix(const actstore::ActivationMatrix& matrix, const ScoreOptions& options = {});

/// Throws RangeError unless 1 <= k <= |scores|.
TopKSet top_k(std::span<const double> scores, std::size_t k);
TopKSet top_k(const ExpertScoreVector& e, std::size_t k);

// XLGE container: "XLGE", u32 version = 1, u32 header length, header JSON
// (concept_id, language, checkpoint_step, layer_sizes), then M float64 LE.
void validate_scores(const ExpertScoreVector& e);
std::string encode_experts(const ExpertScoreVector& e);
ExpertScoreVector decode_experts(std::string_view bytes, std::string_view source = "<memory>");
ExpertScoreVector read_experts(const std::filesystem::path& path);
void write_experts(const ExpertScoreVector& e, const std::filesystem::path& path);

}  // namespace xlg::expert
