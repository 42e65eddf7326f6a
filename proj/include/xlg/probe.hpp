#pragma once

// Language-identity probing: a multinomial logistic regression per layer,
// trained on one sampled token representation per sentence.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xlg::probe {

/// One uniformly drawn position in [0, length) per sentence, deterministic in seed.
/// Throws ArgumentError for a zero-length sentence.
std::vector<std::uint32_t> sample_positions(std::span<const std::uint32_t> sentence_lengths, std::uint64_t seed);

/// Row-major feature matrix with one class index per row.
struct LabeledVectors {
    std::size_t dim = 0;
    std::vector<double> features;  // size() * dim
    std::vector<std::uint32_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(features).subspan(i * dim, dim);
    }
    void push_back(std::span<const double> x, std::uint32_t label);
};

struct TrainOptions {
    double l2_strength = 1.0;  // lambda in  mean(CE) + lambda/2 * ||W||^2  (bias unpenalized)
    std::size_t max_iters = 1000;
    double tol = 1e-4;  // stop once max |gradient| <= tol
};

struct ProbeModel {
    std::size_t n_classes = 0;
    std::size_t dim = 0;
    std::vector<double> weights;  // n_classes * dim, row per class
    std::vector<double> bias;     // n_classes
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<double> loss_trace;  // objective at the start and after every accepted step

    /// Class scores W x + b.
    std::vector<double> logits(std::span<const double> x) const;
    /// Argmax of logits; ties go to the lowest class index.
    std::uint32_t predict(std::span<const double> x) const;
};

/// Softmax regression fit by L-BFGS with an Armijo backtracking line search,
/// starting from zero weights. Throws ArgumentError if fewer than two classes
/// are present. Non-convergence is reported through ProbeModel::converged.
ProbeModel train_probe(const LabeledVectors& train, const TrainOptions& options = {});

/// Regularized objective (mean cross-entropy + lambda/2 ||W||^2) at the model's parameters.
double probe_objective(const ProbeModel& model, const LabeledVectors& data, double l2_strength);

/// Fraction of rows whose predicted class equals the label. Throws ArgumentError when empty.
double evaluate_probe(const ProbeModel& model, const LabeledVectors& test);

/// Hidden states of one layer for one language: one row per source sentence.
struct HiddenSet {
    std::size_t dim = 0;
    std::vector<std::string> sample_ids;
    std::vector<std::uint32_t> token_positions;
    std::vector<double> vectors;  // sample_ids.size() * dim
};

struct ProbeData {
    std::int64_t checkpoint_step = 0;
    std::vector<std::string> languages;                                // class order
    std::map<std::uint32_t, std::map<std::string, HiddenSet>> layers;  // layer -> language -> states
};

/// Reads every *.xlga token dump under `dir` (pooling = token). All files must
/// share one checkpoint step. Languages are ordered lexicographically.
ProbeData load_hidden_dir(const std::filesystem::path& dir);

struct SweepOptions {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::uint64_t base_seed = 0;
    double train_fraction = 0.8;
    std::optional<double> l2_strength;  // default: 1 / n_train (inverse regularization 1 on the summed loss)
    std::size_t max_iters = 1000;
    double tol = 1e-4;
    std::size_t workers = 1;
};

struct LayerAccuracy {
    std::uint32_t layer = 0;
    std::vector<double> accuracy;  // one per seed, in seed order
    double mean = 0.0;             // across seeds
    double std = 0.0;              // population std across seeds
    bool converged = true;
};

struct SeedAggregate {
    std::uint64_t seed = 0;
    double mean = 0.0;  // across layers
    double std = 0.0;   // population std across layers
    double first_layer = 0.0;
};

struct ProbeReport {
    std::int64_t checkpoint_step = 0;
    std::vector<std::string> languages;
    std::vector<std::uint64_t> seeds;
    double train_fraction = 0.8;
    std::vector<LayerAccuracy> layers;  // ascending layer index
    std::vector<SeedAggregate> per_seed;
    // Averages of the per-seed aggregates.
    double mean = 0.0;
    double std = 0.0;
    double first_layer = 0.0;
};

/// Per-layer, per-seed probing. Each seed draws its own stratified train/test
/// split (stream "probe/split/seed<s>/<language>"), shared by all layers.
/// Throws CompletenessError if a layer lacks a language or a sentence.
ProbeReport probe_sweep(const ProbeData& data, const SweepOptions& options = {});

std::string report_to_json(const ProbeReport& report);
ProbeReport report_from_json(std::string_view text, std::string_view source = "<probe>");
/// layer,mean,std,seed_<s>... one row per layer.
std::string report_to_csv(const ProbeReport& report);

}  // namespace xlg::probe
