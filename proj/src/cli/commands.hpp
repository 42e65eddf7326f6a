#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace xlg::cli {

namespace fs = std::filesystem;

struct Common {
    std::size_t workers = 1;
    std::uint64_t seed = 0;
};

struct SynthOptions {
    fs::path out;
    std::size_t concepts = 5;
    std::vector<std::string> languages{"aa", "bb", "cc"};
    std::size_t n_pos = 100;
    std::size_t n_neg = 1000;
    std::size_t layers = 4;
    std::size_t layer_size = 2048;
    std::size_t planted = 100;
    std::optional<std::size_t> planted_layer;
    double signal = 1.0;
    double noise_sd = 0.1;
    std::int64_t checkpoint = 0;
    // Token-level hidden-state dumps for probing; 0 layers disables them.
    std::size_t probe_layers = 0;
    std::size_t probe_dim = 16;
    std::size_t probe_sentences = 100;
    std::size_t probe_separable_from = 0;
};

struct IngestOptions {
    fs::path catalog;
    fs::path activations_dir;
    fs::path out;
};

struct ExpertsOptions {
    std::optional<fs::path> activations;
    std::optional<fs::path> activations_dir;
    fs::path out;
    std::optional<std::size_t> top_k;
};

struct AlignOptions {
    fs::path experts_dir;
    fs::path out;
    std::size_t k = 500;
    std::vector<std::string> metrics{"corr", "mi", "overlap"};
    std::size_t mi_k = 3;
    std::vector<std::string> languages;
    bool per_concept = false;
    bool csv = false;
};

struct ProbeOptions {
    fs::path hidden_dir;
    fs::path out;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::optional<double> l2;
    std::size_t max_iters = 1000;
    double tol = 1e-4;
    double train_fraction = 0.8;
};

struct SteerSpecOptions {
    fs::path experts;
    fs::path activations;
    fs::path out;
    std::size_t k = 500;
    double p = 0.9;
    double temperature = 0.8;
    std::uint32_t max_length = 64;
    std::uint32_t n_seeds = 100;
    std::string hook_point = "post_activation";
};

struct LangFreqOptions {
    fs::path records;
    fs::path out;
    std::size_t top_n = 10;
};

struct ReportOptions {
    std::vector<fs::path> inputs;
    fs::path out;
};

void run_synth(const SynthOptions& o, const Common& c);
void run_ingest(const IngestOptions& o, const Common& c);
void run_experts(const ExpertsOptions& o, const Common& c);
void run_align(const AlignOptions& o, const Common& c);
void run_probe(const ProbeOptions& o, const Common& c);
void run_steer_spec(const SteerSpecOptions& o, const Common& c);
void run_lang_freq(const LangFreqOptions& o, const Common& c);
void run_report(const ReportOptions& o, const Common& c);

/// Provenance record written next to every command's outputs. Contains no
/// timestamps, worker counts or host data, so identical runs give identical bytes.
class RunManifest {
public:
    explicit RunManifest(std::string command);

    void config(const std::string& key, nlohmann::ordered_json value);
    /// Records a SHA-256 digest for a file, or for every regular file under a directory.
    void input(const fs::path& path);
    /// Records an output file relative to `root`.
    void output(const fs::path& path, const fs::path& root);
    void write(const fs::path& path) const;

private:
    nlohmann::ordered_json doc_;
};

std::string sha256_file(const fs::path& path);

/// Path of a sibling output: "<dir>/<stem><suffix>" for out = "<dir>/<stem>.<ext>".
fs::path sibling(const fs::path& out, const std::string& suffix);

/// Sorted regular files with the given extension directly inside dir.
std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension);

}  // namespace xlg::cli
