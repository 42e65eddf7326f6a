#pragma once

// XLGA activation containers.
//
// Layout on disk (all integers little-endian):
//   bytes 0..3   magic "XLGA"
//   bytes 4..7   version (u32, = 1)
//   bytes 8..11  header JSON length in bytes (u32)
//   header JSON  (compact, fixed key order)
//   payload      n_rows * M float32, row-major
//
// Matrices are stored row-major (one row per sentence), but every consumer in
// the engine wants columns (one per neuron). ActivationFile serves column blocks
// with strided reads so a matrix never has to fit in memory.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "xlg/corpus.hpp"

namespace xlg::actstore {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kPreambleBytes = 12;

class LayerLayout {
public:
    struct Location {
        std::size_t layer = 0;
        std::size_t index = 0;
        bool operator==(const Location&) const = default;
    };

    LayerLayout() = default;
    /// Throws ArgumentError on an empty layout or a zero-width layer.
    explicit LayerLayout(std::vector<std::uint32_t> layer_sizes);

    const std::vector<std::uint32_t>& layer_sizes() const noexcept { return sizes_; }
    std::size_t layers() const noexcept { return sizes_.size(); }
    std::uint64_t total() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
    std::uint64_t layer_begin(std::size_t layer) const { return offsets_.at(layer); }
    std::uint64_t layer_end(std::size_t layer) const { return offsets_.at(layer + 1); }

    /// Global neuron index -> (layer, index within layer). Throws RangeError.
    Location locate(std::uint64_t global) const;
    /// Inverse of locate. Throws RangeError.
    std::uint64_t global(std::size_t layer, std::size_t index) const;

    bool operator==(const LayerLayout& o) const { return sizes_ == o.sizes_; }

private:
    std::vector<std::uint32_t> sizes_;
    std::vector<std::uint64_t> offsets_;  // size layers()+1, offsets_[0] = 0
};

enum class Pooling { max, token };

std::string to_string(Pooling p);
Pooling parse_pooling(std::string_view text);

struct ActivationHeader {
    std::string model_id;
    std::int64_t checkpoint_step = 0;
    std::string concept_id;
    std::string language;
    Pooling pooling = Pooling::max;
    std::string hook_point;  // optional; empty when not recorded
    LayerLayout layout;
    std::vector<std::string> sample_ids;
    std::vector<std::uint8_t> labels;
    // Hidden-state dumps (pooling == token) only.
    std::optional<std::uint32_t> layer;
    std::vector<std::uint32_t> token_positions;

    std::size_t n_rows() const noexcept { return sample_ids.size(); }
    std::uint64_t n_cols() const noexcept { return layout.total(); }
    std::size_t n_pos() const;

    bool operator==(const ActivationHeader&) const = default;
};

/// Checks header invariants; throws FormatError (empty matrix) or ValidationError.
void validate_header(const ActivationHeader& header);

/// Compact header JSON as stored in the container.
std::string encode_header(const ActivationHeader& header);
ActivationHeader decode_header(std::string_view json, std::string_view source);

struct ActivationMatrix {
    ActivationHeader header;
    std::vector<float> values;  // n_rows * n_cols, row-major

    std::size_t rows() const noexcept { return header.n_rows(); }
    std::uint64_t cols() const noexcept { return header.n_cols(); }
    float at(std::size_t row, std::uint64_t col) const { return values[row * cols() + col]; }
    std::span<const float> row(std::size_t r) const {
        return std::span<const float>(values).subspan(r * cols(), cols());
    }

    bool operator==(const ActivationMatrix&) const = default;
};

/// Validates header and payload (size, finiteness). Throws NonFiniteError for NaN/Inf.
void validate_matrix(const ActivationMatrix& matrix);

/// Complete container bytes for an in-memory matrix.
std::string encode_matrix(const ActivationMatrix& matrix);
ActivationMatrix decode_matrix(std::string_view bytes, std::string_view source = "<memory>");

ActivationMatrix read_activation_matrix(const std::filesystem::path& path);
void write_activation_matrix(const ActivationMatrix& matrix, const std::filesystem::path& path);

/// Streaming writer for matrices too large for memory. Rows are appended in
/// order; finish() checks the row count and moves the file into place.
class ActivationWriter {
public:
    ActivationWriter(std::filesystem::path path, ActivationHeader header);
    ~ActivationWriter();
    ActivationWriter(const ActivationWriter&) = delete;
    ActivationWriter& operator=(const ActivationWriter&) = delete;

    void append_row(std::span<const float> row);
    void finish();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    ActivationHeader header_;
    std::ofstream out_;
    std::size_t rows_written_ = 0;
    bool finished_ = false;
};

/// Random access to neuron columns. Implementations are safe to call from
/// several threads at once.
class ColumnSource {
public:
    virtual ~ColumnSource() = default;
    virtual const ActivationHeader& header() const = 0;
    /// Writes columns [first, first + count) column-major into dst, which must
    /// hold count * n_rows floats. Throws NonFiniteError on NaN/Inf.
    virtual void read_columns(std::uint64_t first, std::size_t count, std::span<float> dst) const = 0;
};

/// Column view over an in-memory matrix (not owning).
class MatrixColumns final : public ColumnSource {
public:
    explicit MatrixColumns(const ActivationMatrix& matrix) : matrix_(&matrix) {}
    const ActivationHeader& header() const override { return matrix_->header; }
    void read_columns(std::uint64_t first, std::size_t count, std::span<float> dst) const override;

private:
    const ActivationMatrix* matrix_;
};

/// XLGA file opened for strided column reads. Only the header is held in memory.
class ActivationFile final : public ColumnSource {
public:
    explicit ActivationFile(const std::filesystem::path& path);
    ~ActivationFile() override;
    ActivationFile(const ActivationFile&) = delete;
    ActivationFile& operator=(const ActivationFile&) = delete;

    const ActivationHeader& header() const override { return header_; }
    void read_columns(std::uint64_t first, std::size_t count, std::span<float> dst) const override;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    ActivationHeader header_;
    int fd_ = -1;
    std::uint64_t payload_offset_ = 0;
};

/// Number of columns per streamed block so that one block holds at most
/// `budget_bytes` of float32 data (never fewer than one column).
std::size_t block_width(std::size_t n_rows, std::size_t budget_bytes = std::size_t{8} << 20);

/// One streamed neuron column: global index plus its N activations.
struct Column {
    std::uint64_t index = 0;
    std::span<const float> values;
};

/// Yields the columns of [first, last) in ascending global order. Holds one
/// block buffer (block_width(N) columns); spans stay valid until the next call.
class ColumnCursor {
public:
    explicit ColumnCursor(const ColumnSource& source);
    ColumnCursor(const ColumnSource& source, std::uint64_t first, std::uint64_t last,
                 std::size_t block_columns = 0);

    bool next(Column& out);
    std::size_t buffer_bytes() const noexcept { return buffer_.size() * sizeof(float); }

private:
    const ColumnSource* source_;
    std::uint64_t next_index_;
    std::uint64_t last_;
    std::size_t block_columns_;
    std::vector<float> buffer_;
    std::uint64_t block_first_ = 0;
    std::size_t block_count_ = 0;
};

/// Streams every column of a matrix once, ascending.
ColumnCursor neuron_column_iter(const ColumnSource& source);

struct PlantedSpec {
    std::set<std::uint64_t> planted;  // global neuron indices
    double signal = 1.0;
    double noise_sd = 0.1;
};

/// Synthetic matrix for one dataset: every cell is noise_sd * N(0,1); columns in
/// `planted` add signal * label. Deterministic in seed.
ActivationMatrix synth_planted_matrix(std::uint64_t seed, const corpus::ConceptDataset& dataset,
                                      const LayerLayout& layout, const PlantedSpec& spec,
                                      std::string model_id = "synthetic",
                                      std::int64_t checkpoint_step = 0);

}  // namespace xlg::actstore
