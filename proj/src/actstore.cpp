#include "xlg/actstore.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include <json.hpp>

#include "xlg/binio.hpp"
#include "xlg/error.hpp"
#include "xlg/rng.hpp"

namespace xlg::actstore {

using ojson = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'X', 'L', 'G', 'A'};

}  // namespace

// ---------------------------------------------------------------------------
// LayerLayout

LayerLayout::LayerLayout(std::vector<std::uint32_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.empty()) throw ArgumentError("layer layout needs at least one layer");
    offsets_.reserve(sizes_.size() + 1);
    offsets_.push_back(0);
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
        if (sizes_[l] == 0) throw ArgumentError("layer " + std::to_string(l) + " has zero neurons");
        offsets_.push_back(offsets_.back() + sizes_[l]);
    }
}

LayerLayout::Location LayerLayout::locate(std::uint64_t global) const {
    if (global >= total())
        throw RangeError("neuron index " + std::to_string(global) + " outside [0, " +
                         std::to_string(total()) + ")");
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global);
    const auto layer = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    return {layer, static_cast<std::size_t>(global - offsets_[layer])};
}

std::uint64_t LayerLayout::global(std::size_t layer, std::size_t index) const {
    if (layer >= sizes_.size() || index >= sizes_[layer])
        throw RangeError("(layer " + std::to_string(layer) + ", index " + std::to_string(index) +
                         ") outside layout");
    return offsets_[layer] + index;
}

std::string to_string(Pooling p) { return p == Pooling::max ? "max" : "token"; }

Pooling parse_pooling(std::string_view text) {
    if (text == "max") return Pooling::max;
    if (text == "token") return Pooling::token;
    throw FormatError("unknown pooling '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Header

std::size_t ActivationHeader::n_pos() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void validate_header(const ActivationHeader& h) {
    if (h.layout.layers() == 0) throw ValidationError("header has no layer layout");
    if (h.sample_ids.empty()) throw FormatError("empty matrix: n_rows = 0");
    if (h.labels.size() != h.sample_ids.size())
        throw ValidationError("labels length " + std::to_string(h.labels.size()) +
                              " != sample_ids length " + std::to_string(h.sample_ids.size()));
    for (auto l : h.labels)
        if (l > 1) throw ValidationError("labels must be 0 or 1");
    std::unordered_set<std::string_view> ids;
    for (const auto& id : h.sample_ids)
        if (!ids.insert(id).second) throw ValidationError("duplicate sample_id '" + id + "'");
    if (h.pooling == Pooling::token) {
        if (h.token_positions.size() != h.sample_ids.size())
            throw ValidationError("token dump needs one token_position per row");
        if (!h.layer) throw ValidationError("token dump needs a layer index");
    } else if (!h.token_positions.empty() || h.layer) {
        throw ValidationError("token_positions/layer are only valid for token pooling");
    }
}

std::string encode_header(const ActivationHeader& h) {
    ojson j;
    j["model_id"] = h.model_id;
    j["checkpoint_step"] = h.checkpoint_step;
    j["concept_id"] = h.concept_id;
    j["language"] = h.language;
    j["pooling"] = to_string(h.pooling);
    if (!h.hook_point.empty()) j["hook_point"] = h.hook_point;
    j["layer_sizes"] = h.layout.layer_sizes();
    j["n_rows"] = h.n_rows();
    if (h.layer) j["layer"] = *h.layer;
    j["sample_ids"] = h.sample_ids;
    j["labels"] = h.labels;
    if (!h.token_positions.empty()) j["token_positions"] = h.token_positions;
    return j.dump();
}

ActivationHeader decode_header(std::string_view json, std::string_view source) {
    const auto fail = [&](const std::string& what) -> FormatError {
        return FormatError(std::string(source) + ": header " + what);
    };
    ojson j;
    try {
        j = ojson::parse(json);
    } catch (const nlohmann::json::parse_error&) {
        throw fail("is not valid JSON");
    }
    if (!j.is_object()) throw fail("must be an object");
    ActivationHeader h;
    try {
        h.model_id = j.at("model_id").get<std::string>();
        h.checkpoint_step = j.at("checkpoint_step").get<std::int64_t>();
        h.concept_id = j.at("concept_id").get<std::string>();
        h.language = j.at("language").get<std::string>();
        h.pooling = parse_pooling(j.at("pooling").get<std::string>());
        if (j.contains("hook_point")) h.hook_point = j["hook_point"].get<std::string>();
        h.layout = LayerLayout(j.at("layer_sizes").get<std::vector<std::uint32_t>>());
        const auto n_rows = j.at("n_rows").get<std::uint64_t>();
        if (j.contains("layer")) h.layer = j["layer"].get<std::uint32_t>();
        h.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
        h.labels = j.at("labels").get<std::vector<std::uint8_t>>();
        if (j.contains("token_positions"))
            h.token_positions = j["token_positions"].get<std::vector<std::uint32_t>>();
        if (n_rows != h.sample_ids.size())
            throw fail("n_rows " + std::to_string(n_rows) + " disagrees with " +
                       std::to_string(h.sample_ids.size()) + " sample_ids");
    } catch (const nlohmann::json::exception& e) {
        throw fail(std::string("field error: ") + e.what());
    } catch (const ArgumentError& e) {
        throw fail(e.what());
    }
    try {
        validate_header(h);
    } catch (const ValidationError& e) {
        throw fail(e.what());
    }
    return h;
}

// ---------------------------------------------------------------------------
// In-memory matrices

namespace {

struct Preamble {
    std::uint32_t header_len = 0;
};

Preamble check_preamble(const unsigned char* p, std::size_t available, std::string_view source) {
    if (available < kPreambleBytes) throw LengthError(std::string(source) + ": file shorter than preamble");
    if (std::memcmp(p, kMagic, 4) != 0) throw FormatError(std::string(source) + ": bad magic (expected XLGA)");
    const auto version = binio::get_u32(p + 4);
    if (version != kFormatVersion)
        throw FormatError(std::string(source) + ": unsupported version " + std::to_string(version));
    return {binio::get_u32(p + 8)};
}

void check_finite(std::span<const float> values, std::size_t row_offset, std::uint64_t n_cols,
                  std::string_view source) {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw NonFiniteError(row_offset + i / n_cols, i % n_cols, std::string(source));
}

}  // namespace

void validate_matrix(const ActivationMatrix& m) {
    validate_header(m.header);
    const std::uint64_t expected = m.rows() * m.cols();
    if (m.values.size() != expected)
        throw LengthError("payload has " + std::to_string(m.values.size()) + " values, expected " +
                          std::to_string(expected));
    check_finite(m.values, 0, m.cols(), "");
}

std::string encode_matrix(const ActivationMatrix& m) {
    validate_matrix(m);
    const auto header = encode_header(m.header);
    std::string out;
    out.reserve(kPreambleBytes + header.size() + m.values.size() * sizeof(float));
    out.append(kMagic, 4);
    binio::put_u32(out, kFormatVersion);
    binio::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    binio::put_array<float>(out, m.values);
    return out;
}

ActivationMatrix decode_matrix(std::string_view bytes, std::string_view source) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const auto pre = check_preamble(p, bytes.size(), source);
    if (bytes.size() < kPreambleBytes + pre.header_len)
        throw LengthError(std::string(source) + ": truncated header");
    ActivationMatrix m;
    m.header = decode_header(bytes.substr(kPreambleBytes, pre.header_len), source);
    const std::uint64_t n_values = m.rows() * m.cols();
    const std::uint64_t payload = bytes.size() - kPreambleBytes - pre.header_len;
    if (payload != n_values * sizeof(float))
        throw LengthError(std::string(source) + ": payload is " + std::to_string(payload) +
                          " bytes, header declares " + std::to_string(m.rows()) + " x " +
                          std::to_string(m.cols()) + " float32 (" +
                          std::to_string(n_values * sizeof(float)) + " bytes)");
    m.values.resize(n_values);
    binio::get_array<float>(p + kPreambleBytes + pre.header_len, m.values);
    check_finite(m.values, 0, m.cols(), source);
    return m;
}

ActivationMatrix read_activation_matrix(const std::filesystem::path& path) {
    return decode_matrix(binio::read_file(path), path.string());
}

void write_activation_matrix(const ActivationMatrix& matrix, const std::filesystem::path& path) {
    binio::write_file(path, encode_matrix(matrix));
}

// ---------------------------------------------------------------------------
// Streaming writer

ActivationWriter::ActivationWriter(std::filesystem::path path, ActivationHeader header)
    : path_(std::move(path)), header_(std::move(header)) {
    validate_header(header_);
    tmp_ = path_;
    tmp_ += ".tmp";
    if (path_.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path_.parent_path(), ec);
    }
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open for writing: " + path_.string());
    const auto json = encode_header(header_);
    std::string pre(kMagic, 4);
    binio::put_u32(pre, kFormatVersion);
    binio::put_u32(pre, static_cast<std::uint32_t>(json.size()));
    out_.write(pre.data(), static_cast<std::streamsize>(pre.size()));
    out_.write(json.data(), static_cast<std::streamsize>(json.size()));
}

ActivationWriter::~ActivationWriter() {
    if (!finished_) {
        out_.close();
        std::error_code ec;
        std::filesystem::remove(tmp_, ec);
    }
}

void ActivationWriter::append_row(std::span<const float> row) {
    if (finished_) throw ArgumentError("append_row after finish");
    if (row.size() != header_.n_cols())
        throw ArgumentError("row has " + std::to_string(row.size()) + " values, layout has " +
                            std::to_string(header_.n_cols()));
    if (rows_written_ >= header_.n_rows()) throw LengthError("more rows than the header declares");
    check_finite(row, rows_written_, header_.n_cols(), path_.string());
    std::string bytes;
    binio::put_array<float>(bytes, row);
    out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out_) throw IoError("write failed: " + path_.string());
    ++rows_written_;
}

void ActivationWriter::finish() {
    if (finished_) return;
    if (rows_written_ != header_.n_rows())
        throw LengthError("wrote " + std::to_string(rows_written_) + " rows, header declares " +
                          std::to_string(header_.n_rows()));
    out_.close();
    if (!out_) throw IoError("write failed: " + path_.string());
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw IoError("cannot rename into place: " + path_.string());
    finished_ = true;
}

// ---------------------------------------------------------------------------
// Column access

void MatrixColumns::read_columns(std::uint64_t first, std::size_t count, std::span<float> dst) const {
    const auto n = matrix_->rows();
    const auto m = matrix_->cols();
    if (first + count > m) throw RangeError("column block outside matrix");
    if (dst.size() < count * n) throw ArgumentError("column buffer too small");
    for (std::size_t r = 0; r < n; ++r) {
        const float* row = matrix_->values.data() + r * m + first;
        for (std::size_t c = 0; c < count; ++c) dst[c * n + r] = row[c];
    }
}

ActivationFile::ActivationFile(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
    try {
        unsigned char pre[kPreambleBytes];
        const auto got = ::pread(fd_, pre, kPreambleBytes, 0);
        const auto preamble = check_preamble(pre, got < 0 ? 0 : static_cast<std::size_t>(got), path.string());
        std::string json(preamble.header_len, '\0');
        const auto hgot = ::pread(fd_, json.data(), json.size(), kPreambleBytes);
        if (hgot != static_cast<ssize_t>(json.size()))
            throw LengthError(path.string() + ": truncated header");
        header_ = decode_header(json, path.string());
        payload_offset_ = kPreambleBytes + preamble.header_len;
        const auto size = std::filesystem::file_size(path);
        const auto expected = payload_offset_ + header_.n_rows() * header_.n_cols() * sizeof(float);
        if (size != expected)
            throw LengthError(path.string() + ": file is " + std::to_string(size) +
                              " bytes, header declares " + std::to_string(expected));
    } catch (...) {
        ::close(fd_);
        throw;
    }
}

ActivationFile::~ActivationFile() {
    if (fd_ >= 0) ::close(fd_);
}

void ActivationFile::read_columns(std::uint64_t first, std::size_t count, std::span<float> dst) const {
    const auto n = header_.n_rows();
    const auto m = header_.n_cols();
    if (first + count > m) throw RangeError("column block outside matrix");
    if (dst.size() < count * n) throw ArgumentError("column buffer too small");
    thread_local std::vector<float> row;
    row.resize(count);
    const std::size_t bytes = count * sizeof(float);
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint64_t offset = payload_offset_ + (r * m + first) * sizeof(float);
        std::size_t done = 0;
        auto* raw = reinterpret_cast<char*>(row.data());
        while (done < bytes) {
            const auto got = ::pread(fd_, raw + done, bytes - done, static_cast<off_t>(offset + done));
            if (got < 0) {
                if (errno == EINTR) continue;
                throw IoError(path_.string() + ": read failed: " + std::strerror(errno));
            }
            if (got == 0) throw LengthError(path_.string() + ": unexpected end of payload");
            done += static_cast<std::size_t>(got);
        }
        for (std::size_t c = 0; c < count; ++c) {
            const float v = binio::byteswap_if_big(row[c]);
            if (!std::isfinite(v)) throw NonFiniteError(r, first + c, path_.string());
            dst[c * n + r] = v;
        }
    }
}

std::size_t block_width(std::size_t n_rows, std::size_t budget_bytes) {
    const std::size_t per_column = std::max<std::size_t>(1, n_rows) * sizeof(float);
    return std::max<std::size_t>(1, budget_bytes / per_column);
}

ColumnCursor::ColumnCursor(const ColumnSource& source)
    : ColumnCursor(source, 0, source.header().n_cols()) {}

ColumnCursor::ColumnCursor(const ColumnSource& source, std::uint64_t first, std::uint64_t last,
                           std::size_t block_columns)
    : source_(&source), next_index_(first), last_(last) {
    if (first > last || last > source.header().n_cols())
        throw RangeError("column range outside matrix");
    block_columns_ = block_columns ? block_columns : block_width(source.header().n_rows());
    block_columns_ = static_cast<std::size_t>(
        std::min<std::uint64_t>(block_columns_, std::max<std::uint64_t>(1, last - first)));
    buffer_.resize(block_columns_ * source.header().n_rows());
}

bool ColumnCursor::next(Column& out) {
    if (next_index_ >= last_) return false;
    const auto n = source_->header().n_rows();
    if (next_index_ >= block_first_ + block_count_ || block_count_ == 0) {
        block_first_ = next_index_;
        block_count_ = static_cast<std::size_t>(std::min<std::uint64_t>(block_columns_, last_ - next_index_));
        source_->read_columns(block_first_, block_count_, buffer_);
    }
    const auto offset = static_cast<std::size_t>(next_index_ - block_first_) * n;
    out.index = next_index_;
    out.values = std::span<const float>(buffer_).subspan(offset, n);
    ++next_index_;
    return true;
}

ColumnCursor neuron_column_iter(const ColumnSource& source) { return ColumnCursor(source); }

// ---------------------------------------------------------------------------
// Synthetic data

ActivationMatrix synth_planted_matrix(std::uint64_t seed, const corpus::ConceptDataset& dataset,
                                      const LayerLayout& layout, const PlantedSpec& spec,
                                      std::string model_id, std::int64_t checkpoint_step) {
    if (!(spec.signal > 0.0)) throw ArgumentError("signal must be > 0");
    if (!(spec.noise_sd >= 0.0)) throw ArgumentError("noise_sd must be >= 0");
    const auto m = layout.total();
    if (!spec.planted.empty() && *spec.planted.rbegin() >= m)
        throw RangeError("planted neuron " + std::to_string(*spec.planted.rbegin()) +
                         " outside [0, " + std::to_string(m) + ")");
    ActivationMatrix out;
    auto& h = out.header;
    h.model_id = std::move(model_id);
    h.checkpoint_step = checkpoint_step;
    h.concept_id = dataset.concept_id;
    h.language = dataset.language;
    h.pooling = Pooling::max;
    h.layout = layout;
    for (const auto& s : dataset.samples) {
        h.sample_ids.push_back(s.id);
        h.labels.push_back(s.label);
    }
    validate_header(h);

    const auto n = h.n_rows();
    out.values.resize(n * m);
    Rng rng(seed);
    for (auto& v : out.values) v = static_cast<float>(spec.noise_sd * rng.normal());
    for (std::size_t r = 0; r < n; ++r) {
        if (!h.labels[r]) continue;
        for (auto g : spec.planted) {
            auto& v = out.values[r * m + g];
            v = static_cast<float>(static_cast<double>(v) + spec.signal);
        }
    }
    return out;
}

}  // namespace xlg::actstore
