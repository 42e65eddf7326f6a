#include "xlg/expert.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "xlg/binio.hpp"
#include "xlg/error.hpp"
#include "xlg/parallel.hpp"

namespace xlg::expert {

namespace {

void check_labels(std::span<const std::uint8_t> labels, std::size_t n_scores, std::size_t& n_pos) {
    if (labels.size() != n_scores)
        throw ArgumentError("scores and labels differ in length (" + std::to_string(n_scores) +
                            " vs " + std::to_string(labels.size()) + ")");
    n_pos = 0;
    for (auto l : labels) {
        if (l > 1) throw ArgumentError("labels must be 0 or 1");
        n_pos += l;
    }
    if (n_pos == 0 || n_pos == labels.size())
        throw UndefinedMetricError("average precision needs both positive and negative labels");
}

// Accumulates one threshold level. Shared by every AP path so their results
// agree bit for bit.
struct ApAccumulator {
    std::size_t tp = 0;
    std::size_t fp = 0;
    double sum = 0.0;

    void level(std::size_t level_tp, std::size_t level_fp) {
        tp += level_tp;
        fp += level_fp;
        if (level_tp)
            sum += static_cast<double>(level_tp) *
                   (static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    double finish(std::size_t n_pos) const { return sum / static_cast<double>(n_pos); }
};

template <typename T>
double generic_ap(std::span<const T> scores, std::span<const std::uint8_t> labels) {
    std::size_t n_pos = 0;
    check_labels(labels, scores.size(), n_pos);
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!std::isfinite(scores[i]))
            throw DataError("non-finite score at sample " + std::to_string(i));
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    ApAccumulator acc;
    std::size_t i = 0;
    while (i < order.size()) {
        const T level = scores[order[i]];
        std::size_t ltp = 0, lfp = 0;
        for (; i < order.size() && scores[order[i]] == level; ++i) (labels[order[i]] ? ltp : lfp) += 1;
        acc.level(ltp, lfp);
    }
    return acc.finish(n_pos);
}

// Monotone map from float to uint32; -0.0 and +0.0 share a key.
inline std::uint32_t orderable(float f) noexcept {
    if (f == 0.0f) return 0x80000000u;
    const auto bits = std::bit_cast<std::uint32_t>(f);
    return (bits & 0x80000000u) ? ~bits : (bits | 0x80000000u);
}

constexpr int kDigitBits = 11;
constexpr std::size_t kBuckets = std::size_t{1} << kDigitBits;
constexpr int kPasses = 3;  // 33 key bits: 32 score bits plus the label bit

}  // namespace

double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels) {
    return generic_ap(scores, labels);
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    return generic_ap(scores, labels);
}

double ApScorer::operator()(std::span<const float> scores, std::span<const std::uint8_t> labels) {
    std::size_t n_pos = 0;
    check_labels(labels, scores.size(), n_pos);
    const std::size_t n = scores.size();
    keys_.resize(n);
    scratch_.resize(n);

    std::array<std::array<std::uint32_t, kBuckets>, kPasses> hist{};
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(scores[i])) throw DataError("non-finite score at sample " + std::to_string(i));
        const std::uint64_t key = (std::uint64_t{orderable(scores[i])} << 1) | labels[i];
        keys_[i] = key;
        for (int p = 0; p < kPasses; ++p) ++hist[p][(key >> (p * kDigitBits)) & (kBuckets - 1)];
    }
    std::uint64_t* src = keys_.data();
    std::uint64_t* dst = scratch_.data();
    for (int p = 0; p < kPasses; ++p) {
        auto& h = hist[p];
        const int shift = p * kDigitBits;
        if (h[(src[0] >> shift) & (kBuckets - 1)] == n) continue;  // digit constant: pass is a no-op
        std::uint32_t running = 0;
        for (auto& c : h) {
            const auto count = c;
            c = running;
            running += count;
        }
        for (std::size_t i = 0; i < n; ++i) dst[h[(src[i] >> shift) & (kBuckets - 1)]++] = src[i];
        std::swap(src, dst);
    }

    ApAccumulator acc;
    std::size_t i = n;
    while (i > 0) {
        const std::uint64_t level = src[i - 1] >> 1;
        std::size_t ltp = 0, lfp = 0;
        for (; i > 0 && (src[i - 1] >> 1) == level; --i) (src[i - 1] & 1 ? ltp : lfp) += 1;
        acc.level(ltp, lfp);
    }
    return acc.finish(n_pos);
}

ExpertScoreVector score_matrix(const actstore::ColumnSource& source, const ScoreOptions& options) {
    const auto& h = source.header();
    if (h.pooling != actstore::Pooling::max)
        throw ValidationError("expert scoring needs max-pooled activations, got pooling '" +
                              actstore::to_string(h.pooling) + "'");
    const auto n_pos = h.n_pos();
    if (n_pos == 0 || n_pos == h.n_rows())
        throw UndefinedMetricError("concept '" + h.concept_id + "' / '" + h.language +
                                   "': labels need both classes for average precision");

    ExpertScoreVector out;
    out.concept_id = h.concept_id;
    out.language = h.language;
    out.checkpoint_step = h.checkpoint_step;
    out.layout = h.layout;
    out.scores.assign(h.n_cols(), 0.0);

    parallel_ranges(h.n_cols(), options.workers, [&](std::size_t begin, std::size_t end, std::size_t) {
        actstore::ColumnCursor cursor(source, begin, end, options.block_columns);
        ApScorer scorer;
        actstore::Column col;
        while (cursor.next(col)) {
            try {
                out.scores[col.index] = scorer(col.values, h.labels);
            } catch (const DataError& e) {
                throw DataError(std::string(e.what()) + " (neuron " + std::to_string(col.index) + ")");
            }
        }
    });
    return out;
}

ExpertScoreVector score_matrix(const actstore::ActivationMatrix& matrix, const ScoreOptions& options) {
    actstore::MatrixColumns columns(matrix);
    return score_matrix(columns, options);
}

TopKSet top_k(std::span<const double> scores, std::size_t k) {
    if (k < 1 || k > scores.size())
        throw RangeError("top-k needs 1 <= k <= " + std::to_string(scores.size()) + ", got " +
                         std::to_string(k));
    std::vector<std::uint64_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::uint64_t{0});
    const auto better = [&](std::uint64_t a, std::uint64_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    idx.resize(k);
    return {k, std::move(idx)};
}

TopKSet top_k(const ExpertScoreVector& e, std::size_t k) { return top_k(e.scores, k); }

// ---------------------------------------------------------------------------
// XLGE

namespace {
constexpr char kMagic[4] = {'X', 'L', 'G', 'E'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void validate_scores(const ExpertScoreVector& e) {
    if (e.layout.layers() == 0) throw ValidationError("expert scores have no layer layout");
    if (e.scores.size() != e.layout.total())
        throw ValidationError("expert score vector has " + std::to_string(e.scores.size()) +
                              " entries, layout has " + std::to_string(e.layout.total()));
    for (std::size_t g = 0; g < e.scores.size(); ++g)
        if (!(e.scores[g] >= 0.0 && e.scores[g] <= 1.0))
            throw ValidationError("expert score at neuron " + std::to_string(g) + " outside [0, 1]");
}

std::string encode_experts(const ExpertScoreVector& e) {
    validate_scores(e);
    nlohmann::ordered_json j;
    j["concept_id"] = e.concept_id;
    j["language"] = e.language;
    j["checkpoint_step"] = e.checkpoint_step;
    j["layer_sizes"] = e.layout.layer_sizes();
    const auto header = j.dump();
    std::string out(kMagic, 4);
    binio::put_u32(out, kVersion);
    binio::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    binio::put_array<double>(out, e.scores);
    return out;
}

ExpertScoreVector decode_experts(std::string_view bytes, std::string_view source) {
    const std::string src(source);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 12) throw LengthError(src + ": file shorter than preamble");
    if (std::memcmp(p, kMagic, 4) != 0) throw FormatError(src + ": bad magic (expected XLGE)");
    if (binio::get_u32(p + 4) != kVersion) throw FormatError(src + ": unsupported version");
    const auto header_len = binio::get_u32(p + 8);
    if (bytes.size() < 12 + std::uint64_t{header_len}) throw LengthError(src + ": truncated header");
    ExpertScoreVector e;
    try {
        const auto j = nlohmann::json::parse(bytes.substr(12, header_len));
        e.concept_id = j.at("concept_id").get<std::string>();
        e.language = j.at("language").get<std::string>();
        e.checkpoint_step = j.at("checkpoint_step").get<std::int64_t>();
        e.layout = actstore::LayerLayout(j.at("layer_sizes").get<std::vector<std::uint32_t>>());
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(src + ": bad header: " + ex.what());
    } catch (const ArgumentError& ex) {
        throw FormatError(src + ": bad header: " + ex.what());
    }
    const std::uint64_t payload = bytes.size() - 12 - header_len;
    if (payload != e.layout.total() * sizeof(double))
        throw LengthError(src + ": payload is " + std::to_string(payload) + " bytes, expected " +
                          std::to_string(e.layout.total() * sizeof(double)));
    e.scores.resize(e.layout.total());
    binio::get_array<double>(p + 12 + header_len, e.scores);
    try {
        validate_scores(e);
    } catch (const ValidationError& ex) {
        throw DataError(src + ": " + ex.what());
    }
    return e;
}

ExpertScoreVector read_experts(const std::filesystem::path& path) {
    return decode_experts(binio::read_file(path), path.string());
}

void write_experts(const ExpertScoreVector& e, const std::filesystem::path& path) {
    binio::write_file(path, encode_experts(e));
}

}  // namespace xlg::expert
