#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "oracles.hpp"
#include "xlg/actstore.hpp"
#include "xlg/binio.hpp"
#include "xlg/error.hpp"

using namespace xlg;
using actstore::LayerLayout;

TEST_CASE("layer layout maps global indices both ways") {
    const LayerLayout l({3, 5, 2});
    CHECK(l.total() == 10);
    CHECK(l.locate(0) == LayerLayout::Location{0, 0});
    CHECK(l.locate(3) == LayerLayout::Location{1, 0});
    CHECK(l.locate(9) == LayerLayout::Location{2, 1});
    for (std::uint64_t g = 0; g < 10; ++g) {
        const auto loc = l.locate(g);
        CHECK(l.global(loc.layer, loc.index) == g);
    }
    CHECK_THROWS_AS(l.locate(10), RangeError);
    CHECK_THROWS_AS(l.global(1, 5), RangeError);
    CHECK_THROWS_AS(LayerLayout(std::vector<std::uint32_t>{}), ArgumentError);
    CHECK_THROWS_AS(LayerLayout({2, 0}), ArgumentError);
}

TEST_CASE("XLGA encode/decode round-trips bit-exactly") {
    auto m = testing::gaussian_matrix(1, 6, 2, {4, 3});
    m.values[0] = -0.0f;
    m.values[1] = std::numeric_limits<float>::denorm_min();
    m.header.hook_point = "post_activation";
    const auto bytes = actstore::encode_matrix(m);
    CHECK(bytes.substr(0, 4) == "XLGA");
    const auto back = actstore::decode_matrix(bytes);
    CHECK(back.header == m.header);
    REQUIRE(back.values.size() == m.values.size());
    CHECK(std::memcmp(back.values.data(), m.values.data(), m.values.size() * 4) == 0);
    CHECK(actstore::encode_matrix(back) == bytes);
}

TEST_CASE("XLGA rejects damaged containers") {
    const auto m = testing::gaussian_matrix(2, 4, 2, {3});
    const auto bytes = actstore::encode_matrix(m);
    CHECK_THROWS_AS(actstore::decode_matrix(bytes.substr(0, 8)), LengthError);
    CHECK_THROWS_AS(actstore::decode_matrix(bytes.substr(0, bytes.size() - 4)), LengthError);
    auto bad_magic = bytes;
    bad_magic[0] = 'Y';
    CHECK_THROWS_AS(actstore::decode_matrix(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(actstore::decode_matrix(bad_version), FormatError);
    auto nan = m;
    nan.values[5] = std::nanf("");
    CHECK_THROWS_AS(actstore::validate_matrix(nan), NonFiniteError);
}

TEST_CASE("empty matrix is a format error") {
    auto m = testing::gaussian_matrix(2, 1, 1, {3});
    m.header.sample_ids.clear();
    m.header.labels.clear();
    m.values.clear();
    CHECK_THROWS_AS(actstore::validate_header(m.header), FormatError);
}

TEST_CASE("token dumps carry layer and positions") {
    auto m = testing::gaussian_matrix(3, 3, 0, {4});
    m.header.pooling = actstore::Pooling::token;
    CHECK_THROWS_AS(actstore::validate_header(m.header), ValidationError);
    m.header.layer = 2;
    m.header.token_positions = {0, 4, 1};
    CHECK_NOTHROW(actstore::validate_header(m.header));
    CHECK(actstore::decode_matrix(actstore::encode_matrix(m)) == m);
}

TEST_CASE("column sources agree with the row-major payload") {
    testing::TempDir dir("actstore");
    const auto m = testing::gaussian_matrix(4, 9, 3, {5, 6});
    actstore::write_activation_matrix(m, dir / "m.xlga");
    actstore::ActivationFile file(dir / "m.xlga");
    actstore::MatrixColumns mem(m);
    CHECK(file.header() == m.header);
    std::vector<float> a(4 * 9), b(4 * 9);
    file.read_columns(3, 4, a);
    mem.read_columns(3, 4, b);
    CHECK(a == b);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t r = 0; r < 9; ++r) CHECK(a[c * 9 + r] == m.at(r, 3 + c));
    CHECK_THROWS_AS(file.read_columns(9, 3, a), RangeError);

    for (std::size_t block : {1, 2, 7, 64}) {
        actstore::ColumnCursor cur(file, 2, 10, block);
        actstore::Column col;
        std::uint64_t expect = 2;
        while (cur.next(col)) {
            REQUIRE(col.index == expect);
            for (std::size_t r = 0; r < 9; ++r) CHECK(col.values[r] == m.at(r, col.index));
            ++expect;
        }
        CHECK(expect == 10);
    }
}

TEST_CASE("streamed writer matches in-memory encoding") {
    testing::TempDir dir("writer");
    const auto m = testing::gaussian_matrix(5, 7, 2, {3, 3});
    {
        actstore::ActivationWriter w(dir / "w.xlga", m.header);
        for (std::size_t r = 0; r < m.rows(); ++r) w.append_row(m.row(r));
        w.finish();
    }
    CHECK(binio::read_file(dir / "w.xlga") == actstore::encode_matrix(m));
    actstore::ActivationWriter w2(dir / "short.xlga", m.header);
    w2.append_row(m.row(0));
    CHECK_THROWS_AS(w2.finish(), LengthError);
}

TEST_CASE("file reader reports non-finite cells by row and neuron") {
    testing::TempDir dir("nonfinite");
    auto m = testing::gaussian_matrix(6, 4, 2, {3});
    auto bytes = actstore::encode_matrix(m);
    const float inf = std::numeric_limits<float>::infinity();
    const auto offset = bytes.size() - (4 * 3 - (2 * 3 + 1)) * 4;  // row 2, column 1
    std::memcpy(bytes.data() + offset, &inf, 4);
    binio::write_file(dir / "bad.xlga", bytes);
    actstore::ActivationFile f(dir / "bad.xlga");
    std::vector<float> buf(4 * 3);
    try {
        f.read_columns(0, 3, buf);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(e.row() == 2);
        CHECK(e.neuron() == 1);
    }
    CHECK_THROWS_AS(actstore::read_activation_matrix(dir / "bad.xlga"), NonFiniteError);
}

TEST_CASE("block width respects the budget") {
    CHECK(actstore::block_width(2000) == (std::size_t{8} << 20) / 8000);
    CHECK(actstore::block_width(std::size_t{1} << 30) == 1);
}

TEST_CASE("planted synthesis adds signal only to planted columns") {
    corpus::ConceptDataset d{"c", "xx", {{"a", 1}, {"b", 0}, {"c", 1}}, 2, 1};
    const auto m = actstore::synth_planted_matrix(9, d, LayerLayout({4}), {{1}, 5.0, 0.0});
    CHECK(m.at(0, 1) == 5.0f);
    CHECK(m.at(1, 1) == 0.0f);
    CHECK(m.at(0, 0) == 0.0f);
    const auto n1 = actstore::synth_planted_matrix(9, d, LayerLayout({4}), {{1}, 5.0, 0.1});
    const auto n2 = actstore::synth_planted_matrix(9, d, LayerLayout({4}), {{1}, 5.0, 0.1});
    CHECK(n1 == n2);
}
