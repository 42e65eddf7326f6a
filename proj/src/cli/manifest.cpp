#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <memory>

#include "commands.hpp"
#include "xlg/binio.hpp"
#include "xlg/cli.hpp"
#include "xlg/error.hpp"

namespace xlg::cli {

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    std::vector<char> buf(1 << 20);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
    }
    if (in.bad()) throw IoError("read failed: " + path.string());
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += kHex[md[i] >> 4];
        hex += kHex[md[i] & 15];
    }
    return hex;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
    auto name = out.stem().string() + suffix;
    return out.has_parent_path() ? out.parent_path() / name : fs::path(name);
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == extension) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

RunManifest::RunManifest(std::string command) {
    doc_["tool"] = "xlg";
    doc_["tool_version"] = kToolVersion;
    doc_["command"] = std::move(command);
    doc_["config"] = nlohmann::ordered_json::object();
    doc_["inputs"] = nlohmann::ordered_json::array();
    doc_["outputs"] = nlohmann::ordered_json::array();
}

void RunManifest::config(const std::string& key, nlohmann::ordered_json value) {
    doc_["config"][key] = std::move(value);
}

void RunManifest::input(const fs::path& path) {
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(path))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            doc_["inputs"].push_back({{"path", f.generic_string()}, {"sha256", sha256_file(f)}});
    } else {
        doc_["inputs"].push_back({{"path", path.generic_string()}, {"sha256", sha256_file(path)}});
    }
}

void RunManifest::output(const fs::path& path, const fs::path& root) {
    doc_["outputs"].push_back(
        {{"path", path.lexically_relative(root).generic_string()}, {"sha256", sha256_file(path)}});
}

void RunManifest::write(const fs::path& path) const { binio::write_file(path, doc_.dump(2) + "\n"); }

}  // namespace xlg::cli
