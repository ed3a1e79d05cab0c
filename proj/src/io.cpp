#include "vulnharness/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <sstream>

#include "vulnharness/common.hpp"

namespace vulnharness {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw HarnessError(ErrorKind::io, "sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw HarnessError(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw HarnessError(ErrorKind::io, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_text_file_atomic(const std::filesystem::path& path, std::string_view text) {
    auto tmp = path;
    tmp += ".tmp";
    write_text_file(tmp, text);
    std::filesystem::rename(tmp, path);
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path, bool tolerate_torn_tail) {
    std::ifstream in(path);
    if (!in) throw HarnessError(ErrorKind::io, "cannot open " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
    const bool ends_with_newline = [&] {
        std::ifstream tail(path, std::ios::binary | std::ios::ate);
        const auto size = static_cast<long>(tail.tellg());
        if (size <= 0) return true;
        tail.seekg(size - 1);
        return tail.get() == '\n';
    }();

    std::vector<nlohmann::json> rows;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            rows.push_back(nlohmann::json::parse(lines[i]));
        } catch (const nlohmann::json::parse_error& e) {
            if (tolerate_torn_tail && i + 1 == lines.size() && !ends_with_newline) break;
            throw HarnessError(ErrorKind::io, path.string() + ":" + std::to_string(i + 1) +
                                                  ": malformed record: " + e.what());
        }
    }
    return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
    std::string text;
    for (const auto& row : rows) {
        text += row.dump();
        text += '\n';
    }
    write_text_file_atomic(path, text);
}

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& row) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw HarnessError(ErrorKind::io, "cannot append to " + path.string());
    out << row.dump() << '\n';
    out.flush();
}

}  // namespace vulnharness
