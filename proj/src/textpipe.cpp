#include "dcan/textpipe.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "dcan/error.hpp"

namespace dcan {

namespace {

bool is_separator(unsigned char c) {
    if (c == '-' || c == '\'') return false;  // stay in-token; such tokens get dropped
    return c <= ' ' || (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
           (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

bool keep_token(const std::string& token) {
    for (char c : token)
        if (c < 'a' || c > 'z') return false;
    return !token.empty();
}

}  // namespace

std::vector<std::string> preprocess(const std::string& text, int64_t max_len) {
    if (max_len < 0) throw std::invalid_argument("preprocess: max_len must be non-negative");
    std::vector<std::string> out;
    std::string token;
    auto flush = [&] {
        if (!token.empty()) {
            if (keep_token(token) && static_cast<int64_t>(out.size()) < max_len)
                out.push_back(token);
            token.clear();
        }
    };
    for (unsigned char c : text) {
        if (is_separator(c)) {
            flush();
        } else {
            if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
            token.push_back(static_cast<char>(c));
        }
    }
    flush();
    return out;
}

Vocabulary::Vocabulary() : id_to_token{"<pad>", "<unk>"} {}

void Vocabulary::add_token(const std::string& token) {
    const int32_t id = static_cast<int32_t>(id_to_token.size());
    id_to_token.push_back(token);
    token_to_id.emplace(token, id);
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& token_lists,
                       int64_t min_frequency) {
    if (min_frequency < 1) throw std::invalid_argument("build_vocab: min_frequency must be >= 1");
    std::map<std::string, int64_t> freq;
    for (const auto& tokens : token_lists)
        for (const auto& t : tokens) ++freq[t];

    std::vector<std::pair<std::string, int64_t>> kept;
    for (const auto& [token, count] : freq)
        if (count >= min_frequency) kept.emplace_back(token, count);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    vocab.min_frequency = min_frequency;
    for (const auto& [token, count] : kept) vocab.add_token(token);
    return vocab;
}

std::vector<int32_t> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::vector<int32_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
    return ids;
}

void save_vocab(const std::string& path, const Vocabulary& vocab) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open vocabulary file for writing: " + path);
    for (int64_t id = 2; id < vocab.size(); ++id)
        os << vocab.id_to_token[static_cast<size_t>(id)] << '\n';
    if (!os) throw IoError("failed writing vocabulary file: " + path);
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open vocabulary file: " + path);
    Vocabulary vocab;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty())
            throw ParseError("vocabulary file " + path + ": empty token at line " +
                             std::to_string(line_no));
        if (vocab.token_to_id.count(line))
            throw ParseError("vocabulary file " + path + ": duplicate token '" + line +
                             "' at line " + std::to_string(line_no));
        vocab.add_token(line);
    }
    return vocab;
}

}  // namespace dcan
