#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace dcan {

// Lowercase, split, drop tokens with non-alphabetic content, truncate.
// Whitespace and punctuation separate tokens, except that hyphens and
// apostrophes stay inside a token (and then disqualify it, since kept tokens
// must be pure a-z). Idempotent on its own output.
std::vector<std::string> preprocess(const std::string& text, int64_t max_len = 2500);

// Token <-> id bijection with reserved ids PAD=0 and UNK=1. Corpus tokens get
// ids from 2 upward in (frequency desc, then lexicographic) order.
struct Vocabulary {
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kUnk = 1;

    std::vector<std::string> id_to_token;  // [0]="<pad>", [1]="<unk>"
    std::unordered_map<std::string, int32_t> token_to_id;
    int64_t min_frequency = 1;

    Vocabulary();

    int64_t size() const { return static_cast<int64_t>(id_to_token.size()); }

    int32_t id_of(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? kUnk : it->second;
    }

    void add_token(const std::string& token);
};

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& token_lists,
                       int64_t min_frequency);

// Unknown tokens map to UNK; length is preserved; PAD is never produced.
std::vector<int32_t> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab);

// Line-oriented vocabulary file: one corpus token per line, line number + 2
// gives the id. Sentinels are not written.
void save_vocab(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::string& path);

}  // namespace dcan
