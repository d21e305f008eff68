#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ulab/errors.hpp"
#include "ulab/rng.hpp"

namespace ulab {

using TokenId = std::int32_t;
using Sequence = std::vector<TokenId>;

inline std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Token inventory. Id 0 is a reserved begin-of-sequence marker that is never
// emitted and never appears inside generated sequences.
class Vocabulary {
  public:
    static constexpr TokenId kBos = 0;
    static constexpr const char* kBosToken = "<bos>";

    Vocabulary() = default;

    // `tokens` lists the emittable tokens; the marker is prepended here.
    explicit Vocabulary(const std::vector<std::string>& tokens) {
        tokens_.push_back(kBosToken);
        index_.emplace(kBosToken, kBos);
        for (const auto& raw : tokens) {
            std::string t = lowercase(raw);
            if (t == kBosToken)
                throw UnknownTokenError("the begin-of-sequence marker is reserved");
            auto [it, inserted] = index_.emplace(t, static_cast<TokenId>(tokens_.size()));
            if (!inserted) throw OverlappingSetsError("duplicate vocabulary token: " + t);
            tokens_.push_back(t);
        }
    }

    TokenId size() const { return static_cast<TokenId>(tokens_.size()); }
    TokenId emittable_count() const { return size() - 1; }

    bool has(const std::string& name) const { return index_.count(lowercase(name)) > 0; }

    TokenId id_of(const std::string& name) const {
        auto it = index_.find(lowercase(name));
        if (it == index_.end()) throw UnknownTokenError("unknown token: " + name);
        return it->second;
    }

    const std::string& token(TokenId id) const {
        if (id < 0 || id >= size()) throw UnknownTokenError("token id out of range");
        return tokens_[static_cast<std::size_t>(id)];
    }

    bool valid_id(TokenId id) const { return id >= 0 && id < size(); }

    // Content hash used by policy checkpoints to reject mismatched vocabularies.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& t : tokens_) {
            h = splitmix64(h ^ fnv1a64(t));
        }
        return h;
    }

    std::vector<std::string> emittable_tokens() const {
        return {tokens_.begin() + 1, tokens_.end()};
    }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

inline Sequence sequence_from_strings(const Vocabulary& vocab,
                                      const std::vector<std::string>& words) {
    Sequence seq;
    seq.reserve(words.size());
    for (const auto& w : words) seq.push_back(vocab.id_of(w));
    return seq;
}

inline std::vector<std::string> sequence_to_strings(const Vocabulary& vocab, const Sequence& seq) {
    std::vector<std::string> out;
    out.reserve(seq.size());
    for (TokenId id : seq) out.push_back(vocab.token(id));
    return out;
}

// Sorted, duplicate-free id set. Vocabularies are tiny, so binary search
// beats hashing and keeps iteration order deterministic for serialization.
class TokenSet {
  public:
    TokenSet() = default;
    explicit TokenSet(std::vector<TokenId> ids) : ids_(std::move(ids)) {
        std::sort(ids_.begin(), ids_.end());
        ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    }

    bool contains(TokenId id) const {
        return std::binary_search(ids_.begin(), ids_.end(), id);
    }
    bool empty() const { return ids_.empty(); }
    std::size_t size() const { return ids_.size(); }
    const std::vector<TokenId>& ids() const { return ids_; }

    auto begin() const { return ids_.begin(); }
    auto end() const { return ids_.end(); }

    TokenSet unioned(const TokenSet& other) const {
        std::vector<TokenId> merged(ids_);
        merged.insert(merged.end(), other.ids_.begin(), other.ids_.end());
        return TokenSet(std::move(merged));
    }

    bool intersects(const TokenSet& other) const {
        for (TokenId id : other.ids_)
            if (contains(id)) return true;
        return false;
    }

    // First common element, or -1. Used to name the offending token in errors.
    TokenId first_common(const TokenSet& other) const {
        for (TokenId id : other.ids_)
            if (contains(id)) return id;
        return -1;
    }

    bool operator==(const TokenSet& other) const = default;

  private:
    std::vector<TokenId> ids_;
};

// True iff at least one token of `seq` is in `set`; occurrence count is
// irrelevant.
inline bool contains_any(const Sequence& seq, const TokenSet& set) {
    for (TokenId id : seq)
        if (set.contains(id)) return true;
    return false;
}

}  // namespace ulab
