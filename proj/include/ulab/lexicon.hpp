#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "ulab/json_io.hpp"
#include "ulab/vocab.hpp"

namespace ulab {

enum class TokenClass { Forget, Synonym, Hypernym, Retain, Hedge, Other };

inline const char* to_string(TokenClass c) {
    switch (c) {
        case TokenClass::Forget: return "forget";
        case TokenClass::Synonym: return "synonym";
        case TokenClass::Hypernym: return "hypernym";
        case TokenClass::Retain: return "retain";
        case TokenClass::Hedge: return "hedge";
        case TokenClass::Other: return "other";
    }
    return "other";
}

// String-named lexicon description, the shape the JSON file carries.
struct LexiconSpec {
    std::vector<std::string> vocabulary;
    std::vector<std::string> forget;
    std::map<std::string, std::vector<std::string>> synonyms;   // forget keyword -> synonyms
    std::map<std::string, std::vector<std::string>> hypernyms;  // concept -> hypernyms
    std::vector<std::string> retain;
    std::vector<std::string> hedges;
};

// Immutable after construction; single source of truth for keyword matching.
class ConceptLexicon {
  public:
    ConceptLexicon() = default;

    ConceptLexicon(Vocabulary vocab, TokenSet forget, std::map<TokenId, TokenSet> synonyms,
                   std::map<TokenId, TokenSet> hypernyms, TokenSet retain, TokenSet hedges)
        : vocab_(std::move(vocab)),
          forget_(std::move(forget)),
          synonyms_(std::move(synonyms)),
          hypernyms_(std::move(hypernyms)),
          retain_(std::move(retain)),
          hedges_(std::move(hedges)) {
        for (const auto& [kw, set] : synonyms_) syn_flat_ = syn_flat_.unioned(set);
        for (const auto& [kw, set] : hypernyms_) hyper_flat_ = hyper_flat_.unioned(set);
        validate();
        std::vector<TokenId> objs;
        auto add_set = [&](const TokenSet& s) {
            objs.insert(objs.end(), s.ids().begin(), s.ids().end());
        };
        add_set(forget_);
        add_set(syn_flat_);
        add_set(retain_);
        add_set(hyper_flat_);
        for (const auto& [concept_id, _] : hypernyms_) objs.push_back(concept_id);
        object_classes_ = TokenSet(std::move(objs));
    }

    const Vocabulary& vocab() const { return vocab_; }
    const TokenSet& forget_keywords() const { return forget_; }
    const TokenSet& synonym_tokens() const { return syn_flat_; }
    const TokenSet& hypernym_tokens() const { return hyper_flat_; }
    const TokenSet& retain_keywords() const { return retain_; }
    const TokenSet& hedge_tokens() const { return hedges_; }

    // D_f plus Syn(D_f): the penalized set.
    TokenSet penalized_tokens() const { return forget_.unioned(syn_flat_); }

    // Every token that names an object class: forget keywords, their
    // synonyms, retain keywords, hypernym map keys and hypernym tokens.
    // The judge treats exactly these as object mentions.
    const TokenSet& object_class_tokens() const { return object_classes_; }

    const std::map<TokenId, TokenSet>& synonym_map() const { return synonyms_; }
    const std::map<TokenId, TokenSet>& hypernym_map() const { return hypernyms_; }

    // Hypernyms of one concept; empty set when none are declared.
    TokenSet hypernyms_of(TokenId concept_id) const {
        auto it = hypernyms_.find(concept_id);
        return it == hypernyms_.end() ? TokenSet{} : it->second;
    }

    TokenSet hypernyms_of(const TokenSet& concepts) const {
        TokenSet out;
        for (TokenId c : concepts) out = out.unioned(hypernyms_of(c));
        return out;
    }

    TokenClass classify(TokenId id) const {
        if (id == Vocabulary::kBos)
            throw UnknownTokenError("begin-of-sequence marker has no token class");
        if (!vocab_.valid_id(id)) throw UnknownTokenError("token id out of range");
        if (forget_.contains(id)) return TokenClass::Forget;
        if (syn_flat_.contains(id)) return TokenClass::Synonym;
        if (hyper_flat_.contains(id)) return TokenClass::Hypernym;
        if (retain_.contains(id)) return TokenClass::Retain;
        if (hedges_.contains(id)) return TokenClass::Hedge;
        return TokenClass::Other;
    }

  private:
    void validate() const {
        struct Named {
            const char* name;
            const TokenSet* set;
        };
        const Named sets[] = {{"forget", &forget_},
                              {"synonyms", &syn_flat_},
                              {"hypernyms", &hyper_flat_},
                              {"retain", &retain_},
                              {"hedges", &hedges_}};
        for (const auto& [name, set] : sets) {
            if (set->contains(Vocabulary::kBos))
                throw OverlappingSetsError(std::string(name) +
                                           " contains the reserved marker");
            for (TokenId id : *set)
                if (!vocab_.valid_id(id))
                    throw UnknownTokenError("id out of vocabulary in set " + std::string(name));
        }
        for (std::size_t i = 0; i < std::size(sets); ++i) {
            for (std::size_t j = i + 1; j < std::size(sets); ++j) {
                TokenId common = sets[i].set->first_common(*sets[j].set);
                if (common >= 0)
                    throw OverlappingSetsError(
                        std::string("token '") + vocab_.token(common) + "' appears in both " +
                        sets[i].name + " and " + sets[j].name);
            }
        }
    }

    Vocabulary vocab_;
    TokenSet forget_;
    std::map<TokenId, TokenSet> synonyms_;
    std::map<TokenId, TokenSet> hypernyms_;
    TokenSet retain_;
    TokenSet hedges_;
    TokenSet syn_flat_;
    TokenSet hyper_flat_;
    TokenSet object_classes_;
};

inline ConceptLexicon build_lexicon(const LexiconSpec& spec) {
    Vocabulary vocab(spec.vocabulary);
    auto resolve = [&](const std::vector<std::string>& names) {
        std::vector<TokenId> ids;
        ids.reserve(names.size());
        for (const auto& n : names) ids.push_back(vocab.id_of(n));
        return TokenSet(std::move(ids));
    };
    std::map<TokenId, TokenSet> syn, hyper;
    for (const auto& [kw, names] : spec.synonyms) syn[vocab.id_of(kw)] = resolve(names);
    for (const auto& [kw, names] : spec.hypernyms) hyper[vocab.id_of(kw)] = resolve(names);
    return ConceptLexicon(std::move(vocab), resolve(spec.forget), std::move(syn),
                          std::move(hyper), resolve(spec.retain), resolve(spec.hedges));
}

// --- lexicon file: UTF-8 JSON, keys vocabulary/forget/synonyms/hypernyms/
// --- retain/hedges; round-trips byte-identically under canonical_dump.

inline json lexicon_spec_to_json(const LexiconSpec& spec) {
    json j;
    j["vocabulary"] = spec.vocabulary;
    j["forget"] = spec.forget;
    j["synonyms"] = json::object();
    for (const auto& [k, v] : spec.synonyms) j["synonyms"][k] = v;
    j["hypernyms"] = json::object();
    for (const auto& [k, v] : spec.hypernyms) j["hypernyms"][k] = v;
    j["retain"] = spec.retain;
    j["hedges"] = spec.hedges;
    return j;
}

inline LexiconSpec lexicon_spec_from_json(const json& j) {
    static const char* kKeys[] = {"vocabulary", "forget", "synonyms", "hypernyms", "retain",
                                  "hedges"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find_if(std::begin(kKeys), std::end(kKeys),
                         [&](const char* k) { return it.key() == k; }) == std::end(kKeys))
            throw ConfigError("unknown lexicon key: " + it.key());
    }
    LexiconSpec spec;
    spec.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    spec.forget = j.value("forget", std::vector<std::string>{});
    spec.retain = j.value("retain", std::vector<std::string>{});
    spec.hedges = j.value("hedges", std::vector<std::string>{});
    if (j.contains("synonyms"))
        for (auto it = j["synonyms"].begin(); it != j["synonyms"].end(); ++it)
            spec.synonyms[it.key()] = it.value().get<std::vector<std::string>>();
    if (j.contains("hypernyms"))
        for (auto it = j["hypernyms"].begin(); it != j["hypernyms"].end(); ++it)
            spec.hypernyms[it.key()] = it.value().get<std::vector<std::string>>();
    return spec;
}

// Canonical form of the lexicon actually built (names normalized, sets sorted
// by id), so dump(load(dump(x))) == dump(x) byte for byte.
inline json lexicon_to_json(const ConceptLexicon& lex) {
    const auto& vocab = lex.vocab();
    auto names = [&](const TokenSet& set) {
        std::vector<std::string> out;
        for (TokenId id : set) out.push_back(vocab.token(id));
        return out;
    };
    LexiconSpec spec;
    spec.vocabulary = vocab.emittable_tokens();
    spec.forget = names(lex.forget_keywords());
    spec.retain = names(lex.retain_keywords());
    spec.hedges = names(lex.hedge_tokens());
    for (const auto& [kw, set] : lex.synonym_map()) spec.synonyms[vocab.token(kw)] = names(set);
    for (const auto& [kw, set] : lex.hypernym_map()) spec.hypernyms[vocab.token(kw)] = names(set);
    return lexicon_spec_to_json(spec);
}

inline ConceptLexicon lexicon_from_json(const json& j) {
    return build_lexicon(lexicon_spec_from_json(j));
}

}  // namespace ulab
