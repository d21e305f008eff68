#pragma once

#include "ulab/lexicon.hpp"

namespace ulab {

enum class Split { Forget, Retain };

inline const char* to_string(Split s) { return s == Split::Forget ? "forget" : "retain"; }

struct RewardConfig {
    double lambda1 = 0.3;  // penalty weight per forget/synonym occurrence
    double lambda2 = 0.5;  // abstraction bonus
    // Presence semantics by default: the bonus pays once per sequence. The
    // per-occurrence variant exists for ablation only.
    bool abs_per_occurrence = false;
};

// R_pen(y) = -lambda1 * #{ i : w_i in forget ∪ synonyms }
inline double reward_pen(const Sequence& seq, const ConceptLexicon& lex, double lambda1) {
    int count = 0;
    for (TokenId id : seq) {
        if (lex.forget_keywords().contains(id) || lex.synonym_tokens().contains(id)) ++count;
    }
    return -lambda1 * count;
}

// R_abs(y) = lambda2 if y contains a hypernym token, else 0.
inline double reward_abs(const Sequence& seq, const ConceptLexicon& lex, double lambda2,
                         bool per_occurrence = false) {
    if (!per_occurrence) return contains_any(seq, lex.hypernym_tokens()) ? lambda2 : 0.0;
    int count = 0;
    for (TokenId id : seq)
        if (lex.hypernym_tokens().contains(id)) ++count;
    return lambda2 * count;
}

inline double reward_forget(const Sequence& seq, const ConceptLexicon& lex,
                            const RewardConfig& cfg) {
    return reward_pen(seq, lex, cfg.lambda1) +
           reward_abs(seq, lex, cfg.lambda2, cfg.abs_per_occurrence);
}

// 1 if any retain keyword appears, else 0; occurrence count is irrelevant.
inline double reward_retain(const Sequence& seq, const ConceptLexicon& lex) {
    return contains_any(seq, lex.retain_keywords()) ? 1.0 : 0.0;
}

// Dispatch on the context's split label.
inline double assign_reward(Split split, const Sequence& seq, const ConceptLexicon& lex,
                            const RewardConfig& cfg) {
    return split == Split::Forget ? reward_forget(seq, lex, cfg) : reward_retain(seq, lex);
}

}  // namespace ulab
