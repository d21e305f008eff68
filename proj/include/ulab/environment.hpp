#pragma once

#include <string>
#include <vector>

#include "ulab/lexicon.hpp"
#include "ulab/policy.hpp"
#include "ulab/rewards.hpp"
#include "ulab/rng.hpp"

namespace ulab {

// Synthetic stand-in for one image: grounded objects plus a split label.
struct Context {
    int id = 0;
    TokenSet grounded_objects;  // O(x)
    Split split = Split::Forget;
    std::vector<int> prompt_ids;
};

struct Environment {
    std::vector<Context> contexts;
    ConceptLexicon lexicon;
    std::vector<int> train_ids;
    std::vector<int> test_ids;

    const Context& context(int id) const {
        for (const auto& c : contexts)
            if (c.id == id) return c;
        throw PreconditionError("unknown context id " + std::to_string(id));
    }
};

struct CorpusRecord {
    int context_id = 0;
    int prompt_id = 0;
    Sequence tokens;
    bool operator==(const CorpusRecord&) const = default;
};

struct Corpus {
    std::vector<CorpusRecord> records;
    bool operator==(const Corpus&) const = default;
};

// One caption template per prompt id; "*" marks the single object slot.
using CaptionTemplate = std::vector<std::string>;

struct EnvConfig {
    int n_contexts = 10;
    double train_fraction = 0.8;  // the 4:1 split
    std::vector<std::string> forget_objects = {"dog"};
    std::vector<std::string> retain_objects = {"giraffe"};
    // Slot-final templates: with the object in the last position the cold
    // start visits every row the trained policy will traffic through, so no
    // near-uniform leftover row can leak stray object mentions.
    std::vector<CaptionTemplate> templates = {{"look", "at", "the", "*"},
                                              {"there", "is", "a", "*"}};
};

inline Condition condition_for(const Context& ctx, int prompt, Granularity granularity) {
    const std::int32_t group = granularity == Granularity::PerClass
                                   ? (ctx.split == Split::Forget ? 0 : 1)
                                   : ctx.id;
    return {group, prompt};
}

inline std::vector<Condition> make_conditions(const Environment& env, Granularity granularity) {
    std::vector<Condition> conds;
    for (const auto& ctx : env.contexts)
        for (int p : ctx.prompt_ids) {
            const Condition c = condition_for(ctx, p, granularity);
            bool seen = false;
            for (const auto& existing : conds) seen = seen || existing == c;
            if (!seen) conds.push_back(c);
        }
    return conds;
}

// Builds contexts by cycling the object pools, alternating splits, and
// partitioning each split train/test at the configured fraction.
inline Environment generate_environment(const ConceptLexicon& lexicon, const EnvConfig& cfg,
                                        Rng& rng) {
    (void)rng;  // reserved for multi-object grounding; construction is deterministic
    if (cfg.n_contexts < 4)
        throw InsufficientConceptsError(
            "need at least 4 contexts to populate both splits of both partitions");
    if (cfg.forget_objects.empty() || cfg.retain_objects.empty())
        throw InsufficientConceptsError("both object pools must be non-empty");
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
        throw PreconditionError("train fraction must be inside (0, 1)");
    if (cfg.templates.empty()) throw PreconditionError("at least one caption template required");

    const auto& vocab = lexicon.vocab();
    const TokenSet penalized = lexicon.penalized_tokens();
    std::vector<TokenId> forget_pool, retain_pool;
    for (const auto& name : cfg.forget_objects) {
        const TokenId id = vocab.id_of(name);
        if (!penalized.contains(id))
            throw InsufficientConceptsError("forget object '" + name +
                                            "' is not a forget keyword or synonym");
        forget_pool.push_back(id);
    }
    for (const auto& name : cfg.retain_objects) {
        const TokenId id = vocab.id_of(name);
        if (penalized.contains(id))
            throw InsufficientConceptsError("retain object '" + name +
                                            "' overlaps the penalized set");
        retain_pool.push_back(id);
    }

    std::vector<int> prompt_ids;
    for (int p = 0; p < static_cast<int>(cfg.templates.size()); ++p) prompt_ids.push_back(p);

    Environment env;
    env.lexicon = lexicon;
    for (int i = 0; i < cfg.n_contexts; ++i) {
        Context ctx;
        ctx.id = i;
        ctx.split = (i % 2 == 0) ? Split::Forget : Split::Retain;
        const auto& pool = ctx.split == Split::Forget ? forget_pool : retain_pool;
        ctx.grounded_objects =
            TokenSet({pool[static_cast<std::size_t>(i / 2) % pool.size()]});
        ctx.prompt_ids = prompt_ids;
        env.contexts.push_back(std::move(ctx));
    }

    // Stratified split: within each class, the leading fraction trains.
    for (Split split : {Split::Forget, Split::Retain}) {
        std::vector<int> ids;
        for (const auto& ctx : env.contexts)
            if (ctx.split == split) ids.push_back(ctx.id);
        const auto n_train = static_cast<std::size_t>(
            std::llround(cfg.train_fraction * static_cast<double>(ids.size())));
        if (n_train == 0 || n_train == ids.size())
            throw InsufficientConceptsError("split leaves a partition without a " +
                                            std::string(to_string(split)) + " context");
        for (std::size_t i = 0; i < ids.size(); ++i)
            (i < n_train ? env.train_ids : env.test_ids).push_back(ids[i]);
    }
    std::sort(env.train_ids.begin(), env.train_ids.end());
    std::sort(env.test_ids.begin(), env.test_ids.end());
    return env;
}

// Fills each template's object slot with a grounded object: a penalized
// keyword for forget contexts, the grounded retain keyword for retain ones.
inline Corpus generate_reference_corpus(const Environment& env,
                                        const std::vector<CaptionTemplate>& templates, Rng& rng,
                                        int seq_len) {
    const auto& lex = env.lexicon;
    const auto& vocab = lex.vocab();
    for (const auto& tmpl : templates) {
        if (static_cast<int>(tmpl.size()) != seq_len)
            throw TemplateLengthMismatchError("template length != configured sequence length");
        int slots = 0;
        for (const auto& w : tmpl) slots += (w == "*") ? 1 : 0;
        if (slots != 1)
            throw TemplateLengthMismatchError("each template needs exactly one object slot");
    }
    Corpus corpus;
    for (int ctx_id : env.train_ids) {
        const Context& ctx = env.context(ctx_id);
        const TokenSet wanted = ctx.split == Split::Forget ? lex.penalized_tokens()
                                                           : lex.retain_keywords();
        std::vector<TokenId> candidates;
        for (TokenId obj : ctx.grounded_objects)
            if (wanted.contains(obj)) candidates.push_back(obj);
        if (candidates.empty())
            throw InsufficientConceptsError("context " + std::to_string(ctx_id) +
                                            " has no grounded concept for its split");
        for (int prompt : ctx.prompt_ids) {
            const auto& tmpl = templates[static_cast<std::size_t>(prompt)];
            const TokenId fill =
                candidates[static_cast<std::size_t>(rng.uniform_int(
                    static_cast<int>(candidates.size())))];
            CorpusRecord rec{ctx_id, prompt, {}};
            for (const auto& w : tmpl)
                rec.tokens.push_back(w == "*" ? fill : vocab.id_of(w));
            corpus.records.push_back(std::move(rec));
        }
    }
    return corpus;
}

// Stochastic keyword replacement: every forget/synonym token is replaced by
// an independent uniform draw from the retain pool; everything else is kept.
inline Sequence replace_keywords(const Sequence& caption, const ConceptLexicon& lex,
                                 const std::vector<TokenId>& retain_pool, Rng& rng) {
    if (retain_pool.empty()) throw EmptyReplacementPoolError("replacement pool is empty");
    const TokenSet penalized = lex.penalized_tokens();
    for (TokenId id : retain_pool)
        if (penalized.contains(id))
            throw PreconditionError("replacement pool overlaps the penalized set");
    Sequence out;
    out.reserve(caption.size());
    for (TokenId id : caption) {
        if (penalized.contains(id)) {
            out.push_back(retain_pool[static_cast<std::size_t>(
                rng.uniform_int(static_cast<int>(retain_pool.size())))]);
        } else {
            out.push_back(id);
        }
    }
    return out;
}

// Applies the replacement operator to forget-context captions and passes
// retain-context captions through unchanged. The pipeline guarantees the
// reference corpus covers every train context; partial corpora are processed
// as-is (an empty corpus maps to an empty corpus).
inline Corpus build_coldstart_corpus(const Environment& env, const Corpus& reference,
                                     const std::vector<TokenId>& retain_pool, Rng& rng) {
    Corpus out;
    out.records.reserve(reference.records.size());
    for (const auto& rec : reference.records) {
        const Context& ctx = env.context(rec.context_id);
        CorpusRecord copy = rec;
        if (ctx.split == Split::Forget)
            copy.tokens = replace_keywords(rec.tokens, env.lexicon, retain_pool, rng);
        out.records.push_back(std::move(copy));
    }
    return out;
}

// --- artifact files ---

inline json environment_to_json(const Environment& env) {
    json j;
    json ctxs = json::array();
    for (const auto& ctx : env.contexts) {
        json c;
        c["id"] = ctx.id;
        c["objects"] = sequence_to_strings(env.lexicon.vocab(), ctx.grounded_objects.ids());
        c["split"] = to_string(ctx.split);
        c["prompts"] = ctx.prompt_ids;
        ctxs.push_back(c);
    }
    j["contexts"] = ctxs;
    j["train"] = env.train_ids;
    j["test"] = env.test_ids;
    return j;
}

inline Environment environment_from_json(const json& j, const ConceptLexicon& lexicon) {
    Environment env;
    env.lexicon = lexicon;
    for (const auto& c : j.at("contexts")) {
        Context ctx;
        ctx.id = c.at("id").get<int>();
        std::vector<TokenId> ids;
        for (const auto& name : c.at("objects"))
            ids.push_back(lexicon.vocab().id_of(name.get<std::string>()));
        ctx.grounded_objects = TokenSet(std::move(ids));
        ctx.split = c.at("split").get<std::string>() == "forget" ? Split::Forget : Split::Retain;
        ctx.prompt_ids = c.at("prompts").get<std::vector<int>>();
        env.contexts.push_back(std::move(ctx));
    }
    env.train_ids = j.at("train").get<std::vector<int>>();
    env.test_ids = j.at("test").get<std::vector<int>>();
    return env;
}

inline std::vector<json> corpus_to_jsonl(const Corpus& corpus, const Vocabulary& vocab) {
    std::vector<json> lines;
    lines.reserve(corpus.records.size());
    for (const auto& rec : corpus.records) {
        json j;
        j["context_id"] = rec.context_id;
        j["prompt_id"] = rec.prompt_id;
        j["tokens"] = sequence_to_strings(vocab, rec.tokens);
        lines.push_back(std::move(j));
    }
    return lines;
}

inline Corpus corpus_from_jsonl(const std::vector<json>& lines, const Vocabulary& vocab) {
    Corpus corpus;
    for (const auto& j : lines) {
        CorpusRecord rec;
        rec.context_id = j.at("context_id").get<int>();
        rec.prompt_id = j.at("prompt_id").get<int>();
        rec.tokens = sequence_from_strings(vocab, j.at("tokens").get<std::vector<std::string>>());
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

}  // namespace ulab
