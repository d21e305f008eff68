#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ulab/environment.hpp"
#include "ulab/parallel.hpp"
#include "ulab/policy.hpp"

namespace ulab {

struct JudgeVerdict {
    enum class Certainty { Certain, Hedged };
    bool hallucinated = false;
    std::optional<TokenId> offending;  // present iff hallucinated
    Certainty certainty = Certainty::Certain;
};

// Rule-based hallucination judge. An object-class token is a certain mention
// iff no hedge token precedes it anywhere in the sequence; the output
// hallucinates iff some certain mention falls outside
// O(x) ∪ Hyper(O(x)) ∪ Hyper(forget keywords). Hypernyms of the forgotten
// concept are the intended abstraction fallback and never count.
inline JudgeVerdict judge(const Sequence& seq, const Context& ctx, const ConceptLexicon& lex) {
    const TokenSet allowed = ctx.grounded_objects
                                 .unioned(lex.hypernyms_of(ctx.grounded_objects))
                                 .unioned(lex.hypernyms_of(lex.forget_keywords()));
    bool hedged = false;
    bool hedged_disallowed = false;
    for (TokenId id : seq) {
        if (lex.hedge_tokens().contains(id)) {
            hedged = true;
            continue;
        }
        if (lex.object_class_tokens().contains(id) && !allowed.contains(id)) {
            if (!hedged)
                return {true, id, JudgeVerdict::Certainty::Certain};
            hedged_disallowed = true;
        }
    }
    return {false, std::nullopt,
            hedged_disallowed ? JudgeVerdict::Certainty::Hedged
                              : JudgeVerdict::Certainty::Certain};
}

struct GenerationRecord {
    int context_id = 0;
    int prompt_id = 0;
    Sequence tokens;
    JudgeVerdict verdict;
};

// Acc_f: fraction of forget-context outputs containing a forget keyword or
// synonym. Reported as For. = 1 - Acc_f.
inline double accuracy_forget(const std::vector<GenerationRecord>& outputs,
                              const Environment& env) {
    if (outputs.empty()) throw EmptyOutputSetError("no forget-context outputs");
    const TokenSet penalized = env.lexicon.penalized_tokens();
    std::size_t hits = 0;
    for (const auto& rec : outputs) {
        if (env.context(rec.context_id).split != Split::Forget)
            throw PreconditionError("accuracy_forget expects forget-context outputs only");
        hits += contains_any(rec.tokens, penalized) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(outputs.size());
}

// Acc_r with per-context matching: an output counts iff it mentions the
// context's own grounded retain keyword, not just any retain keyword.
inline double accuracy_retain(const std::vector<GenerationRecord>& outputs,
                              const Environment& env) {
    if (outputs.empty()) throw EmptyOutputSetError("no retain-context outputs");
    std::size_t hits = 0;
    for (const auto& rec : outputs) {
        const Context& ctx = env.context(rec.context_id);
        if (ctx.split != Split::Retain)
            throw PreconditionError("accuracy_retain expects retain-context outputs only");
        std::vector<TokenId> expected;
        for (TokenId id : ctx.grounded_objects)
            if (env.lexicon.retain_keywords().contains(id)) expected.push_back(id);
        if (expected.empty())
            throw MissingExpectedConceptError("context " + std::to_string(ctx.id) +
                                              " grounds no retain keyword");
        hits += contains_any(rec.tokens, TokenSet(std::move(expected))) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(outputs.size());
}

struct PromptMetrics {
    double forget_rate = 0.0;  // For. = 1 - Acc_f
    double retain_rate = 0.0;  // Ret. = Acc_r
    double hallu_rate = 0.0;
    int n_forget = 0;
    int n_retain = 0;
};

struct MetricsReport {
    std::map<int, PromptMetrics> prompts;
    double avg = 0.0;            // mean of every For./Ret. cell
    double hallu_overall = 0.0;  // pooled over all outputs
    int samples_per_context = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
};

struct EvalConfig {
    int samples_per_context = 200;
    double temperature = 1.0;
    int threads = 1;
};

inline std::pair<MetricsReport, std::vector<GenerationRecord>> evaluate(
    const TabularPolicy& policy, const Environment& env, const EvalConfig& cfg,
    std::uint64_t master_seed) {
    if (env.test_ids.empty()) throw EmptyOutputSetError("test split is empty");
    if (cfg.samples_per_context <= 0) throw PreconditionError("samples_per_context must be > 0");

    struct Slot {
        int context_id;
        int prompt;
    };
    std::vector<Slot> slots;
    for (int ctx_id : env.test_ids)
        for (int p : env.context(ctx_id).prompt_ids) slots.push_back({ctx_id, p});

    std::vector<std::vector<GenerationRecord>> per_slot(slots.size());
    parallel_for(slots.size(), cfg.threads, [&](std::size_t i) {
        const Context& ctx = env.context(slots[i].context_id);
        const Condition cond = condition_for(ctx, slots[i].prompt, policy.granularity());
        Rng rng(derive_seed(master_seed, "eval",
                            static_cast<std::uint64_t>(slots[i].context_id),
                            static_cast<std::uint64_t>(slots[i].prompt)));
        auto& out = per_slot[i];
        out.reserve(static_cast<std::size_t>(cfg.samples_per_context));
        for (int n = 0; n < cfg.samples_per_context; ++n) {
            GenerationRecord rec;
            rec.context_id = ctx.id;
            rec.prompt_id = slots[i].prompt;
            rec.tokens = policy.sample(cond, rng, cfg.temperature);
            rec.verdict = judge(rec.tokens, ctx, env.lexicon);
            out.push_back(std::move(rec));
        }
    });

    std::vector<GenerationRecord> records;
    for (auto& chunk : per_slot)
        for (auto& rec : chunk) records.push_back(std::move(rec));

    MetricsReport report;
    report.samples_per_context = cfg.samples_per_context;
    report.seed = master_seed;

    std::map<int, std::vector<GenerationRecord>> forget_by_prompt, retain_by_prompt;
    std::map<int, std::pair<int, int>> hallu_by_prompt;  // hallucinated / total
    int hallu_total = 0;
    for (const auto& rec : records) {
        const Context& ctx = env.context(rec.context_id);
        (ctx.split == Split::Forget ? forget_by_prompt : retain_by_prompt)[rec.prompt_id]
            .push_back(rec);
        auto& [h, t] = hallu_by_prompt[rec.prompt_id];
        h += rec.verdict.hallucinated ? 1 : 0;
        ++t;
        hallu_total += rec.verdict.hallucinated ? 1 : 0;
    }
    double cell_sum = 0.0;
    int cell_count = 0;
    for (const auto& [prompt, counts] : hallu_by_prompt) {
        PromptMetrics pm;
        pm.hallu_rate = static_cast<double>(counts.first) / static_cast<double>(counts.second);
        if (auto it = forget_by_prompt.find(prompt); it != forget_by_prompt.end()) {
            pm.forget_rate = 1.0 - accuracy_forget(it->second, env);
            pm.n_forget = static_cast<int>(it->second.size());
            cell_sum += pm.forget_rate;
            ++cell_count;
        }
        if (auto it = retain_by_prompt.find(prompt); it != retain_by_prompt.end()) {
            pm.retain_rate = accuracy_retain(it->second, env);
            pm.n_retain = static_cast<int>(it->second.size());
            cell_sum += pm.retain_rate;
            ++cell_count;
        }
        report.prompts[prompt] = pm;
    }
    report.avg = cell_count ? cell_sum / static_cast<double>(cell_count) : 0.0;
    report.hallu_overall =
        records.empty() ? 0.0
                        : static_cast<double>(hallu_total) / static_cast<double>(records.size());
    return {std::move(report), std::move(records)};
}

// --- serialization ---

inline json metrics_to_json(const MetricsReport& r) {
    json j;
    json prompts = json::object();
    for (const auto& [prompt, pm] : r.prompts) {
        json p;
        p["forget_rate"] = pm.forget_rate;
        p["retain_rate"] = pm.retain_rate;
        p["hallu_rate"] = pm.hallu_rate;
        p["n_forget"] = pm.n_forget;
        p["n_retain"] = pm.n_retain;
        prompts[std::to_string(prompt)] = p;
    }
    j["prompts"] = prompts;
    j["avg"] = r.avg;
    j["hallu_overall"] = r.hallu_overall;
    j["samples_per_context"] = r.samples_per_context;
    j["seed"] = r.seed;
    j["config_digest"] = r.config_digest;
    return j;
}

inline MetricsReport metrics_from_json(const json& j) {
    MetricsReport r;
    for (auto it = j.at("prompts").begin(); it != j.at("prompts").end(); ++it) {
        PromptMetrics pm;
        pm.forget_rate = it.value().at("forget_rate").get<double>();
        pm.retain_rate = it.value().at("retain_rate").get<double>();
        pm.hallu_rate = it.value().at("hallu_rate").get<double>();
        pm.n_forget = it.value().at("n_forget").get<int>();
        pm.n_retain = it.value().at("n_retain").get<int>();
        r.prompts[std::stoi(it.key())] = pm;
    }
    r.avg = j.at("avg").get<double>();
    r.hallu_overall = j.at("hallu_overall").get<double>();
    r.samples_per_context = j.at("samples_per_context").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_digest = j.value("config_digest", "");
    return r;
}

inline std::vector<json> generations_to_jsonl(const std::vector<GenerationRecord>& records,
                                              const Vocabulary& vocab) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& rec : records) {
        json j;
        j["context_id"] = rec.context_id;
        j["prompt_id"] = rec.prompt_id;
        j["tokens"] = sequence_to_strings(vocab, rec.tokens);
        j["hallucinated"] = rec.verdict.hallucinated;
        if (rec.verdict.offending) j["offending"] = vocab.token(*rec.verdict.offending);
        j["certainty"] =
            rec.verdict.certainty == JudgeVerdict::Certainty::Hedged ? "hedged" : "certain";
        lines.push_back(std::move(j));
    }
    return lines;
}

// Plain-text table mirroring the For./Ret. per prompt, Avg, Hallu. layout.
inline std::string render_metrics_table(const MetricsReport& r) {
    char buf[256];
    std::string out;
    out += "prompt     For.     Ret.   Hallu.   (n_f, n_r)\n";
    for (const auto& [prompt, pm] : r.prompts) {
        std::snprintf(buf, sizeof(buf), "%-8d %6.4f   %6.4f   %6.4f   (%d, %d)\n", prompt,
                      pm.forget_rate, pm.retain_rate, pm.hallu_rate, pm.n_forget, pm.n_retain);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "Avg (For./Ret. cells): %6.4f   overall Hallu.: %6.4f\n",
                  r.avg, r.hallu_overall);
    out += buf;
    return out;
}

}  // namespace ulab
