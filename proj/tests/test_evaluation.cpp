#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>

#include "ulab/config.hpp"
#include "ulab/evaluation.hpp"

#include "support/brute.hpp"

using namespace ulab;
using Catch::Approx;

namespace {

ConceptLexicon judge_lexicon() {
    LexiconSpec ls;
    ls.vocabulary = {"a", "an", "the", "dog", "puppy", "animal", "creature",
                     "cat", "giraffe", "horse", "runs", "by", "maybe"};
    ls.forget = {"dog"};
    ls.synonyms["dog"] = {"puppy"};
    ls.hypernyms["dog"] = {"animal", "creature"};
    ls.hypernyms["giraffe"] = {"animal", "creature"};
    ls.hypernyms["cat"] = {"animal", "creature"};
    ls.retain = {"giraffe", "horse"};
    ls.hedges = {"maybe"};
    return build_lexicon(ls);
}

Sequence seq(const ConceptLexicon& lex, const std::vector<std::string>& words) {
    return sequence_from_strings(lex.vocab(), words);
}

Context forget_ctx(const ConceptLexicon& lex) {
    return {0, TokenSet({lex.vocab().id_of("dog")}), Split::Forget, {0}};
}

Environment mini_env(const ConceptLexicon& lex) {
    Environment env;
    env.lexicon = lex;
    env.contexts.push_back(forget_ctx(lex));
    env.contexts.push_back({1, TokenSet({lex.vocab().id_of("giraffe")}), Split::Retain, {0}});
    env.contexts.push_back({2, TokenSet({lex.vocab().id_of("horse")}), Split::Retain, {0}});
    env.train_ids = {0, 1};
    env.test_ids = {2};
    return env;
}

}  // namespace

TEST_CASE("judge: hypernym fallback is never a hallucination") {
    const auto lex = judge_lexicon();
    const auto v = judge(seq(lex, {"an", "animal", "runs", "by"}), forget_ctx(lex), lex);
    CHECK_FALSE(v.hallucinated);
    CHECK_FALSE(v.offending.has_value());
    CHECK(v.certainty == JudgeVerdict::Certainty::Certain);
}

TEST_CASE("judge: certain ungrounded object mention hallucinates") {
    const auto lex = judge_lexicon();
    const auto v = judge(seq(lex, {"a", "cat", "runs", "by"}), forget_ctx(lex), lex);
    CHECK(v.hallucinated);
    REQUIRE(v.offending.has_value());
    CHECK(lex.vocab().token(*v.offending) == "cat");
}

TEST_CASE("judge: hedged mentions are exempt") {
    const auto lex = judge_lexicon();
    const auto v = judge(seq(lex, {"maybe", "cat", "runs", "by"}), forget_ctx(lex), lex);
    CHECK_FALSE(v.hallucinated);
    CHECK(v.certainty == JudgeVerdict::Certainty::Hedged);
}

TEST_CASE("judge: grounded and forget mentions are allowed") {
    const auto lex = judge_lexicon();
    CHECK_FALSE(judge(seq(lex, {"a", "dog", "runs", "by"}), forget_ctx(lex), lex).hallucinated);
    // retain keyword inside a retain context is grounded
    const Context giraffe_ctx{1, TokenSet({lex.vocab().id_of("giraffe")}), Split::Retain, {0}};
    CHECK_FALSE(
        judge(seq(lex, {"a", "giraffe", "runs", "by"}), giraffe_ctx, lex).hallucinated);
    // but an ungrounded retain keyword is a hallucination
    CHECK(judge(seq(lex, {"a", "giraffe", "runs", "by"}), forget_ctx(lex), lex).hallucinated);
}

TEST_CASE("judge: inserting a hedge never creates a hallucination") {
    const auto lex = judge_lexicon();
    Rng rng(31);
    const Context ctx = forget_ctx(lex);
    const TokenId hedge = lex.vocab().id_of("maybe");
    for (int trial = 0; trial < 200; ++trial) {
        Sequence s;
        const int len = 1 + rng.uniform_int(5);
        for (int i = 0; i < len; ++i)
            s.push_back(1 + rng.uniform_int(lex.vocab().emittable_count()));
        const bool before = judge(s, ctx, lex).hallucinated;
        Sequence hedged = s;
        hedged.insert(hedged.begin() + rng.uniform_int(static_cast<int>(hedged.size()) + 1),
                      hedge);
        const bool after = judge(hedged, ctx, lex).hallucinated;
        // hedging only ever clears a verdict, never creates one
        if (!before) CHECK_FALSE(after);
    }
}

TEST_CASE("judge verdict invariant: offending token present iff hallucinated") {
    const auto lex = judge_lexicon();
    Rng rng(37);
    const Context ctx = forget_ctx(lex);
    for (int trial = 0; trial < 300; ++trial) {
        Sequence s;
        const int len = rng.uniform_int(6);
        for (int i = 0; i < len; ++i)
            s.push_back(1 + rng.uniform_int(lex.vocab().emittable_count()));
        const auto v = judge(s, ctx, lex);
        CHECK(v.hallucinated == v.offending.has_value());
    }
}

TEST_CASE("accuracy_forget counts penalized mentions") {
    const auto lex = judge_lexicon();
    const Environment env = mini_env(lex);
    std::vector<GenerationRecord> outputs;
    outputs.push_back({0, 0, seq(lex, {"a", "dog", "runs", "by"}), {}});
    outputs.push_back({0, 0, seq(lex, {"an", "animal", "runs", "by"}), {}});
    outputs.push_back({0, 0, seq(lex, {"a", "cat", "runs", "by"}), {}});
    outputs.push_back({0, 0, seq(lex, {"the", "a", "runs", "by"}), {}});
    CHECK(accuracy_forget(outputs, env) == Approx(0.25));  // For. = 0.75

    CHECK_THROWS_AS(accuracy_forget({}, env), EmptyOutputSetError);

    std::vector<GenerationRecord> none = {{0, 0, seq(lex, {"an", "animal", "runs", "by"}), {}}};
    CHECK(accuracy_forget(none, env) == 0.0);
    std::vector<GenerationRecord> all = {{0, 0, seq(lex, {"a", "puppy", "runs", "by"}), {}}};
    CHECK(accuracy_forget(all, env) == 1.0);
}

TEST_CASE("accuracy_retain matches the context's own concept") {
    const auto lex = judge_lexicon();
    const Environment env = mini_env(lex);
    std::vector<GenerationRecord> outputs;
    outputs.push_back({1, 0, seq(lex, {"a", "giraffe", "runs", "by"}), {}});
    CHECK(accuracy_retain(outputs, env) == 1.0);
    // a horse mention does not satisfy the giraffe context
    outputs[0].tokens = seq(lex, {"a", "horse", "runs", "by"});
    CHECK(accuracy_retain(outputs, env) == 0.0);

    // retain context without a grounded retain keyword
    Environment broken = env;
    broken.contexts[1].grounded_objects = TokenSet({lex.vocab().id_of("cat")});
    std::vector<GenerationRecord> probe = {{1, 0, seq(lex, {"a", "cat", "runs", "by"}), {}}};
    CHECK_THROWS_AS(accuracy_retain(probe, broken), MissingExpectedConceptError);
}

TEST_CASE("evaluate on a deterministic well-behaved policy maxes the metrics") {
    const ConceptLexicon lex = build_lexicon(default_lexicon_spec());
    EnvConfig env_cfg;
    Rng env_rng(3);
    const Environment env = generate_environment(lex, env_cfg, env_rng);
    auto policy = init_policy(lex.vocab(), make_conditions(env, Granularity::PerClass), 4, 0.0,
                              env_rng);
    // forget class: "look at the animal"; retain class: "look at the giraffe"
    auto pin = [&](Condition c, const std::vector<std::string>& words) {
        const Sequence s = sequence_from_strings(lex.vocab(), words);
        std::size_t state = policy.state_index({});
        for (int i = 0; i < 4; ++i) {
            policy.logits()[policy.row_offset(policy.condition_index(c), state) +
                            static_cast<std::size_t>(s[static_cast<std::size_t>(i)] - 1)] = 60.0;
            state = policy.next_state(state, i, s[static_cast<std::size_t>(i)]);
        }
    };
    for (int prompt : {0, 1}) {
        pin({0, prompt}, {"look", "at", "the", "animal"});
        pin({1, prompt}, {"look", "at", "the", "giraffe"});
    }
    EvalConfig cfg;
    cfg.samples_per_context = 50;
    auto [report, records] = evaluate(policy, env, cfg, 11);
    for (const auto& [prompt, pm] : report.prompts) {
        CHECK(pm.forget_rate == 1.0);
        CHECK(pm.retain_rate == 1.0);
        CHECK(pm.hallu_rate == 0.0);
    }
    CHECK(report.avg == 1.0);
    CHECK(report.hallu_overall == 0.0);
}

TEST_CASE("evaluate matches the closed-form uniform expectation") {
    // 8 emittable tokens, 2 penalized, L = 4: Acc_f = 1 - (6/8)^4
    LexiconSpec ls;
    ls.vocabulary = {"dog", "puppy", "giraffe", "a", "b", "c", "d", "e"};
    ls.forget = {"dog"};
    ls.synonyms["dog"] = {"puppy"};
    ls.retain = {"giraffe"};
    const ConceptLexicon lex = build_lexicon(ls);

    Environment env;
    env.lexicon = lex;
    env.contexts.push_back({0, TokenSet({lex.vocab().id_of("dog")}), Split::Forget, {0}});
    env.contexts.push_back({1, TokenSet({lex.vocab().id_of("giraffe")}), Split::Retain, {0}});
    env.train_ids = {};
    env.test_ids = {0, 1};

    Rng rng(5);
    const auto policy =
        init_policy(lex.vocab(), make_conditions(env, Granularity::PerClass), 4, 0.0, rng);
    EvalConfig cfg;
    cfg.samples_per_context = 4000;
    auto [report, records] = evaluate(policy, env, cfg, 31);

    const double expected_acc = 1.0 - std::pow(6.0 / 8.0, 4);
    CHECK(expected_acc == Approx(0.684).margin(5e-4));
    const double sigma = std::sqrt(expected_acc * (1 - expected_acc) / cfg.samples_per_context);
    CHECK(1.0 - report.prompts.at(0).forget_rate ==
          Approx(expected_acc).margin(3 * sigma));
}

TEST_CASE("evaluate is deterministic: identical report bytes for identical seeds") {
    const ConceptLexicon lex = build_lexicon(default_lexicon_spec());
    EnvConfig env_cfg;
    Rng env_rng(3);
    const Environment env = generate_environment(lex, env_cfg, env_rng);
    Rng init(9);
    const auto policy =
        init_policy(lex.vocab(), make_conditions(env, Granularity::PerClass), 4, 0.8, init);
    EvalConfig cfg;
    cfg.samples_per_context = 40;
    auto [r1, g1] = evaluate(policy, env, cfg, 1234);
    auto [r2, g2] = evaluate(policy, env, cfg, 1234);
    CHECK(canonical_dump(metrics_to_json(r1)) == canonical_dump(metrics_to_json(r2)));
    CHECK(canonical_dump(json(generations_to_jsonl(g1, lex.vocab()))) ==
          canonical_dump(json(generations_to_jsonl(g2, lex.vocab()))));
    // thread count must not change the bytes
    cfg.threads = 3;
    auto [r3, g3] = evaluate(policy, env, cfg, 1234);
    CHECK(canonical_dump(metrics_to_json(r1)) == canonical_dump(metrics_to_json(r3)));
}

TEST_CASE("report metrics equal an independent recount of the generation log") {
    const ConceptLexicon lex = build_lexicon(default_lexicon_spec());
    EnvConfig env_cfg;
    Rng env_rng(3);
    const Environment env = generate_environment(lex, env_cfg, env_rng);
    Rng init(29);
    const auto policy =
        init_policy(lex.vocab(), make_conditions(env, Granularity::PerClass), 4, 1.2, init);
    EvalConfig cfg;
    cfg.samples_per_context = 60;
    auto [report, records] = evaluate(policy, env, cfg, 555);

    // brute recount, straight over the log
    std::map<int, std::array<int, 5>> tallies;  // fgt_hit, fgt_n, ret_hit, ret_n, hallu
    const TokenSet penalized = lex.penalized_tokens();
    for (const auto& rec : records) {
        auto& t = tallies[rec.prompt_id];
        const Context& ctx = env.context(rec.context_id);
        if (ctx.split == Split::Forget) {
            t[0] += brute::count_in_set(rec.tokens, penalized) > 0 ? 1 : 0;
            t[1] += 1;
        } else {
            bool hit = false;
            for (TokenId id : rec.tokens)
                hit = hit || (ctx.grounded_objects.contains(id) &&
                              lex.retain_keywords().contains(id));
            t[2] += hit ? 1 : 0;
            t[3] += 1;
        }
        t[4] += judge(rec.tokens, ctx, lex).hallucinated ? 1 : 0;
    }
    double cell_sum = 0.0;
    int cells = 0;
    for (const auto& [prompt, t] : tallies) {
        const auto& pm = report.prompts.at(prompt);
        CHECK(pm.forget_rate == 1.0 - static_cast<double>(t[0]) / t[1]);
        CHECK(pm.retain_rate == static_cast<double>(t[2]) / t[3]);
        CHECK(pm.hallu_rate == static_cast<double>(t[4]) / (t[1] + t[3]));
        cell_sum += pm.forget_rate + pm.retain_rate;
        cells += 2;
    }
    CHECK(report.avg == Approx(cell_sum / cells).margin(1e-12));

    // permutation invariance of the pooled rate
    auto shuffled = records;
    std::reverse(shuffled.begin(), shuffled.end());
    int hallu = 0;
    for (const auto& rec : shuffled) hallu += rec.verdict.hallucinated ? 1 : 0;
    CHECK(report.hallu_overall ==
          Approx(static_cast<double>(hallu) / records.size()).margin(1e-15));
}

TEST_CASE("metrics json round-trips") {
    MetricsReport r;
    r.prompts[0] = {0.98, 0.97, 0.01, 200, 200};
    r.prompts[1] = {1.0, 0.96, 0.0, 200, 200};
    r.avg = (0.98 + 0.97 + 1.0 + 0.96) / 4.0;
    r.hallu_overall = 0.005;
    r.samples_per_context = 200;
    r.seed = 42;
    r.config_digest = "deadbeef";
    const auto j = metrics_to_json(r);
    const MetricsReport back = metrics_from_json(j);
    CHECK(canonical_dump(metrics_to_json(back)) == canonical_dump(j));
    CHECK(render_metrics_table(r).find("Avg") != std::string::npos);
}
