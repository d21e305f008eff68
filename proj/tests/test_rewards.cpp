#include <catch2/catch_amalgamated.hpp>

#include "ulab/rewards.hpp"
#include "ulab/rng.hpp"

#include "support/brute.hpp"

using namespace ulab;
using Catch::Approx;

namespace {

ConceptLexicon test_lexicon() {
    LexiconSpec spec;
    spec.vocabulary = {"the", "a",   "an",      "and",     "dog",  "canine", "puppy",
                       "hound", "animal", "creature", "giraffe", "runs", "by",     "maybe"};
    spec.forget = {"dog"};
    spec.synonyms["dog"] = {"canine", "puppy", "hound"};
    spec.hypernyms["dog"] = {"animal", "creature"};
    spec.retain = {"giraffe"};
    spec.hedges = {"maybe"};
    return build_lexicon(spec);
}

Sequence seq(const ConceptLexicon& lex, const std::vector<std::string>& words) {
    return sequence_from_strings(lex.vocab(), words);
}

}  // namespace

TEST_CASE("reward_pen counts penalized tokens") {
    const auto lex = test_lexicon();
    CHECK(reward_pen(seq(lex, {"a", "dog", "and", "puppy"}), lex, 0.3) == Approx(-0.6));
    CHECK(reward_pen(seq(lex, {"the", "giraffe", "runs", "by"}), lex, 0.3) == 0.0);
    CHECK(reward_pen(seq(lex, {"a", "dog", "and", "puppy"}), lex, 0.0) == 0.0);
    CHECK(reward_pen(seq(lex, {"dog", "puppy", "hound", "canine"}), lex, 0.3) == Approx(-1.2));
}

TEST_CASE("reward_abs pays once per sequence") {
    const auto lex = test_lexicon();
    CHECK(reward_abs(seq(lex, {"an", "animal", "runs", "by"}), lex, 0.5) == Approx(0.5));
    CHECK(reward_abs(seq(lex, {"animal", "animal", "runs", "by"}), lex, 0.5) == Approx(0.5));
    CHECK(reward_abs(seq(lex, {"the", "giraffe", "runs", "by"}), lex, 0.5) == 0.0);
    // ablation variant: per occurrence
    CHECK(reward_abs(seq(lex, {"animal", "animal", "runs", "by"}), lex, 0.5, true) ==
          Approx(1.0));
}

TEST_CASE("reward_forget sums its two components") {
    const auto lex = test_lexicon();
    RewardConfig cfg;  // 0.3 / 0.5 defaults
    CHECK(reward_forget(seq(lex, {"the", "dog", "an", "animal"}), lex, cfg) == Approx(0.2));
    CHECK(reward_forget(seq(lex, {"the", "a", "runs", "by"}), lex, cfg) == 0.0);
    CHECK(reward_forget(seq(lex, {"dog", "puppy", "hound", "canine"}), lex, cfg) ==
          Approx(-1.2));
}

TEST_CASE("reward_retain is a presence indicator") {
    const auto lex = test_lexicon();
    CHECK(reward_retain(seq(lex, {"a", "giraffe", "runs", "by"}), lex) == 1.0);
    CHECK(reward_retain(seq(lex, {"giraffe", "giraffe", "giraffe", "giraffe"}), lex) == 1.0);
    CHECK(reward_retain(seq(lex, {"a", "dog", "runs", "by"}), lex) == 0.0);
}

TEST_CASE("assign_reward dispatches on the split") {
    const auto lex = test_lexicon();
    RewardConfig cfg;
    const Sequence hyper_only = seq(lex, {"an", "animal", "runs", "by"});
    CHECK(assign_reward(Split::Forget, hyper_only, lex, cfg) == Approx(0.5));
    CHECK(assign_reward(Split::Retain, hyper_only, lex, cfg) == 0.0);
    CHECK(assign_reward(Split::Retain, seq(lex, {"a", "giraffe", "runs", "by"}), lex, cfg) ==
          1.0);
}

TEST_CASE("reward properties against a brute-force token scan") {
    const auto lex = test_lexicon();
    RewardConfig cfg;
    Rng rng(11);
    const TokenId vocab_size = lex.vocab().size();
    const TokenSet penalized = lex.penalized_tokens();
    for (int trial = 0; trial < 200; ++trial) {
        Sequence s;
        const int len = rng.uniform_int(6);
        for (int i = 0; i < len; ++i) s.push_back(1 + rng.uniform_int(vocab_size - 1));

        // independent recount
        const int pen_count = brute::count_in_set(s, penalized);
        const bool has_hyper = brute::count_in_set(s, lex.hypernym_tokens()) > 0;
        CHECK(reward_pen(s, lex, cfg.lambda1) == Approx(-cfg.lambda1 * pen_count));
        CHECK(reward_abs(s, lex, cfg.lambda2) == Approx(has_hyper ? cfg.lambda2 : 0.0));
        CHECK(reward_pen(s, lex, cfg.lambda1) <= 0.0);

        // appending one forget token lowers R_pen by exactly lambda1
        Sequence extended = s;
        extended.push_back(lex.vocab().id_of("dog"));
        CHECK(reward_pen(extended, lex, cfg.lambda1) ==
              Approx(reward_pen(s, lex, cfg.lambda1) - cfg.lambda1));

        // R_abs is monotone under token insertion
        Sequence inserted = s;
        inserted.insert(inserted.begin(), 1 + rng.uniform_int(vocab_size - 1));
        CHECK(reward_abs(inserted, lex, cfg.lambda2) >= reward_abs(s, lex, cfg.lambda2));

        // R_retain invariant under duplication
        if (!s.empty()) {
            Sequence dup = s;
            dup.push_back(s[0]);
            CHECK(reward_retain(dup, lex) == reward_retain(s, lex));
        }

        // purity
        CHECK(reward_forget(s, lex, cfg) == reward_forget(s, lex, cfg));
    }
}
