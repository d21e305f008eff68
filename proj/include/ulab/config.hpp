#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "ulab/environment.hpp"
#include "ulab/evaluation.hpp"
#include "ulab/grpo.hpp"
#include "ulab/json_io.hpp"
#include "ulab/lexicon.hpp"

namespace ulab {

struct PolicyConfig {
    int sequence_length = 4;
    Granularity granularity = Granularity::PerClass;
    History history = History::Markov1;
    double init_scale = 0.0;
    std::size_t enumeration_cap = kDefaultEnumerationCap;
};

struct ColdStartConfig {
    double learning_rate = 0.5;
    int epochs = 40;
};

struct LemmaConfig {
    bool enabled = true;
    int instances = 200;
    double beta = 1.0;  // analysis setting; training beta stresses fp range
};

// Everything one run needs. Validated against the published schema before
// any stage executes; unknown keys are rejected.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    std::string lexicon_path;  // empty = built-in default lexicon
    EnvConfig environment;
    PolicyConfig policy;
    ColdStartConfig cold_start;
    RewardConfig reward;
    TrainConfig train;
    EvalConfig evaluation;
    LemmaConfig lemma;
    int threads = 1;

    // reference for the KL anchor: cold-started policy or the initial one
    enum class Reference { ColdStart, Initial };
    Reference reference = Reference::ColdStart;
};

inline LexiconSpec default_lexicon_spec() {
    LexiconSpec spec;
    spec.vocabulary = {"the",      "a",       "look", "at",     "there", "is",
                       "dog",      "puppy",   "hound", "animal", "creature",
                       "giraffe",  "cat",     "rabbit", "maybe", "possibly"};
    spec.forget = {"dog"};
    spec.synonyms["dog"] = {"puppy", "hound"};
    spec.hypernyms["dog"] = {"animal", "creature"};
    spec.hypernyms["giraffe"] = {"animal", "creature"};
    spec.hypernyms["cat"] = {"animal", "creature"};
    spec.hypernyms["rabbit"] = {"animal", "creature"};
    spec.retain = {"giraffe"};
    spec.hedges = {"maybe", "possibly"};
    return spec;
}

namespace detail {

inline void check_keys(const json& j, const char* where,
                       std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known = known || it.key() == k;
        if (!known)
            throw ConfigError("unknown config key: " + std::string(where) + "." + it.key());
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

}  // namespace detail

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["lexicon_path"] = c.lexicon_path;
    j["threads"] = c.threads;

    json env;
    env["n_contexts"] = c.environment.n_contexts;
    env["train_fraction"] = c.environment.train_fraction;
    env["forget_objects"] = c.environment.forget_objects;
    env["retain_objects"] = c.environment.retain_objects;
    env["templates"] = c.environment.templates;
    j["environment"] = env;

    json pol;
    pol["sequence_length"] = c.policy.sequence_length;
    pol["granularity"] = to_string(c.policy.granularity);
    pol["history"] = to_string(c.policy.history);
    pol["init_scale"] = c.policy.init_scale;
    pol["enumeration_cap"] = c.policy.enumeration_cap;
    j["policy"] = pol;

    json cold;
    cold["learning_rate"] = c.cold_start.learning_rate;
    cold["epochs"] = c.cold_start.epochs;
    j["cold_start"] = cold;

    json rew;
    rew["lambda1"] = c.reward.lambda1;
    rew["lambda2"] = c.reward.lambda2;
    rew["abs_per_occurrence"] = c.reward.abs_per_occurrence;
    j["reward"] = rew;

    json tr;
    tr["group_size"] = c.train.group_size;
    tr["clip_eps"] = c.train.clip_eps;
    tr["beta"] = c.train.beta;
    tr["adv_eps"] = c.train.adv_eps;
    tr["learning_rate"] = c.train.lr;
    tr["iterations"] = c.train.iterations;
    tr["inner_epochs"] = c.train.inner_epochs;
    tr["mode"] = to_string(c.train.mode);
    tr["sample_stddev"] = c.train.sample_stddev;
    tr["contexts_per_class"] = c.train.contexts_per_class;
    tr["train_prompts"] = c.train.train_prompts;
    tr["reference"] =
        c.reference == ExperimentConfig::Reference::ColdStart ? "coldstart" : "initial";
    j["train"] = tr;

    json ev;
    ev["samples_per_context"] = c.evaluation.samples_per_context;
    ev["temperature"] = c.evaluation.temperature;
    j["evaluation"] = ev;

    json lem;
    lem["enabled"] = c.lemma.enabled;
    lem["instances"] = c.lemma.instances;
    lem["beta"] = c.lemma.beta;
    j["lemma"] = lem;
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    detail::check_keys(j, "config",
                       {"seed", "output_dir", "lexicon_path", "environment", "policy",
                        "cold_start", "reward", "train", "evaluation", "lemma", "threads"});
    ExperimentConfig c;
    c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
    c.output_dir = detail::get_or<std::string>(j, "output_dir", c.output_dir);
    c.lexicon_path = detail::get_or<std::string>(j, "lexicon_path", c.lexicon_path);
    c.threads = detail::get_or<int>(j, "threads", c.threads);
    if (c.threads < 1) throw ConfigError("config key 'threads' must be >= 1");

    if (j.contains("environment")) {
        const json& env = j.at("environment");
        detail::check_keys(env, "environment",
                           {"n_contexts", "train_fraction", "forget_objects", "retain_objects",
                            "templates"});
        c.environment.n_contexts = detail::get_or<int>(env, "n_contexts", 10);
        c.environment.train_fraction = detail::get_or<double>(env, "train_fraction", 0.8);
        c.environment.forget_objects = detail::get_or<std::vector<std::string>>(
            env, "forget_objects", c.environment.forget_objects);
        c.environment.retain_objects = detail::get_or<std::vector<std::string>>(
            env, "retain_objects", c.environment.retain_objects);
        c.environment.templates = detail::get_or<std::vector<std::vector<std::string>>>(
            env, "templates", c.environment.templates);
    }

    if (j.contains("policy")) {
        const json& pol = j.at("policy");
        detail::check_keys(pol, "policy",
                           {"sequence_length", "granularity", "history", "init_scale",
                            "enumeration_cap"});
        c.policy.sequence_length = detail::get_or<int>(pol, "sequence_length", 4);
        const std::string gran = detail::get_or<std::string>(pol, "granularity", "class");
        if (gran == "class")
            c.policy.granularity = Granularity::PerClass;
        else if (gran == "context")
            c.policy.granularity = Granularity::PerContext;
        else
            throw ConfigError("config key 'policy.granularity' must be 'class' or 'context'");
        const std::string hist = detail::get_or<std::string>(pol, "history", "markov1");
        if (hist == "markov1")
            c.policy.history = History::Markov1;
        else if (hist == "full")
            c.policy.history = History::Full;
        else
            throw ConfigError("config key 'policy.history' must be 'markov1' or 'full'");
        c.policy.init_scale = detail::get_or<double>(pol, "init_scale", 0.0);
        c.policy.enumeration_cap =
            detail::get_or<std::size_t>(pol, "enumeration_cap", kDefaultEnumerationCap);
        if (c.policy.sequence_length < 1)
            throw ConfigError("config key 'policy.sequence_length' must be >= 1");
        if (c.policy.init_scale < 0)
            throw ConfigError("config key 'policy.init_scale' must be >= 0");
    }

    if (j.contains("cold_start")) {
        const json& cold = j.at("cold_start");
        detail::check_keys(cold, "cold_start", {"learning_rate", "epochs"});
        c.cold_start.learning_rate = detail::get_or<double>(cold, "learning_rate", 0.5);
        c.cold_start.epochs = detail::get_or<int>(cold, "epochs", 40);
        if (c.cold_start.learning_rate <= 0)
            throw ConfigError("config key 'cold_start.learning_rate' must be > 0");
        if (c.cold_start.epochs < 0)
            throw ConfigError("config key 'cold_start.epochs' must be >= 0");
    }

    if (j.contains("reward")) {
        const json& rew = j.at("reward");
        detail::check_keys(rew, "reward", {"lambda1", "lambda2", "abs_per_occurrence"});
        c.reward.lambda1 = detail::get_or<double>(rew, "lambda1", 0.3);
        c.reward.lambda2 = detail::get_or<double>(rew, "lambda2", 0.5);
        c.reward.abs_per_occurrence = detail::get_or<bool>(rew, "abs_per_occurrence", false);
        if (c.reward.lambda1 < 0 || c.reward.lambda2 < 0)
            throw ConfigError("config keys 'reward.lambda1'/'reward.lambda2' must be >= 0");
    }

    if (j.contains("train")) {
        const json& tr = j.at("train");
        detail::check_keys(tr, "train",
                           {"group_size", "clip_eps", "beta", "adv_eps", "learning_rate",
                            "iterations", "inner_epochs", "mode", "sample_stddev",
                            "contexts_per_class", "train_prompts", "reference"});
        c.train.group_size = detail::get_or<int>(tr, "group_size", 5);
        c.train.clip_eps = detail::get_or<double>(tr, "clip_eps", 0.2);
        c.train.beta = detail::get_or<double>(tr, "beta", 0.01);
        c.train.adv_eps = detail::get_or<double>(tr, "adv_eps", 1e-6);
        c.train.lr = detail::get_or<double>(tr, "learning_rate", 0.1);
        c.train.iterations = detail::get_or<int>(tr, "iterations", 500);
        c.train.inner_epochs = detail::get_or<int>(tr, "inner_epochs", 1);
        const std::string mode = detail::get_or<std::string>(tr, "mode", "composite");
        if (mode == "composite")
            c.train.mode = TrainMode::Composite;
        else if (mode == "penalty-only")
            c.train.mode = TrainMode::PenaltyOnly;
        else
            throw ConfigError("config key 'train.mode' must be 'composite' or 'penalty-only'");
        c.train.sample_stddev = detail::get_or<bool>(tr, "sample_stddev", false);
        c.train.contexts_per_class = detail::get_or<int>(tr, "contexts_per_class", 0);
        c.train.train_prompts =
            detail::get_or<std::vector<int>>(tr, "train_prompts", std::vector<int>{});
        const std::string ref = detail::get_or<std::string>(tr, "reference", "coldstart");
        if (ref == "coldstart")
            c.reference = ExperimentConfig::Reference::ColdStart;
        else if (ref == "initial")
            c.reference = ExperimentConfig::Reference::Initial;
        else
            throw ConfigError("config key 'train.reference' must be 'coldstart' or 'initial'");
        c.train.validate();
    }

    if (j.contains("evaluation")) {
        const json& ev = j.at("evaluation");
        detail::check_keys(ev, "evaluation", {"samples_per_context", "temperature"});
        c.evaluation.samples_per_context = detail::get_or<int>(ev, "samples_per_context", 200);
        c.evaluation.temperature = detail::get_or<double>(ev, "temperature", 1.0);
        if (c.evaluation.samples_per_context < 1)
            throw ConfigError("config key 'evaluation.samples_per_context' must be >= 1");
        if (c.evaluation.temperature <= 0)
            throw ConfigError("config key 'evaluation.temperature' must be > 0");
    }

    if (j.contains("lemma")) {
        const json& lem = j.at("lemma");
        detail::check_keys(lem, "lemma", {"enabled", "instances", "beta"});
        c.lemma.enabled = detail::get_or<bool>(lem, "enabled", true);
        c.lemma.instances = detail::get_or<int>(lem, "instances", 200);
        c.lemma.beta = detail::get_or<double>(lem, "beta", 1.0);
        if (c.lemma.instances < 0)
            throw ConfigError("config key 'lemma.instances' must be >= 0");
        if (c.lemma.beta <= 0) throw ConfigError("config key 'lemma.beta' must be > 0");
    }

    // threads fan out into the stage configs
    c.train.threads = c.threads;
    c.evaluation.threads = c.threads;
    c.train.enumeration_cap = c.policy.enumeration_cap;
    return c;
}

inline std::string config_digest(const ExperimentConfig& c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_dump(config_to_json(c)))));
    return buf;
}

}  // namespace ulab
