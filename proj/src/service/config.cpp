#include "tinyrlhf/service/config.hpp"

#include <fstream>
#include <sstream>

#include "tinyrlhf/error.hpp"

namespace tinyrlhf {
namespace {

Json TaskToJson(const OracleTask& t) {
  Json keywords = Json::array();
  for (const Tokens& k : t.keywords) keywords.push_back(k);
  return {{"kind", TaskKindName(t.kind)},
          {"vocab_size", t.vocab_size},
          {"prompt_length", t.prompt_length},
          {"target", t.target},
          {"keywords", keywords}};
}

Json BackboneToJson(const BackboneConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"context_length", c.context_length},
          {"embed_dim", c.embed_dim},
          {"num_layers", c.num_layers},
          {"num_heads", c.num_heads}};
}

Json PpoToJson(const PpoStageConfig& s) {
  const PPOConfig& p = s.ppo;
  return {{"gamma", p.gamma},
          {"lambda", p.lambda},
          {"clip_epsilon", p.clip_epsilon},
          {"kl_beta", p.kl_beta},
          {"actor_lr", p.actor_lr},
          {"critic_lr", p.critic_lr},
          {"value_clip", p.value_clip},
          {"ppo_epochs", p.ppo_epochs},
          {"rollout_batch_size", p.rollout_batch_size},
          {"normalize_advantages", p.normalize_advantages},
          {"iterations", s.iterations},
          {"max_response_tokens", s.max_response_tokens},
          {"temperature", s.temperature},
          {"top_k", s.top_k},
          {"checkpoint_every", s.checkpoint_every}};
}

// Copies `patch` onto `base`, refusing keys that `base` does not have.
void MergeStrict(Json& base, const Json& patch, const std::string& prefix) {
  if (!patch.is_object()) {
    Fail(ErrorKind::kConfig, "config: '" + prefix + "' must be an object");
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) Fail(ErrorKind::kConfig, "config: unknown key '" + key + "'");
    Json& slot = base[it.key()];
    if (slot.is_object()) {
      MergeStrict(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

template <typename T>
void Read(const Json& obj, const char* key, T& out, const std::string& where) {
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    Fail(ErrorKind::kConfig,
         "config: '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace

void RunConfig::validate() const {
  task.validate();
  actor.validate();
  if (actor.head != HeadKind::kLanguageModel) {
    Fail(ErrorKind::kConfig, "config: actor must use the lm head");
  }
  if (task.vocab_size != actor.vocab_size) {
    Fail(ErrorKind::kConfig, "config: task.vocab_size must equal actor.vocab_size");
  }
  generation_sampler().validate();
  rollout_sampler().validate();
  reward_train_config().validate();
  reward_model_config().validate();
  ppo.ppo.validate();
  if (ppo.iterations < 0) Fail(ErrorKind::kConfig, "config: ppo.iterations must be >= 0");
  if (ppo.checkpoint_every < 0) Fail(ErrorKind::kConfig, "config: ppo.checkpoint_every must be >= 0");
  if (sft.demo_prompts < 0 || sft.epochs < 0 || sft.batch_size < 1) {
    Fail(ErrorKind::kConfig, "config: invalid sft settings");
  }
  if (sft.min_length < 1 || sft.max_length < sft.min_length) {
    Fail(ErrorKind::kConfig, "config: sft lengths must satisfy 1 <= min_length <= max_length");
  }
  if (task.prompt_length + 1 + sft.max_length + 1 > actor.context_length) {
    Fail(ErrorKind::kConfig, "config: sft demonstrations exceed the context length");
  }
  if (generate.num_prompts < 1) Fail(ErrorKind::kConfig, "config: generate.num_prompts must be >= 1");
  if (annotation.source != "oracle" && annotation.source != "human") {
    Fail(ErrorKind::kConfig, "config: annotation.source must be 'oracle' or 'human'");
  }
  if (annotation.oracle_annotators < 1 || annotation.min_annotators < 1) {
    Fail(ErrorKind::kConfig, "config: annotator counts must be >= 1");
  }
  if (!(annotation.oracle_noise >= 0.0)) Fail(ErrorKind::kConfig, "config: annotation.oracle_noise must be >= 0");
  if (annotation.lease_seconds < 1) Fail(ErrorKind::kConfig, "config: annotation.lease_seconds must be >= 1");
  if (evaluate.num_prompts < 1) Fail(ErrorKind::kConfig, "config: evaluate.num_prompts must be >= 1");
}

SamplerConfig RunConfig::generation_sampler() const {
  return {.temperature = generate.temperature,
          .top_k = generate.top_k,
          .max_response_tokens = generate.max_response_tokens,
          .k_responses = generate.k_responses,
          .seed = 0};
}

SamplerConfig RunConfig::rollout_sampler() const {
  return {.temperature = ppo.temperature,
          .top_k = ppo.top_k,
          .max_response_tokens = ppo.max_response_tokens,
          .k_responses = 1,
          .seed = 0};
}

RewardTrainConfig RunConfig::reward_train_config() const {
  return {.margin = reward.margin,
          .learning_rate = reward.learning_rate,
          .batch_size = reward.batch_size,
          .epochs = reward.epochs,
          .held_out_fraction = reward.held_out_fraction,
          .preset = reward.preset,
          .seed = 0};
}

SftConfig RunConfig::sft_train_config() const {
  return {.learning_rate = sft.learning_rate,
          .epochs = sft.epochs,
          .batch_size = sft.batch_size,
          .seed = 0};
}

BackboneConfig RunConfig::reward_model_config() const {
  return reward_backbone(reward.preset, actor.vocab_size, actor.context_length);
}

Json to_json(const RunConfig& c) {
  return {
      {"config_version", c.config_version},
      {"seed", c.seed},
      {"task", TaskToJson(c.task)},
      {"actor", BackboneToJson(c.actor)},
      {"sft",
       {{"demo_prompts", c.sft.demo_prompts},
        {"min_length", c.sft.min_length},
        {"max_length", c.sft.max_length},
        {"learning_rate", c.sft.learning_rate},
        {"epochs", c.sft.epochs},
        {"batch_size", c.sft.batch_size}}},
      {"generate",
       {{"num_prompts", c.generate.num_prompts},
        {"k_responses", c.generate.k_responses},
        {"temperature", c.generate.temperature},
        {"top_k", c.generate.top_k},
        {"max_response_tokens", c.generate.max_response_tokens}}},
      {"annotation",
       {{"source", c.annotation.source},
        {"oracle_annotators", c.annotation.oracle_annotators},
        {"oracle_noise", c.annotation.oracle_noise},
        {"min_annotators", c.annotation.min_annotators},
        {"lease_seconds", c.annotation.lease_seconds}}},
      {"reward",
       {{"preset", RewardPresetName(c.reward.preset)},
        {"margin", c.reward.margin},
        {"learning_rate", c.reward.learning_rate},
        {"batch_size", c.reward.batch_size},
        {"epochs", c.reward.epochs},
        {"held_out_fraction", c.reward.held_out_fraction}}},
      {"ppo", PpoToJson(c.ppo)},
      {"evaluate", {{"num_prompts", c.evaluate.num_prompts}}},
  };
}

RunConfig run_config_from_json(const Json& doc) {
  if (!doc.is_object()) Fail(ErrorKind::kConfig, "config: top level must be an object");
  if (!doc.contains("config_version")) {
    Fail(ErrorKind::kVersionMismatch, "config: missing config_version");
  }
  if (!doc["config_version"].is_number_integer() ||
      doc["config_version"].get<int>() != kConfigVersion) {
    Fail(ErrorKind::kVersionMismatch,
         "config: config_version " + doc["config_version"].dump() +
             " is not supported (expected " + std::to_string(kConfigVersion) + ")");
  }
  Json m = to_json(RunConfig{});
  MergeStrict(m, doc, "");

  RunConfig c;
  Read(m, "config_version", c.config_version, "");
  Read(m, "seed", c.seed, "");

  const Json& t = m["task"];
  std::string kind;
  Read(t, "kind", kind, "task");
  c.task.kind = ParseTaskKind(kind);
  Read(t, "vocab_size", c.task.vocab_size, "task");
  Read(t, "prompt_length", c.task.prompt_length, "task");
  Read(t, "target", c.task.target, "task");
  Read(t, "keywords", c.task.keywords, "task");

  const Json& a = m["actor"];
  Read(a, "vocab_size", c.actor.vocab_size, "actor");
  Read(a, "context_length", c.actor.context_length, "actor");
  Read(a, "embed_dim", c.actor.embed_dim, "actor");
  Read(a, "num_layers", c.actor.num_layers, "actor");
  Read(a, "num_heads", c.actor.num_heads, "actor");

  const Json& s = m["sft"];
  Read(s, "demo_prompts", c.sft.demo_prompts, "sft");
  Read(s, "min_length", c.sft.min_length, "sft");
  Read(s, "max_length", c.sft.max_length, "sft");
  Read(s, "learning_rate", c.sft.learning_rate, "sft");
  Read(s, "epochs", c.sft.epochs, "sft");
  Read(s, "batch_size", c.sft.batch_size, "sft");

  const Json& g = m["generate"];
  Read(g, "num_prompts", c.generate.num_prompts, "generate");
  Read(g, "k_responses", c.generate.k_responses, "generate");
  Read(g, "temperature", c.generate.temperature, "generate");
  Read(g, "top_k", c.generate.top_k, "generate");
  Read(g, "max_response_tokens", c.generate.max_response_tokens, "generate");

  const Json& an = m["annotation"];
  Read(an, "source", c.annotation.source, "annotation");
  Read(an, "oracle_annotators", c.annotation.oracle_annotators, "annotation");
  Read(an, "oracle_noise", c.annotation.oracle_noise, "annotation");
  Read(an, "min_annotators", c.annotation.min_annotators, "annotation");
  Read(an, "lease_seconds", c.annotation.lease_seconds, "annotation");

  const Json& r = m["reward"];
  std::string preset;
  Read(r, "preset", preset, "reward");
  c.reward.preset = ParseRewardPreset(preset);
  Read(r, "margin", c.reward.margin, "reward");
  Read(r, "learning_rate", c.reward.learning_rate, "reward");
  Read(r, "batch_size", c.reward.batch_size, "reward");
  Read(r, "epochs", c.reward.epochs, "reward");
  Read(r, "held_out_fraction", c.reward.held_out_fraction, "reward");

  const Json& p = m["ppo"];
  Read(p, "gamma", c.ppo.ppo.gamma, "ppo");
  Read(p, "lambda", c.ppo.ppo.lambda, "ppo");
  Read(p, "clip_epsilon", c.ppo.ppo.clip_epsilon, "ppo");
  Read(p, "kl_beta", c.ppo.ppo.kl_beta, "ppo");
  Read(p, "actor_lr", c.ppo.ppo.actor_lr, "ppo");
  Read(p, "critic_lr", c.ppo.ppo.critic_lr, "ppo");
  Read(p, "value_clip", c.ppo.ppo.value_clip, "ppo");
  Read(p, "ppo_epochs", c.ppo.ppo.ppo_epochs, "ppo");
  Read(p, "rollout_batch_size", c.ppo.ppo.rollout_batch_size, "ppo");
  Read(p, "normalize_advantages", c.ppo.ppo.normalize_advantages, "ppo");
  Read(p, "iterations", c.ppo.iterations, "ppo");
  Read(p, "max_response_tokens", c.ppo.max_response_tokens, "ppo");
  Read(p, "temperature", c.ppo.temperature, "ppo");
  Read(p, "top_k", c.ppo.top_k, "ppo");
  Read(p, "checkpoint_every", c.ppo.checkpoint_every, "ppo");

  Read(m["evaluate"], "num_prompts", c.evaluate.num_prompts, "evaluate");
  return c;
}

void apply_override(Json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    Fail(ErrorKind::kConfig, "override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value = Json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = raw;

  const Json defaults = to_json(RunConfig{});
  const Json* probe = &defaults;
  Json* slot = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (!probe->is_object() || !probe->contains(part)) {
      Fail(ErrorKind::kConfig, "override: unknown key '" + key + "'");
    }
    probe = &(*probe)[part];
    if (!slot->is_object()) *slot = Json::object();
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (probe->is_object()) {
    Fail(ErrorKind::kConfig, "override: '" + key + "' names a section, not a value");
  }
  *slot = std::move(value);
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  Json doc = {{"config_version", kConfigVersion}};
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) Fail(ErrorKind::kMissingInput, "config file not found: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    doc = Json::parse(buf.str(), nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) {
      Fail(ErrorKind::kConfig, "config file is not valid JSON: " + path.string());
    }
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  RunConfig config = run_config_from_json(doc);
  config.validate();
  return config;
}

}  // namespace tinyrlhf
