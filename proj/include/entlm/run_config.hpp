#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "entlm/error.hpp"
#include "entlm/generate.hpp"
#include "entlm/lm/config.hpp"
#include "entlm/pipeline.hpp"
#include "entlm/util.hpp"

#ifndef ENTLM_VERSION
#define ENTLM_VERSION "0.3.0"
#endif

namespace entlm {

// "section.key" -> raw value text, from a small TOML subset: [section]
// headers, key = value lines, '#' comments, quoted or bare values.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::string section;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    std::string line(raw);
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quotes = !in_quotes;
      if (line[i] == '#' && !in_quotes) {
        line.resize(i);
        break;
      }
    }
    const std::string t(trim(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ParseError("malformed section header", line_no);
      section = std::string(trim(std::string_view(t).substr(1, t.size() - 2)));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key(trim(std::string_view(t).substr(0, eq)));
    std::string value(trim(std::string_view(t).substr(eq + 1)));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (value.size() >= 2 && value.front() == '"') {
      if (value.back() != '"') throw ParseError("unterminated string", line_no);
      value = value.substr(1, value.size() - 2);
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) throw ParseError("duplicate key '" + full + "'", line_no);
    out[full] = value;
  }
  return out;
}

struct RunConfig {
  std::string corpus;
  std::string eval_corpus;
  std::string order = "goodnews";
  EntitySource ne_source = EntitySource::kOracle;
  AnnotationScope scope = AnnotationScope::kNarrative;
  std::size_t k = 10;
  std::string model_preset = "nano";
  lm::TrainConfig train;
  SamplerConfig sampler;
  // "stub", "random", or an http:// base URL.
  std::string provider = "stub";
  std::size_t provider_dim = 64;
  std::uint64_t seed = 0;
  std::size_t vocab_size = 8192;

  void set(const std::string& key, const std::string& v) {
    auto to_size = [&] {
      try {
        std::size_t pos = 0;
        if (v.empty() || v.front() < '0' || v.front() > '9') throw std::invalid_argument(v);
        const auto x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
      } catch (const std::exception&) {
        throw ContractError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
      }
    };
    auto to_double = [&] {
      try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
      } catch (const std::exception&) {
        throw ContractError("config key '" + key + "' expects a number, got '" + v + "'");
      }
    };
    if (key == "corpus.path") corpus = v;
    else if (key == "corpus.eval_path") eval_corpus = v;
    else if (key == "corpus.order") order = v;
    else if (key == "entities.source") ne_source = parse_entity_source(v);
    else if (key == "entities.scope") scope = parse_scope(v);
    else if (key == "entities.k") k = to_size();
    else if (key == "model.preset") model_preset = v;
    else if (key == "model.vocab_size") vocab_size = to_size();
    else if (key == "train.batch_size") train.batch_size = to_size();
    else if (key == "train.max_lr") train.max_lr = to_double();
    else if (key == "train.warmup_fraction") train.warmup_fraction = to_double();
    else if (key == "train.total_steps") train.total_steps = to_size();
    else if (key == "train.clip_norm") train.clip_norm = to_double();
    else if (key == "train.weight_decay") train.weight_decay = to_double();
    else if (key == "train.checkpoint_every") train.checkpoint_every = to_size();
    else if (key == "sampler.p") sampler.p = to_double();
    else if (key == "sampler.temperature") sampler.temperature = to_double();
    else if (key == "sampler.max_new_tokens") sampler.max_new_tokens = to_size();
    else if (key == "provider.endpoint") provider = v;
    else if (key == "provider.dim") provider_dim = to_size();
    else if (key == "run.seed") seed = to_size();
    else throw ContractError("unknown config key '" + key + "'");
  }

  void apply(const KeyValues& kv) {
    for (const auto& [k2, v] : kv) set(k2, v);
  }

  void validate() const {
    canonical_order(order);
    lm::model_preset(model_preset);
    train.validate();
    sampler.validate();
    if (ne_source == EntitySource::kClip && provider.empty()) {
      throw ContractError("entity source 'clip' requires a provider endpoint");
    }
  }

  nlohmann::ordered_json to_json() const {
    return {{"corpus", {{"path", corpus}, {"eval_path", eval_corpus}, {"order", order}}},
            {"entities", {{"source", entity_source_name(ne_source)}, {"scope", scope_name(scope)}, {"k", k}}},
            {"model", {{"preset", model_preset}, {"vocab_size", vocab_size}}},
            {"train", lm::to_json(train)},
            {"sampler", {{"p", sampler.p}, {"temperature", sampler.temperature},
                         {"max_new_tokens", sampler.max_new_tokens}}},
            {"provider", {{"endpoint", provider}, {"dim", provider_dim}}},
            {"run", {{"seed", seed}}}};
  }

  std::string fingerprint() const { return hex64(fnv1a64(to_json().dump())); }
};

inline RunConfig load_run_config(const std::string& path) {
  RunConfig c;
  c.apply(parse_key_values(read_file(path)));
  return c;
}

// Everything needed to rerun a command: its arguments, the effective
// configuration, and content hashes of inputs and outputs.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::ordered_json config;
  std::map<std::string, std::string> inputs;   // path -> fnv1a64 of contents
  std::map<std::string, std::string> outputs;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  void add_input(const std::string& path) { inputs[path] = hex64(fnv1a64(read_file(path))); }
  void add_output(const std::string& path) { outputs[path] = hex64(fnv1a64(read_file(path))); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "entlm";
    j["version"] = ENTLM_VERSION;
    j["compiler"] = __VERSION__;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["config_fingerprint"] = hex64(fnv1a64(config.dump()));
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["extra"] = extra;
    return j;
  }

  void write(const std::string& path) const { write_file(path, to_json().dump(2) + "\n"); }
};

}  // namespace entlm
