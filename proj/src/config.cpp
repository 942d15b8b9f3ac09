#include "knnclean/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace knnclean {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

/// Walks one JSON object, dispatching known keys and rejecting the rest.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string prefix) : object_(object), prefix_(std::move(prefix)) {
    if (!object_.is_object()) {
      field_error(prefix_.empty() ? "<root>" : prefix_, "expected an object");
    }
  }

  template <typename Handler>
  ObjectReader& on(const std::string& key, Handler&& handler) {
    handlers_.emplace(key, [h = std::forward<Handler>(handler)](const json& v, const std::string& f) {
      h(v, f);
    });
    return *this;
  }

  void read() const {
    for (const auto& [key, value] : object_.items()) {
      const auto it = handlers_.find(key);
      const std::string field = prefix_.empty() ? key : prefix_ + "." + key;
      if (it == handlers_.end()) throw ConfigError("config: unknown key '" + field + "'");
      it->second(value, field);
    }
  }

 private:
  const json& object_;
  std::string prefix_;
  std::map<std::string, std::function<void(const json&, const std::string&)>> handlers_;
};

std::size_t as_count(const json& v, const std::string& field) {
  if (!v.is_number_unsigned()) field_error(field, "expected a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t as_u64(const json& v, const std::string& field) {
  if (!v.is_number_unsigned()) field_error(field, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

double as_real(const json& v, const std::string& field) {
  if (!v.is_number()) field_error(field, "expected a number");
  return v.get<double>();
}

std::string as_string(const json& v, const std::string& field) {
  if (!v.is_string()) field_error(field, "expected a string");
  return v.get<std::string>();
}

template <typename Parse>
auto as_enum(const json& v, const std::string& field, Parse&& parse) {
  const std::string text = as_string(v, field);
  try {
    return parse(text);
  } catch (const ConfigError& e) {
    field_error(field, e.what());
  }
}

std::vector<std::size_t> as_count_list(const json& v, const std::string& field) {
  if (!v.is_array()) field_error(field, "expected an array of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_count(v[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

TransitionMap as_transitions(const json& v, const std::string& field) {
  try {
    if (v.is_string()) return parse_transitions(v.get<std::string>());
    if (v.is_array()) {
      TransitionMap out;
      for (const auto& pair : v) {
        if (pair.is_string()) {
          for (const auto& [s, t] : parse_transitions(pair.get<std::string>())) out[s] = t;
        } else if (pair.is_array() && pair.size() == 2 && pair[0].is_number_unsigned() &&
                   pair[1].is_number_unsigned()) {
          out[pair[0].get<Label>()] = pair[1].get<Label>();
        } else {
          field_error(field, "expected \"source:target\" strings or [source, target] pairs");
        }
      }
      return out;
    }
  } catch (const ConfigError& e) {
    field_error(field, e.what());
  }
  field_error(field, "expected a transition set name or a list of pairs");
}

std::string transitions_text(const TransitionMap& map) {
  std::string out;
  for (const auto& [s, t] : map) {
    if (!out.empty()) out += ",";
    out += std::to_string(s) + ":" + std::to_string(t);
  }
  return out;
}

}  // namespace

std::string to_string(Correction correction) {
  return correction == Correction::iterknn ? "iterknn" : "selknn";
}

Correction parse_correction(std::string_view text) {
  if (text == "iterknn") return Correction::iterknn;
  if (text == "selknn") return Correction::selknn;
  throw ConfigError("unknown correction '" + std::string(text) + "'");
}

std::string to_string(DeepKnnReference reference) {
  return reference == DeepKnnReference::corrected ? "corrected" : "clean_subset";
}

void PipelineConfig::validate() const {
  if (episodes < 1) field_error("episodes", "must be >= 1");
  if (epochs_per_episode < 1) field_error("epochs_per_episode", "must be >= 1");
  if (k < 1) field_error("k", "must be >= 1");
  if (!(vote.epsilon > 0.0)) field_error("vote.epsilon", "must be > 0");
  if (!(gamma_init > 0.0 && gamma_init <= 1.0)) field_error("gamma_init", "must be in (0, 1]");
  if (!(gamma_decay_factor > 1.0)) field_error("gamma_decay_factor", "must be > 1");
  if (!(selknn_m_init_percent > 0.0 && selknn_m_init_percent <= 100.0)) {
    field_error("selknn_m_init_percent", "must be in (0, 100]");
  }
  if (!(selknn_m_increment_percent > 0.0 && selknn_m_increment_percent <= 100.0)) {
    field_error("selknn_m_increment_percent", "must be in (0, 100]");
  }
  for (auto h : classifier.hidden) {
    if (h < 1) field_error("classifier.hidden", "layer sizes must be >= 1");
  }
  if (classifier.embedding_layer && *classifier.embedding_layer > classifier.hidden.size() + 1) {
    field_error("classifier.embedding_layer", "beyond the output layer");
  }
  if (!(optimizer.learning_rate > 0.0)) field_error("optimizer.learning_rate", "must be > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) field_error("optimizer.beta1", "must be in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) field_error("optimizer.beta2", "must be in [0, 1)");
  if (!(optimizer.epsilon > 0.0)) field_error("optimizer.epsilon", "must be > 0");
  if (!(optimizer.weight_decay >= 0.0)) field_error("optimizer.weight_decay", "must be >= 0");
  if (!(optimizer.lr_decay > 0.0)) field_error("optimizer.lr_decay", "must be > 0");
  if (optimizer.batch_size < 1) field_error("optimizer.batch_size", "must be >= 1");
  if (!(loss.sl_alpha >= 0.0)) field_error("loss.alpha", "must be >= 0");
  if (!(loss.sl_beta >= 0.0)) field_error("loss.beta", "must be >= 0");
  if (!(loss.rce_clip_A < 0.0)) field_error("loss.clip_A", "must be negative");
  if (noise) {
    try {
      noise->validate();
    } catch (const ConfigError& e) {
      field_error("noise", e.what());
    }
  }
}

PipelineConfig config_from_json(const json& root) {
  PipelineConfig c;
  ObjectReader(root, "")
      .on("episodes", [&](const json& v, const std::string& f) { c.episodes = as_count(v, f); })
      .on("epochs_per_episode",
          [&](const json& v, const std::string& f) { c.epochs_per_episode = as_count(v, f); })
      .on("k", [&](const json& v, const std::string& f) { c.k = as_count(v, f); })
      .on("metric", [&](const json& v, const std::string& f) { c.metric = as_enum(v, f, parse_metric); })
      .on("vote",
          [&](const json& v, const std::string& f) {
            ObjectReader(v, f)
                .on("scheme",
                    [&](const json& x, const std::string& g) {
                      c.vote.scheme = as_enum(x, g, parse_vote_scheme);
                    })
                .on("tie_rule",
                    [&](const json& x, const std::string& g) {
                      c.vote.tie_rule = as_enum(x, g, parse_tie_rule);
                    })
                .on("epsilon", [&](const json& x, const std::string& g) { c.vote.epsilon = as_real(x, g); })
                .read();
          })
      .on("correction",
          [&](const json& v, const std::string& f) { c.correction = as_enum(v, f, parse_correction); })
      .on("gamma_init", [&](const json& v, const std::string& f) { c.gamma_init = as_real(v, f); })
      .on("gamma_decay_factor",
          [&](const json& v, const std::string& f) { c.gamma_decay_factor = as_real(v, f); })
      .on("selknn_m_init_percent",
          [&](const json& v, const std::string& f) { c.selknn_m_init_percent = as_real(v, f); })
      .on("selknn_m_increment_percent",
          [&](const json& v, const std::string& f) { c.selknn_m_increment_percent = as_real(v, f); })
      .on("classifier",
          [&](const json& v, const std::string& f) {
            ObjectReader(v, f)
                .on("hidden",
                    [&](const json& x, const std::string& g) { c.classifier.hidden = as_count_list(x, g); })
                .on("embedding_layer",
                    [&](const json& x, const std::string& g) {
                      if (x.is_null()) {
                        c.classifier.embedding_layer.reset();
                      } else {
                        c.classifier.embedding_layer = as_count(x, g);
                      }
                    })
                .read();
          })
      .on("optimizer",
          [&](const json& v, const std::string& f) {
            auto& o = c.optimizer;
            ObjectReader(v, f)
                .on("learning_rate", [&](const json& x, const std::string& g) { o.learning_rate = as_real(x, g); })
                .on("beta1", [&](const json& x, const std::string& g) { o.beta1 = as_real(x, g); })
                .on("beta2", [&](const json& x, const std::string& g) { o.beta2 = as_real(x, g); })
                .on("epsilon", [&](const json& x, const std::string& g) { o.epsilon = as_real(x, g); })
                .on("weight_decay", [&](const json& x, const std::string& g) { o.weight_decay = as_real(x, g); })
                .on("lr_decay", [&](const json& x, const std::string& g) { o.lr_decay = as_real(x, g); })
                .on("lr_milestones",
                    [&](const json& x, const std::string& g) { o.lr_milestones = as_count_list(x, g); })
                .on("batch_size", [&](const json& x, const std::string& g) { o.batch_size = as_count(x, g); })
                .read();
          })
      .on("loss",
          [&](const json& v, const std::string& f) {
            ObjectReader(v, f)
                .on("kind", [&](const json& x, const std::string& g) { c.loss.kind = as_enum(x, g, parse_loss_kind); })
                .on("alpha", [&](const json& x, const std::string& g) { c.loss.sl_alpha = as_real(x, g); })
                .on("beta", [&](const json& x, const std::string& g) { c.loss.sl_beta = as_real(x, g); })
                .on("clip_A", [&](const json& x, const std::string& g) { c.loss.rce_clip_A = as_real(x, g); })
                .read();
          })
      .on("noise",
          [&](const json& v, const std::string& f) {
            if (v.is_null()) {
              c.noise.reset();
              return;
            }
            NoiseSpec spec;
            ObjectReader(v, f)
                .on("kind", [&](const json& x, const std::string& g) { spec.kind = as_enum(x, g, parse_noise_kind); })
                .on("level", [&](const json& x, const std::string& g) { spec.level = as_real(x, g); })
                .on("transitions",
                    [&](const json& x, const std::string& g) { spec.transitions = as_transitions(x, g); })
                .on("seed", [&](const json& x, const std::string& g) { spec.seed = as_u64(x, g); })
                .read();
            c.noise = spec;
          })
      .on("seed", [&](const json& v, const std::string& f) { c.seed = as_u64(v, f); })
      .on("deep_knn_reference",
          [&](const json& v, const std::string& f) {
            c.deep_knn_reference = as_enum(v, f, [](const std::string& t) {
              if (t == "corrected") return DeepKnnReference::corrected;
              if (t == "clean_subset") return DeepKnnReference::clean_subset;
              throw ConfigError("unknown deep-KNN reference '" + t + "'");
            });
          })
      .read();
  c.validate();
  return c;
}

PipelineConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(column) + ": " + e.what());
  }
  return config_from_json(root);
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const PipelineConfig& c) {
  json j;
  j["episodes"] = c.episodes;
  j["epochs_per_episode"] = c.epochs_per_episode;
  j["k"] = c.k;
  j["metric"] = to_string(c.metric);
  j["vote"] = {{"scheme", to_string(c.vote.scheme)},
               {"tie_rule", to_string(c.vote.tie_rule)},
               {"epsilon", c.vote.epsilon}};
  j["correction"] = to_string(c.correction);
  j["gamma_init"] = c.gamma_init;
  j["gamma_decay_factor"] = c.gamma_decay_factor;
  j["selknn_m_init_percent"] = c.selknn_m_init_percent;
  j["selknn_m_increment_percent"] = c.selknn_m_increment_percent;
  j["classifier"] = {{"hidden", c.classifier.hidden},
                     {"embedding_layer", c.classifier.embedding_layer
                                             ? json(*c.classifier.embedding_layer)
                                             : json(nullptr)}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"learning_rate", o.learning_rate}, {"beta1", o.beta1},
                    {"beta2", o.beta2},                 {"epsilon", o.epsilon},
                    {"weight_decay", o.weight_decay},   {"lr_decay", o.lr_decay},
                    {"lr_milestones", o.lr_milestones}, {"batch_size", o.batch_size}};
  j["loss"] = {{"kind", to_string(c.loss.kind)},
               {"alpha", c.loss.sl_alpha},
               {"beta", c.loss.sl_beta},
               {"clip_A", c.loss.rce_clip_A}};
  if (c.noise) {
    json noise = {{"kind", to_string(c.noise->kind)}, {"level", c.noise->level}, {"seed", c.noise->seed}};
    if (!c.noise->transitions.empty()) noise["transitions"] = transitions_text(c.noise->transitions);
    j["noise"] = noise;
  } else {
    j["noise"] = nullptr;
  }
  j["seed"] = c.seed;
  j["deep_knn_reference"] = to_string(c.deep_knn_reference);
  return j;
}

}  // namespace knnclean
