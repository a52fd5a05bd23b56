#include "tea/run_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tea/model_config_io.hpp"

namespace tea {

using nlohmann::json;

namespace {

const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd:
      return "sgd";
    case OptimizerKind::Momentum:
      return "momentum";
    case OptimizerKind::Adam:
      return "adam";
  }
  return "sgd";
}

OptimizerKind optimizer_from(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "momentum") return OptimizerKind::Momentum;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("train.optimizer must be sgd, momentum or adam, got '" + s + "'");
}

void check_overlay(const json& patch, const json& base, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config: '" + (prefix.empty() ? "<root>" : prefix) + "' must be a table");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    const json& b = base.at(it.key());
    const json& v = it.value();
    if (b.is_object()) {
      check_overlay(v, b, key);
    } else if ((b.is_number() && !v.is_number()) || (b.is_boolean() && !v.is_boolean()) ||
               (b.is_string() && !v.is_string())) {
      throw ConfigError("config: wrong value type for '" + key + "'");
    } else if (b.is_number_integer() && v.is_number_float()) {
      throw ConfigError("config: '" + key + "' must be an integer");
    } else if (b.is_number_unsigned() && v.is_number_integer() && v.get<long long>() < 0) {
      throw ConfigError("config: '" + key + "' must be non-negative");
    }
  }
}

RunConfig from_full_json(const json& j) {
  RunConfig c;
  json m = j.at("model");
  c.model_seed = m.at("seed").get<std::uint64_t>();
  m.erase("seed");
  try {
    c.model = model_config_from_json(m.dump());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: model: ") + e.what());
  }
  const std::string fine = m.at("clues").at("fine_grained_source");
  const std::string global = m.at("clues").at("global_feature_source");
  if (fine != "scene_text" && fine != "scene_text_and_objects") {
    throw ConfigError("config: model.clues.fine_grained_source must be scene_text or scene_text_and_objects");
  }
  if (global != "pooled_entities" && global != "external_file") {
    throw ConfigError("config: model.clues.global_feature_source must be pooled_entities or external_file");
  }

  const auto& s = j.at("synth");
  try {
    c.synth.task = synth_task_from_string(s.at("task"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.synth.num_samples = s.at("num_samples");
  c.synth.frames = s.at("frames");
  c.synth.text_slots = s.at("text_slots");
  c.synth.object_slots = s.at("object_slots");
  c.synth.candidates = s.at("candidates");
  c.synth.tracked_instances = s.at("tracked_instances");
  c.synth.relevant_frames = s.at("relevant_frames");
  c.synth.word_pool = s.at("word_pool");
  c.synth.min_word_len = s.at("min_word_len");
  c.synth.max_word_len = s.at("max_word_len");
  c.synth.corruption_rate = s.at("corruption_rate");
  c.synth.seed = s.at("seed").get<std::uint64_t>();

  const auto& t = j.at("train");
  c.train.epochs = t.at("epochs");
  c.train.max_steps = t.at("max_steps");
  c.train.batch_size = t.at("batch_size");
  c.train.learning_rate = t.at("learning_rate");
  c.train.warmup_steps = t.at("warmup_steps");
  c.train.cosine_decay = t.at("cosine_decay");
  c.train.time_budget_s = t.at("time_budget_s");
  c.train.spatial_lr_mult = t.at("spatial_lr_mult");
  c.train.relabel_texts = t.at("relabel_texts");
  c.train.seed = t.at("seed").get<std::uint64_t>();
  c.train.threads = t.at("threads");
  c.train.optimizer.kind = optimizer_from(t.at("optimizer"));
  c.train.optimizer.momentum = t.at("momentum");
  c.train.optimizer.beta1 = t.at("beta1");
  c.train.optimizer.beta2 = t.at("beta2");
  c.train.optimizer.eps = t.at("eps");
  c.train.optimizer.clip_norm = t.at("clip_norm");
  if (c.train.batch_size < 1 || c.train.epochs < 0 || c.train.max_steps < 0 || c.train.threads < 1) {
    throw ConfigError("config: train needs batch_size >= 1, threads >= 1, epochs and max_steps >= 0");
  }

  const auto& p = j.at("paths");
  c.paths.data = p.at("data");
  c.paths.val_data = p.at("val_data");
  c.paths.checkpoint = p.at("checkpoint");
  c.paths.loss_csv = p.at("loss_csv");
  c.paths.report = p.at("report");
  c.paths.out = p.at("out");
  return c;
}

/// Scalar TOML value -> JSON value.
json toml_value(const std::string& raw, int line_no) {
  std::string v = raw;
  if (v.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": missing value");
  if (v.front() == '"' || v.front() == '\'') {
    const char q = v.front();
    if (v.size() < 2 || v.back() != q) throw ConfigError("config line " + std::to_string(line_no) + ": bad string");
    if (q == '"') {
      try {
        return json::parse(v);
      } catch (const json::exception&) {
        throw ConfigError("config line " + std::to_string(line_no) + ": bad string");
      }
    }
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string digits;
  for (char c : v) {
    if (c != '_') digits.push_back(c);
  }
  try {
    std::size_t used = 0;
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    if (is_float) {
      const double d = std::stod(digits, &used);
      if (used == digits.size()) return d;
    } else {
      const long long i = std::stoll(digits, &used);
      if (used == digits.size()) return i;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config line " + std::to_string(line_no) + ": unsupported value '" + v + "'");
}

std::string strip(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Removes a trailing comment that is not inside a string.
std::string drop_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote != 0) {
      if (c == '\\' && quote == '"') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

json::json_pointer pointer_for(const std::string& dotted) {
  std::string ptr;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    part = strip(part);
    if (part.empty()) throw ConfigError("config: empty name in '" + dotted + "'");
    ptr += "/" + part;
  }
  return json::json_pointer(ptr);
}

}  // namespace

std::string toml_to_json(const std::string& toml_text) {
  json root = json::object();
  std::string table;
  std::istringstream in(toml_text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = strip(drop_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3 || s[1] == '[') {
        throw ConfigError("config line " + std::to_string(line_no) + ": bad table header");
      }
      table = strip(s.substr(1, s.size() - 2));
      root[pointer_for(table)] = json::object();
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = strip(s.substr(0, eq));
    const std::string full = table.empty() ? key : table + "." + key;
    auto ptr = pointer_for(full);
    if (root.contains(ptr)) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + full + "'");
    root[ptr] = toml_value(strip(s.substr(eq + 1)), line_no);
  }
  return root.dump();
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = json::parse(model_config_to_json(model));
  j["model"]["seed"] = model_seed;
  j["synth"] = {{"task", tea::to_string(synth.task)},
                {"num_samples", synth.num_samples},
                {"frames", synth.frames},
                {"text_slots", synth.text_slots},
                {"object_slots", synth.object_slots},
                {"candidates", synth.candidates},
                {"tracked_instances", synth.tracked_instances},
                {"relevant_frames", synth.relevant_frames},
                {"word_pool", synth.word_pool},
                {"min_word_len", synth.min_word_len},
                {"max_word_len", synth.max_word_len},
                {"corruption_rate", synth.corruption_rate},
                {"seed", synth.seed}};
  j["train"] = {{"epochs", train.epochs},
                {"max_steps", train.max_steps},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"warmup_steps", train.warmup_steps},
                {"cosine_decay", train.cosine_decay},
                {"time_budget_s", train.time_budget_s},
                {"spatial_lr_mult", train.spatial_lr_mult},
                {"relabel_texts", train.relabel_texts},
                {"seed", train.seed},
                {"threads", train.threads},
                {"optimizer", optimizer_name(train.optimizer.kind)},
                {"momentum", train.optimizer.momentum},
                {"beta1", train.optimizer.beta1},
                {"beta2", train.optimizer.beta2},
                {"eps", train.optimizer.eps},
                {"clip_norm", train.optimizer.clip_norm}};
  j["paths"] = {{"data", paths.data},         {"val_data", paths.val_data}, {"checkpoint", paths.checkpoint},
                {"loss_csv", paths.loss_csv}, {"report", paths.report},     {"out", paths.out}};
  return j.dump(2);
}

void RunConfig::apply_json(const std::string& json_text) {
  json patch;
  try {
    patch = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  json base = json::parse(to_json());
  check_overlay(patch, base, "");
  base.merge_patch(patch);
  try {
    *this = from_full_json(base);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void RunConfig::apply_toml(const std::string& toml_text) { apply_json(toml_to_json(toml_text)); }

void RunConfig::apply_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  const std::string key = strip(assignment.substr(0, eq));
  const std::string raw = strip(assignment.substr(eq + 1));
  json value;
  try {
    value = toml_value(raw, 0);
  } catch (const ConfigError&) {
    value = raw;  // bare word, e.g. train.optimizer=adam
  }
  json patch = json::object();
  patch[pointer_for(key)] = value;
  apply_json(patch.dump());
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml") {
    apply_toml(ss.str());
  } else {
    apply_json(ss.str());
  }
}

}  // namespace tea
