#include "rmlab/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "rmlab/error.hpp"
#include "rmlab/io_util.hpp"

namespace rmlab {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::islower(static_cast<unsigned char>(c)) ||
          std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
      return false;
  return true;
}

const char* type_name(ConfigType t) {
  switch (t) {
    case ConfigType::integer: return "integer";
    case ConfigType::real: return "real";
    case ConfigType::boolean: return "boolean";
    case ConfigType::text: return "text";
  }
  return "?";
}

std::int64_t parse_int(const std::string& raw, const std::string& where) {
  std::int64_t v = 0;
  const char* b = raw.data();
  const char* e = b + raw.size();
  if (b != e && *b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  require(res.ec == std::errc() && res.ptr == e, where,
          ": expected an integer, got '", raw, "'");
  return v;
}

double parse_real(const std::string& raw, const std::string& where) {
  require(!raw.empty(), where, ": expected a real number, got empty value");
  char* end = nullptr;
  double v = std::strtod(raw.c_str(), &end);
  require(end == raw.c_str() + raw.size(), where,
          ": expected a real number, got '", raw, "'");
  require(std::isfinite(v), where, ": value '", raw, "' is not finite");
  return v;
}

bool parse_bool(const std::string& raw, const std::string& where) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  fail(where, ": expected true or false, got '", raw, "'");
}

// Validate a raw value against its schema type; the parsed result is thrown
// away here, getters re-parse on access.
void check_type(ConfigType t, const std::string& raw, const std::string& where) {
  switch (t) {
    case ConfigType::integer: parse_int(raw, where); break;
    case ConfigType::real: parse_real(raw, where); break;
    case ConfigType::boolean: parse_bool(raw, where); break;
    case ConfigType::text: break;
  }
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const ConfigSchema& default_schema() {
  static const ConfigSchema schema = {
      {"run.seed", ConfigType::integer},

      {"zoo.count", ConfigType::integer},
      {"zoo.order", ConfigType::integer},
      {"zoo.vocab", ConfigType::integer},
      {"zoo.spread", ConfigType::real},

      {"prompts.texts", ConfigType::integer},
      {"prompts.text_len", ConfigType::integer},
      {"prompts.min_prefix", ConfigType::integer},
      {"prompts.max_prefix", ConfigType::integer},
      {"prompts.instruct_fraction", ConfigType::real},

      {"sampling.temperature", ConfigType::real},
      {"sampling.top_p", ConfigType::real},
      {"sampling.top_k", ConfigType::integer},
      {"sampling.max_len", ConfigType::integer},

      {"clean.repeat_window", ConfigType::integer},
      {"clean.max_repeats", ConfigType::integer},
      {"clean.max_len", ConfigType::integer},

      {"gen.kind", ConfigType::text},
      {"gen.triples", ConfigType::integer},
      {"gen.val_triples", ConfigType::integer},
      {"gen.perturb_eps", ConfigType::real},
      {"gen.zoo", ConfigType::text},

      {"net.embed_dim", ConfigType::integer},
      {"net.hidden_dim", ConfigType::integer},
      {"net.encoder", ConfigType::text},
      {"net.precision", ConfigType::text},
      {"net.max_seq", ConfigType::integer},

      {"pretrain.dataset", ConfigType::text},
      {"pretrain.val_dataset", ConfigType::text},
      {"pretrain.epochs", ConfigType::integer},
      {"pretrain.batch_size", ConfigType::integer},
      {"pretrain.lr", ConfigType::real},
      {"pretrain.optimizer", ConfigType::text},

      {"sft.dataset", ConfigType::text},
      {"sft.val_dataset", ConfigType::text},
      {"sft.init_checkpoint", ConfigType::text},
      {"sft.epochs", ConfigType::integer},
      {"sft.batch_size", ConfigType::integer},
      {"sft.lr", ConfigType::real},
      {"sft.optimizer", ConfigType::text},

      {"eval.dataset", ConfigType::text},
      {"eval.checkpoint", ConfigType::text},

      {"rft.init_policy", ConfigType::text},
      {"rft.target_policy", ConfigType::text},
      {"rft.checkpoint", ConfigType::text},
      {"rft.grader", ConfigType::text},
      {"rft.beta", ConfigType::real},
      {"rft.lr", ConfigType::real},
      {"rft.steps", ConfigType::integer},
      {"rft.rollouts", ConfigType::integer},
      {"rft.baseline", ConfigType::text},
      {"rft.n_prompts", ConfigType::integer},
      {"rft.sft_arm", ConfigType::boolean},
      {"rft.sft_lr", ConfigType::real},
      {"rft.sft_epochs", ConfigType::integer},

      {"scaling.hidden_dims", ConfigType::text},
      {"scaling.embed_dim", ConfigType::integer},
      {"scaling.dataset", ConfigType::text},
      {"scaling.val_dataset", ConfigType::text},
      {"scaling.triples", ConfigType::integer},
      {"scaling.val_triples", ConfigType::integer},
      {"scaling.epochs", ConfigType::integer},
      {"scaling.batch_size", ConfigType::integer},
      {"scaling.lr", ConfigType::real},

      {"gradcheck.pairs", ConfigType::integer},
      {"gradcheck.eps", ConfigType::real},
      {"gradcheck.tolerance", ConfigType::real},
  };
  return schema;
}

Config::Config() : schema_(&default_schema()) {}
Config::Config(const ConfigSchema& schema) : schema_(&schema) {}

Config Config::from_file(const std::filesystem::path& path) {
  return from_text(read_file(path), path.filename().string());
}

Config Config::from_text(const std::string& text, const std::string& origin) {
  return from_text(text, origin, default_schema());
}

Config Config::from_text(const std::string& text, const std::string& origin,
                         const ConfigSchema& schema) {
  Config cfg(schema);
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    std::ostringstream where_os;
    where_os << origin << ":" << line_no;
    std::string where = where_os.str();

    if (std::size_t hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      require(line.back() == ']', where, ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      require(valid_name(section), where, ": bad section name '", section, "'");
      continue;
    }

    std::size_t eq = line.find('=');
    require(eq != std::string::npos, where,
            ": expected 'key = value' or '[section]'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    require(valid_name(key), where, ": bad key name '", key, "'");
    require(!section.empty(), where, ": key '", key,
            "' appears before any [section]");

    std::string full = section + "." + key;
    auto it = schema.find(full);
    require(it != schema.end(), where, ": unknown key '", full, "'");
    check_type(it->second, value, where);
    require(!cfg.entries_.count(full), where, ": duplicate key '", full, "'");
    cfg.entries_[full] = value;
  }
  return cfg;
}

void Config::apply_override(const std::string& spec) {
  std::size_t eq = spec.find('=');
  require(eq != std::string::npos, "override '", spec,
          "' is not of the form section.key=value");
  std::string full = trim(spec.substr(0, eq));
  std::string value = trim(spec.substr(eq + 1));
  auto it = schema_->find(full);
  require(it != schema_->end(), "override: unknown key '", full, "'");
  check_type(it->second, value, "override " + full);
  entries_[full] = value;
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

const std::string* Config::raw_or_null(const std::string& key,
                                       ConfigType want) const {
  auto sit = schema_->find(key);
  require(sit != schema_->end(), "config key '", key, "' is not in the schema");
  require(sit->second == want, "config key '", key, "' is ",
          type_name(sit->second), ", accessed as ", type_name(want));
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

const std::string& Config::raw_or_fail(const std::string& key,
                                       ConfigType want) const {
  const std::string* raw = raw_or_null(key, want);
  require(raw != nullptr, "missing required config key '", key, "'");
  return *raw;
}

std::int64_t Config::get_int(const std::string& key) const {
  std::int64_t v = parse_int(raw_or_fail(key, ConfigType::integer), key);
  consumed_[key] = std::to_string(v);
  return v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const std::string* raw = raw_or_null(key, ConfigType::integer);
  std::int64_t v = raw ? parse_int(*raw, key) : fallback;
  consumed_[key] = std::to_string(v);
  return v;
}

double Config::get_real(const std::string& key) const {
  double v = parse_real(raw_or_fail(key, ConfigType::real), key);
  consumed_[key] = format_real(v);
  return v;
}

double Config::get_real(const std::string& key, double fallback) const {
  const std::string* raw = raw_or_null(key, ConfigType::real);
  double v = raw ? parse_real(*raw, key) : fallback;
  consumed_[key] = format_real(v);
  return v;
}

bool Config::get_bool(const std::string& key) const {
  bool v = parse_bool(raw_or_fail(key, ConfigType::boolean), key);
  consumed_[key] = v ? "true" : "false";
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const std::string* raw = raw_or_null(key, ConfigType::boolean);
  bool v = raw ? parse_bool(*raw, key) : fallback;
  consumed_[key] = v ? "true" : "false";
  return v;
}

std::string Config::get_text(const std::string& key) const {
  std::string v = raw_or_fail(key, ConfigType::text);
  consumed_[key] = v;
  return v;
}

std::string Config::get_text(const std::string& key,
                             const std::string& fallback) const {
  const std::string* raw = raw_or_null(key, ConfigType::text);
  std::string v = raw ? *raw : fallback;
  consumed_[key] = v;
  return v;
}

std::string Config::content_hash() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << "=" << v << "\n";
  return hex16(fnv1a64(os.str()));
}

}  // namespace rmlab
