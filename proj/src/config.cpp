#include "hurricast/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "hurricast/errors.hpp"
#include "hurricast/forecast_io.hpp"
#include "hurricast/io.hpp"

namespace hurricast {

namespace {

template <typename T>
T parse_num(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config: bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config: " + std::string(key) + " expects true/false, got '" + std::string(v) + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
};

template <typename T, typename Ref>
Field num(std::string key, Ref ref) {
  return {std::move(key),
          [ref](const RunConfig& c) {
            const T v = ref(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) return format_exact(v);
            else return std::to_string(v);
          },
          [ref](RunConfig& c, std::string_view k, std::string_view v) { ref(c) = parse_num<T>(k, v); }};
}

template <typename Ref>
Field flag(std::string key, Ref ref) {
  return {std::move(key), [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref](RunConfig& c, std::string_view k, std::string_view v) { ref(c) = parse_bool(k, v); }};
}

template <typename Ref>
Field path(std::string key, Ref ref) {
  return {std::move(key), [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)).string(); },
          [ref](RunConfig& c, std::string_view, std::string_view v) { ref(c) = std::filesystem::path(v); }};
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back(path("paths.tracks", REF(tracks)));
    v.push_back(path("paths.cubes", REF(cubes)));
    v.push_back(path("paths.operational", REF(operational)));
    v.push_back(path("paths.out", REF(out)));
    v.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed()); },
                 [](RunConfig& c, std::string_view k, std::string_view s) { c.set_seed(parse_num<std::uint64_t>(k, s)); }});
    v.push_back(num<int>("variant", REF(pipeline.variant)));
    v.push_back(flag("stat.include_raw_position", REF(pipeline.include_raw_position)));
    v.push_back(num<int>("split.train_first", REF(split.train_first)));
    v.push_back(num<int>("split.train_last", REF(split.train_last)));
    v.push_back(num<int>("split.validation_first", REF(split.validation_first)));
    v.push_back(num<int>("split.validation_last", REF(split.validation_last)));
    v.push_back(num<int>("split.test_first", REF(split.test_first)));
    v.push_back(num<int>("split.test_last", REF(split.test_last)));
    v.push_back(num<int>("gbt.max_depth", REF(pipeline.gbt.max_depth)));
    v.push_back(num<int>("gbt.n_estimators", REF(pipeline.gbt.n_estimators)));
    v.push_back(num<double>("gbt.learning_rate", REF(pipeline.gbt.learning_rate)));
    v.push_back(num<double>("gbt.subsample", REF(pipeline.gbt.subsample)));
    v.push_back(num<double>("gbt.colsample_bytree", REF(pipeline.gbt.colsample_bytree)));
    v.push_back(num<double>("gbt.min_child_weight", REF(pipeline.gbt.min_child_weight)));
    v.push_back(num<double>("gbt.reg_lambda", REF(pipeline.gbt.reg_lambda)));
    v.push_back(flag("gbt.per_basin", REF(pipeline.per_basin)));
    v.push_back(num<double>("neural.lr_intensity", REF(pipeline.intensity_train.learning_rate)));
    v.push_back(num<double>("neural.lr_track", REF(pipeline.track_train.learning_rate)));
    // Shared by both tasks.
    auto both = [](auto member, std::string key, auto parse) {
      return Field{key,
                   [member](const RunConfig& c) {
                     const auto x = c.pipeline.intensity_train.*member;
                     if constexpr (std::is_floating_point_v<decltype(x)>) return format_exact(x);
                     else return std::to_string(x);
                   },
                   [member, parse](RunConfig& c, std::string_view k, std::string_view s) {
                     c.pipeline.intensity_train.*member = parse(k, s);
                     c.pipeline.track_train.*member = parse(k, s);
                   }};
    };
    v.push_back(both(&nn::TrainConfig::batch_size, "neural.batch_size", parse_num<int>));
    v.push_back(both(&nn::TrainConfig::l2, "neural.l2", parse_num<double>));
    v.push_back(both(&nn::TrainConfig::max_epochs, "neural.max_epochs", parse_num<int>));
    v.push_back(both(&nn::TrainConfig::patience, "neural.patience", parse_num<int>));
    v.push_back(num<int>("neural.width1", REF(pipeline.net.encoder.widths[0])));
    v.push_back(num<int>("neural.width2", REF(pipeline.net.encoder.widths[1])));
    v.push_back(num<int>("neural.width3", REF(pipeline.net.encoder.widths[2])));
    v.push_back(num<int>("neural.embedding", REF(pipeline.net.encoder.embedding)));
    v.push_back(num<int>("neural.gru_hidden", REF(pipeline.net.gru_hidden)));
    v.push_back(num<int>("neural.gru_layers", REF(pipeline.net.gru_layers)));
    v.push_back(num<int>("neural.head1", REF(pipeline.net.head1)));
    v.push_back(num<int>("neural.head2", REF(pipeline.net.head2)));
    v.push_back(num<int>("neural.model_dim", REF(pipeline.net.model_dim)));
    v.push_back(num<int>("neural.heads", REF(pipeline.net.heads)));
    v.push_back(num<int>("neural.ff_dim", REF(pipeline.net.ff_dim)));
    v.push_back(num<int>("neural.tf_layers", REF(pipeline.net.tf_layers)));
    v.push_back(flag("neural.positional_encoding", REF(pipeline.net.positional_encoding)));
    v.push_back(num<int>("ensemble.folds", REF(ensemble_folds)));
    v.push_back(num<int>("synth.storms", REF(synth.storms)));
    v.push_back(num<int>("synth.steps", REF(synth.steps)));
    v.push_back({"synth.placement", [](const RunConfig& c) { return std::string(synthetic::label(c.synth.placement)); },
                 [](RunConfig& c, std::string_view, std::string_view s) { c.synth.placement = synthetic::parse_placement(s); }});
    v.push_back(num<double>("synth.noise_sd", REF(synth.noise_sd)));
    v.push_back(num<double>("synth.signal", REF(synth.signal)));
    v.push_back(num<double>("synth.rho", REF(synth.rho)));
    v.push_back(num<int>("synth.operational_members", REF(synth.operational_members)));
    return v;
  }();
  return f;
}

#undef REF

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  pipeline.seed = s;
  synth.seed = s;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, key, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> m;
  for (const auto& f : fields()) m[f.key] = f.get(*this);
  return m;
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : to_map()) s += k + "=" + v + "\n";
  return s;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(io::fnv1a(to_text())));
  return buf;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << to_text();
}

void RunConfig::apply_environment() {
  if (const char* s = std::getenv("HURICAST_SEED"); s && *s) set("seed", s);
}

}  // namespace hurricast
