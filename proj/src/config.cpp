#include "cal/config.hpp"

#include "cal/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace cal {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += fmt(xs[i]);
  }
  return out;
}

struct Key {
  std::string name;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::optional<std::string>(const TrainConfig&)> get;  // nullopt: omit
};

std::string idx(Index v) { return std::to_string(v); }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add = [&k](std::string name, auto set, auto get) { k.push_back({std::move(name), set, get}); };
    using C = TrainConfig;
    using S = const std::string&;
    add("dataset", [](C& c, S v) { c.dataset = v; }, [](const C& c) -> std::optional<std::string> {
      if (c.dataset.empty()) return std::nullopt;
      return c.dataset;
    });
    add("classes", [](C& c, S v) { c.data.classes = to_int<int>("classes", v); },
        [](const C& c) -> std::optional<std::string> { return std::to_string(c.data.classes); });
    add("dims", [](C& c, S v) {
          c.data.dims.clear();
          for (auto& s : split_list(v)) c.data.dims.push_back(to_int<Index>("dims", s));
        },
        [](const C& c) -> std::optional<std::string> { return join(c.data.dims, idx); });
    add("signal", [](C& c, S v) {
          c.data.signal.clear();
          for (auto& s : split_list(v)) c.data.signal.push_back(to_double("signal", s));
        },
        [](const C& c) -> std::optional<std::string> { return join(c.data.signal, format_double); });
    add("stddev", [](C& c, S v) { c.data.stddev = to_double("stddev", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.data.stddev); });
    add("n_train", [](C& c, S v) { c.data.n_train = to_int<Index>("n_train", v); },
        [](const C& c) -> std::optional<std::string> { return idx(c.data.n_train); });
    add("n_val", [](C& c, S v) { c.data.n_val = to_int<Index>("n_val", v); },
        [](const C& c) -> std::optional<std::string> { return idx(c.data.n_val); });
    add("n_test", [](C& c, S v) { c.data.n_test = to_int<Index>("n_test", v); },
        [](const C& c) -> std::optional<std::string> { return idx(c.data.n_test); });
    add("data_seed", [](C& c, S v) { c.data_seed = to_int<std::uint64_t>("data_seed", v); },
        [](const C& c) -> std::optional<std::string> {
          if (!c.data_seed) return std::nullopt;
          return std::to_string(*c.data_seed);
        });
    add("epochs", [](C& c, S v) { c.epochs = to_int<int>("epochs", v); },
        [](const C& c) -> std::optional<std::string> { return std::to_string(c.epochs); });
    add("batch_size", [](C& c, S v) { c.batch_size = to_int<Index>("batch_size", v); },
        [](const C& c) -> std::optional<std::string> { return idx(c.batch_size); });
    add("lr", [](C& c, S v) { c.lr = to_double("lr", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.lr); });
    add("momentum", [](C& c, S v) { c.momentum = to_double("momentum", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.momentum); });
    add("weight_decay", [](C& c, S v) { c.weight_decay = to_double("weight_decay", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.weight_decay); });
    add("temperature", [](C& c, S v) { c.temperature = to_double("temperature", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.temperature); });
    add("eta", [](C& c, S v) { c.eta = to_double("eta", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.eta); });
    add("lambda", [](C& c, S v) { c.lambda = to_double("lambda", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.lambda); });
    add("lag", [](C& c, S v) { c.lag = to_int<int>("lag", v); },
        [](const C& c) -> std::optional<std::string> { return std::to_string(c.lag); });
    add("eps", [](C& c, S v) { c.eps = to_double("eps", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.eps); });
    add("strategy", [](C& c, S v) { c.strategy = parse_strategy(v); },
        [](const C& c) -> std::optional<std::string> { return to_string(c.strategy); });
    add("aib_variant", [](C& c, S v) { c.aib_variant = parse_aib_variant(v); },
        [](const C& c) -> std::optional<std::string> { return to_string(c.aib_variant); });
    add("contribution_mode", [](C& c, S v) { c.contribution_mode = parse_contribution_mode(v); },
        [](const C& c) -> std::optional<std::string> { return to_string(c.contribution_mode); });
    add("ablation_mode", [](C& c, S v) { c.ablation_mode = parse_ablation_mode(v); },
        [](const C& c) -> std::optional<std::string> { return to_string(c.ablation_mode); });
    add("retrain_steps", [](C& c, S v) { c.retrain_steps = to_int<int>("retrain_steps", v); },
        [](const C& c) -> std::optional<std::string> { return std::to_string(c.retrain_steps); });
    add("beta_on_compression", [](C& c, S v) { c.beta_on_compression = to_bool("beta_on_compression", v); },
        [](const C& c) -> std::optional<std::string> { return c.beta_on_compression ? "true" : "false"; });
    add("mi_zx_per_dim", [](C& c, S v) { c.mi_zx_per_dim = to_bool("mi_zx_per_dim", v); },
        [](const C& c) -> std::optional<std::string> { return c.mi_zx_per_dim ? "true" : "false"; });
    add("modulate_heads", [](C& c, S v) { c.modulate_heads = to_bool("modulate_heads", v); },
        [](const C& c) -> std::optional<std::string> { return c.modulate_heads ? "true" : "false"; });
    add("loss_weights", [](C& c, S v) {
          c.loss_weights.clear();
          for (auto& s : split_list(v)) c.loss_weights.push_back(to_double("loss_weights", s));
        },
        [](const C& c) -> std::optional<std::string> {
          if (c.loss_weights.empty()) return std::nullopt;
          return join(c.loss_weights, format_double);
        });
    add("encoder_hidden", [](C& c, S v) {
          c.encoder_hidden.clear();
          for (auto& s : split_list(v)) c.encoder_hidden.push_back(to_int<Index>("encoder_hidden", s));
        },
        [](const C& c) -> std::optional<std::string> { return join(c.encoder_hidden, idx); });
    add("latent_dim", [](C& c, S v) { c.latent_dim = to_int<Index>("latent_dim", v); },
        [](const C& c) -> std::optional<std::string> { return idx(c.latent_dim); });
    add("fusion_hidden", [](C& c, S v) { c.fusion_hidden = to_int<Index>("fusion_hidden", v); },
        [](const C& c) -> std::optional<std::string> { return idx(c.fusion_hidden); });
    add("activation", [](C& c, S v) { c.activation = parse_activation(v); },
        [](const C& c) -> std::optional<std::string> { return to_string(c.activation); });
    add("seed", [](C& c, S v) { c.seed = to_int<std::uint64_t>("seed", v); },
        [](const C& c) -> std::optional<std::string> { return std::to_string(c.seed); });
    add("noise", [](C& c, S v) { c.noise = parse_noise(v); },
        [](const C& c) -> std::optional<std::string> { return c.noise ? to_string(*c.noise) : "none"; });
    add("epsilon", [](C& c, S v) { c.epsilon = to_double("epsilon", v); },
        [](const C& c) -> std::optional<std::string> { return format_double(c.epsilon); });
    add("noise_scope", [](C& c, S v) { c.noise_scope = parse_noise_scope(v); },
        [](const C& c) -> std::optional<std::string> { return to_string(c.noise_scope); });
    add("noise_modalities", [](C& c, S v) {
          c.noise_modalities.clear();
          for (auto& s : split_list(v)) c.noise_modalities.push_back(to_int<int>("noise_modalities", s));
        },
        [](const C& c) -> std::optional<std::string> {
          return join(c.noise_modalities, [](int m) { return std::to_string(m); });
        });
    add("noise_seed", [](C& c, S v) { c.noise_seed = to_int<std::uint64_t>("noise_seed", v); },
        [](const C& c) -> std::optional<std::string> { return std::to_string(c.noise_seed); });
    add("reference", [](C& c, S v) { c.reference = to_bool("reference", v); },
        [](const C& c) -> std::optional<std::string> { return c.reference ? "true" : "false"; });
    add("record_wall_time", [](C& c, S v) { c.record_wall_time = to_bool("record_wall_time", v); },
        [](const C& c) -> std::optional<std::string> { return c.record_wall_time ? "true" : "false"; });
    return k;
  }();
  return table;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Strategy parse_strategy(const std::string& s) {
  if (s == "strong") return Strategy::strong;
  if (s == "null") return Strategy::null;
  if (s == "weak") return Strategy::weak;
  if (s == "ogm") return Strategy::ogm;
  throw ConfigError("unknown strategy '" + s + "' (strong|null|weak|ogm)");
}

AibVariant parse_aib_variant(const std::string& s) {
  if (s == "beta") return AibVariant::beta;
  if (s == "inv-beta") return AibVariant::inv_beta;
  if (s == "mi") return AibVariant::mi;
  if (s == "mx") return AibVariant::mx;
  if (s == "mx-mi") return AibVariant::mx_mi;
  if (s == "off") return AibVariant::off;
  throw ConfigError("unknown aib variant '" + s + "' (beta|inv-beta|mi|mx|mx-mi|off)");
}

ContributionMode parse_contribution_mode(const std::string& s) {
  if (s == "dxi") return ContributionMode::dxi;
  if (s == "d-plus-i") return ContributionMode::d_plus_i;
  if (s == "d-only") return ContributionMode::d_only;
  if (s == "i-only") return ContributionMode::i_only;
  if (s == "kl") return ContributionMode::kl;
  throw ConfigError("unknown contribution mode '" + s + "' (dxi|d-plus-i|d-only|i-only|kl)");
}

AblationMode parse_ablation_mode(const std::string& s) {
  if (s == "mask") return AblationMode::mask;
  if (s == "retrain") return AblationMode::retrain;
  throw ConfigError("unknown ablation mode '" + s + "' (mask|retrain)");
}

std::optional<NoiseKind> parse_noise(const std::string& s) {
  if (s == "none") return std::nullopt;
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "salt-pepper") return NoiseKind::salt_pepper;
  throw ConfigError("unknown noise '" + s + "' (gaussian|salt-pepper|none)");
}

NoiseScope parse_noise_scope(const std::string& s) {
  if (s == "test") return NoiseScope::test_only;
  if (s == "train-test") return NoiseScope::train_and_test;
  throw ConfigError("unknown noise scope '" + s + "' (test|train-test)");
}

ActivationKind parse_activation(const std::string& s) {
  if (s == "relu") return ActivationKind::relu;
  if (s == "tanh") return ActivationKind::tanh;
  throw ConfigError("unknown activation '" + s + "' (relu|tanh)");
}

std::vector<double> TrainConfig::resolved_loss_weights(int modalities) const {
  if (loss_weights.empty()) return std::vector<double>(static_cast<std::size_t>(modalities), 1.0);
  if (static_cast<int>(loss_weights.size()) != modalities)
    throw ConfigError("config: loss_weights needs one entry per modality");
  return loss_weights;
}

std::optional<NoiseSpec> TrainConfig::noise_spec() const {
  if (!noise) return std::nullopt;
  return NoiseSpec{*noise, epsilon, noise_scope, noise_modalities, noise_seed};
}

ModelConfig TrainConfig::model_config(const DatasetSpec& spec) const {
  ModelConfig m;
  m.input_dims = spec.dims;
  m.classes = spec.classes;
  m.encoder_hidden = encoder_hidden;
  m.latent_dim = latent_dim;
  m.fusion_hidden = fusion_hidden;
  m.activation = activation;
  return m;
}

ContributionConfig TrainConfig::contribution_config() const {
  ContributionConfig c;
  c.mode = contribution_mode;
  c.ablation = ablation_mode;
  c.lag = lag;
  c.eps = eps;
  c.retrain_steps = retrain_steps;
  return c;
}

void TrainConfig::validate() const {
  if (dataset.empty()) data.validate();
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("config: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("config: weight_decay must be non-negative");
  if (!(temperature > 0.0)) throw ConfigError("config: temperature must be positive");
  if (!(eta >= 0.0)) throw ConfigError("config: eta must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("config: lambda must be non-negative");
  if (lag < 1) throw ConfigError("config: lag must be >= 1");
  if (!(eps > 0.0)) throw ConfigError("config: eps must be positive");
  if (retrain_steps < 0) throw ConfigError("config: retrain_steps must be non-negative");
  if (latent_dim < 1 || fusion_hidden < 1) throw ConfigError("config: layer widths must be positive");
  for (Index w : encoder_hidden)
    if (w < 1) throw ConfigError("config: encoder widths must be positive");
  for (double w : loss_weights)
    if (!(w >= 0.0)) throw ConfigError("config: loss weights must be non-negative");
  if (!(epsilon >= 0.0)) throw ConfigError("config: epsilon must be non-negative");
  for (int m : noise_modalities)
    if (m < 0) throw ConfigError("config: noise modalities must be non-negative");
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str());
}

void apply_key_values(TrainConfig& cfg, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->set(cfg, value);
  }
}

TrainConfig config_from_key_values(const KeyValues& kv) {
  TrainConfig cfg;
  apply_key_values(cfg, kv);
  return cfg;
}

std::string to_config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& k : keys())
    if (auto v = k.get(cfg)) out += k.name + "=" + *v + "\n";
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& k : keys()) n.push_back(k.name);
    return n;
  }();
  return names;
}

}  // namespace cal
