#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "core/error.hpp"
#include "core/hash.hpp"

namespace mduit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    fail(ErrorCode::kConfig, "bad value '" + text + "' for key '" + key + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  fail(ErrorCode::kConfig, "bad boolean '" + text + "' for key '" + key + "'");
}

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field field(T TrainConfig::*member) {
  return {[member](const TrainConfig& c) {
            if constexpr (std::is_same_v<T, double>)
              return format_double(c.*member);
            else if constexpr (std::is_same_v<T, bool>)
              return std::string(c.*member ? "true" : "false");
            else if constexpr (std::is_same_v<T, std::string>)
              return c.*member;
            else
              return std::to_string(c.*member);
          },
          [member](TrainConfig& c, const std::string& k, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>)
              c.*member = parse_bool(k, v);
            else if constexpr (std::is_same_v<T, std::string>)
              c.*member = v;
            else
              c.*member = parse_number<T>(k, v);
          }};
}

template <typename T>
Field hp_field(T HyperParams::*member) {
  return {[member](const TrainConfig& c) {
            if constexpr (std::is_same_v<T, double>)
              return format_double(c.hp.*member);
            else
              return std::to_string(c.hp.*member);
          },
          [member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.hp.*member = parse_number<T>(k, v);
          }};
}

Field beta_field(double LossWeights::*member) {
  return {[member](const TrainConfig& c) {
            return format_double(c.hp.betas.*member);
          },
          [member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.hp.betas.*member = parse_number<double>(k, v);
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"m_c", hp_field(&HyperParams::margin_content)},
      {"tau", hp_field(&HyperParams::temperature)},
      {"n_neg", hp_field(&HyperParams::n_neg)},
      {"beta_rs", beta_field(&LossWeights::rec_self)},
      {"beta_rc", beta_field(&LossWeights::rec_cycle)},
      {"beta_cc", beta_field(&LossWeights::cons_content)},
      {"beta_ca", beta_field(&LossWeights::cons_appearance)},
      {"beta_nce", beta_field(&LossWeights::nce)},
      {"filter_k", hp_field(&HyperParams::filter_k)},
      {"rot_thresh_deg", hp_field(&HyperParams::rot_thresh_deg)},
      {"trans_thresh_m", hp_field(&HyperParams::trans_thresh_m)},
      {"adam_beta1", hp_field(&HyperParams::adam_beta1)},
      {"adam_beta2", hp_field(&HyperParams::adam_beta2)},
      {"lr", hp_field(&HyperParams::lr)},
      {"epochs_flat", hp_field(&HyperParams::epochs_flat)},
      {"epochs_decay", hp_field(&HyperParams::epochs_decay)},
      {"batch_size", hp_field(&HyperParams::batch_size)},
      {"init_std", hp_field(&HyperParams::init_std)},
      {"init_scheme", field(&TrainConfig::init_scheme)},
      {"image_size", field(&TrainConfig::image_size)},
      {"content_channels", field(&TrainConfig::content_channels)},
      {"base_channels", field(&TrainConfig::base_channels)},
      {"embed_dim", field(&TrainConfig::embed_dim)},
      {"filter_hidden", field(&TrainConfig::filter_hidden)},
      {"filter_groups", field(&TrainConfig::filter_groups)},
      {"filter_bias", field(&TrainConfig::filter_bias)},
      {"disc_channels", field(&TrainConfig::disc_channels)},
      {"gem_eps", field(&TrainConfig::gem_eps)},
      {"backbone_seed", field(&TrainConfig::backbone_seed)},
      {"backbone_tap", field(&TrainConfig::backbone_tap)},
      {"backbone_weights", field(&TrainConfig::backbone_weights)},
      {"k_candidates", field(&TrainConfig::k_candidates)},
      {"seed", field(&TrainConfig::seed)},
      {"checkpoint_interval", field(&TrainConfig::checkpoint_interval)},
      {"steps_per_epoch", field(&TrainConfig::steps_per_epoch)},
      {"ablation_no_i2i", field(&TrainConfig::ablation_no_i2i)},
      {"jitter_strength", field(&TrainConfig::jitter_strength)},
  };
  return table;
}

const Field& lookup(const std::string& key) {
  auto it = fields().find(key);
  if (it == fields().end())
    fail(ErrorCode::kConfig, "unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

NetworkConfig TrainConfig::network() const {
  NetworkConfig n;
  n.image_size = image_size;
  n.content_channels = content_channels;
  n.base_channels = base_channels;
  n.filter_k = hp.filter_k;
  n.filter_groups = filter_groups == 0 ? content_channels : filter_groups;
  n.filter_bias = filter_bias;
  n.filter_hidden = filter_hidden;
  n.embed_dim = embed_dim;
  n.disc_channels = disc_channels;
  n.gem_eps = gem_eps;
  n.backbone.seed = backbone_seed;
  n.backbone.tap = backbone_tap;
  n.backbone.weights_path = backbone_weights;
  return n;
}

void TrainConfig::validate() const {
  hp.validate();
  network().validate();
  require(k_candidates > 0, "k_candidates must be positive", ErrorCode::kConfig);
  require(checkpoint_interval > 0, "checkpoint_interval must be positive",
          ErrorCode::kConfig);
  require(steps_per_epoch >= 0, "steps_per_epoch must be >= 0",
          ErrorCode::kConfig);
  require(init_scheme == "normal" || init_scheme == "fan_in",
          "init_scheme must be 'normal' or 'fan_in'", ErrorCode::kConfig);
  require(jitter_strength >= 0.0 && jitter_strength <= 1.0,
          "jitter_strength must be in [0, 1]", ErrorCode::kConfig);
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  lookup(key).set(*this, key, trim(value));
}

std::string TrainConfig::get(const std::string& key) const {
  return lookup(key).get(*this);
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

std::string TrainConfig::dump() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(dump()); }

void apply_config_text(TrainConfig& config, const std::string& text,
                       const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash_pos = line.find('#'); hash_pos != std::string::npos)
      line.resize(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::kConfig, where + "expected 'key = value'");
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      fail(e.code(), where + e.what());
    }
  }
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig c;
  apply_config_text(c, ss.str(), path.string());
  return c;
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write config " + path.string());
  out << config.dump();
  if (!out) fail(ErrorCode::kIo, "failed writing config " + path.string());
}

}  // namespace mduit
