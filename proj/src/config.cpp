#include "gazefield/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gazefield {

namespace {

struct Accessor {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <class T>
Accessor num(T Config::* field) {
  return {[field](const Config& c) {
            if constexpr (std::is_same_v<T, double>) return fmt_double(c.*field);
            else return std::to_string(c.*field);
          },
          [field](Config& c, const std::string& v) {
            if constexpr (std::is_same_v<T, double>) c.*field = std::stod(v);
            else c.*field = static_cast<T>(std::stoll(v));
          }};
}

Accessor str(std::string Config::* field) {
  return {[field](const Config& c) { return c.*field; },
          [field](Config& c, const std::string& v) { c.*field = v; }};
}

// Ordered registry; serialization order is fixed so config text is stable.
const std::vector<std::pair<std::string, Accessor>>& registry() {
  static const std::vector<std::pair<std::string, Accessor>> reg = {
      {"data.resolution", num(&Config::data_resolution)},
      {"data.identities", num(&Config::data_identities)},
      {"data.gazes", num(&Config::data_gazes)},
      {"data.views", num(&Config::data_views)},
      {"data.seed", num(&Config::data_seed)},
      {"data.dir", str(&Config::data_dir)},
      {"model.c_high", num(&Config::model_c_high)},
      {"model.c_low", num(&Config::model_c_low)},
      {"model.c_fused", num(&Config::model_c_fused)},
      {"model.c_triplane", num(&Config::model_c_triplane)},
      {"model.field_hidden", num(&Config::model_field_hidden)},
      {"model.heads", num(&Config::model_heads)},
      {"model.seed", num(&Config::model_seed)},
      {"injection.target", str(&Config::injection_target)},
      {"teacher.kind", str(&Config::teacher_kind)},
      {"render.samples", num(&Config::render_samples)},
      {"render.eval_samples", num(&Config::render_eval_samples)},
      {"render.near", num(&Config::render_near)},
      {"render.far", num(&Config::render_far)},
      {"render.background", num(&Config::render_background)},
      {"loss.alpha", num(&Config::loss_alpha)},
      {"loss.beta", num(&Config::loss_beta)},
      {"loss.gamma", num(&Config::loss_gamma)},
      {"loss.alpha1", num(&Config::loss_alpha1)},
      {"loss.alpha2", num(&Config::loss_alpha2)},
      {"train.lr_encoder", num(&Config::train_lr_encoder)},
      {"train.lr_renderer", num(&Config::train_lr_renderer)},
      {"train.batch", num(&Config::train_batch)},
      {"train.steps", num(&Config::train_steps)},
      {"train.epochs", num(&Config::train_epochs)},
      {"train.weight_decay", num(&Config::train_weight_decay)},
      {"train.beta1", num(&Config::train_beta1)},
      {"train.beta2", num(&Config::train_beta2)},
      {"train.seed", num(&Config::train_seed)},
      {"train.checkpoint_every", num(&Config::train_checkpoint_every)},
      {"train.log_every", num(&Config::train_log_every)},
  };
  return reg;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  for (auto& [k, acc] : registry())
    if (k == key) {
      acc.set(*this, value);
      return;
    }
  throw std::invalid_argument("unknown config key: " + key);
}

std::string Config::get(const std::string& key) const {
  for (auto& [k, acc] : registry())
    if (k == key) return acc.get(*this);
  throw std::invalid_argument("unknown config key: " + key);
}

std::string Config::serialize() const {
  std::ostringstream os;
  for (auto& [k, acc] : registry()) os << k << "=" << acc.get(*this) << "\n";
  return os.str();
}

Config Config::from_string(const std::string& text) {
  Config c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": missing '='");
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return from_string(buf.str());
}

void Config::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write config: " + path);
  f << serialize();
}

}  // namespace gazefield
