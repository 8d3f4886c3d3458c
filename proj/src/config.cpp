#include "dmnet/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace dmnet {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("config key " + key + ": cannot parse '" + value + "' as a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key " + key + ": expected true|false, got '" + value + "'");
}

Range parse_range(const std::string& key, const std::string& value) {
  const auto comma = value.find(',');
  if (comma == std::string::npos) {
    const double v = parse_number<double>(key, value);
    return {v, v};
  }
  return {parse_number<double>(key, std::string(trim(std::string_view(value).substr(0, comma)))),
          parse_number<double>(key, std::string(trim(std::string_view(value).substr(comma + 1))))};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const Range& r) { return fmt(r.lo) + "," + fmt(r.hi); }

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto i64 = [](auto field) {
      return [field](TrainConfig& c, const std::string& k, const std::string& v) {
        field(c) = parse_number<std::remove_reference_t<decltype(field(c))>>(k, v);
      };
    };
    t["model.mode"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.model.mode = parse_mode(v); };
    t["model.num_blocks"] = i64([](TrainConfig& c) -> int& { return c.model.num_blocks; });
    t["model.channels"] = i64([](TrainConfig& c) -> int& { return c.model.channels; });
    t["model.scale"] = i64([](TrainConfig& c) -> int& { return c.model.scale; });
    t["model.kernel"] = i64([](TrainConfig& c) -> int& { return c.model.kernel; });
    t["model.leaky_slope"] = i64([](TrainConfig& c) -> double& { return c.model.leaky_slope; });
    t["model.use_spade"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.use_spade = parse_bool(k, v); };
    t["model.global_skip"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.global_skip = parse_bool(k, v); };
    t["model.seed"] = i64([](TrainConfig& c) -> std::uint64_t& { return c.model.seed; });

    t["degradation.mode"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.degradation.mode = parse_degrade_mode(v); };
    t["degradation.scale"] = i64([](TrainConfig& c) -> int& { return c.degradation.scale; });
    t["degradation.jpeg_quality"] = i64([](TrainConfig& c) -> int& { return c.degradation.jpeg_quality; });
    t["degradation.fade"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.degradation.fade = parse_range(k, v); };
    t["degradation.gray_level"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.degradation.gray_level = parse_range(k, v); };
    t["degradation.saturation"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.degradation.saturation = parse_range(k, v); };
    t["degradation.noise_sigma"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.degradation.noise_sigma = parse_range(k, v); };
    t["degradation.seed"] = i64([](TrainConfig& c) -> std::uint64_t& { return c.degradation.seed; });

    t["loss.fidelity"] = i64([](TrainConfig& c) -> double& { return c.losses.fidelity; });
    t["loss.ssim"] = i64([](TrainConfig& c) -> double& { return c.losses.ssim; });
    t["loss.perceptual"] = i64([](TrainConfig& c) -> double& { return c.losses.perceptual; });
    t["loss.adversarial"] = i64([](TrainConfig& c) -> double& { return c.losses.adversarial; });
    t["loss.fidelity_kind"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      if (v == "absolute") c.fidelity_kind = FidelityKind::Absolute;
      else if (v == "squared") c.fidelity_kind = FidelityKind::Squared;
      else throw ConfigError("config key " + k + ": expected absolute|squared");
    };

    t["optim.beta1"] = i64([](TrainConfig& c) -> double& { return c.adam.beta1; });
    t["optim.beta2"] = i64([](TrainConfig& c) -> double& { return c.adam.beta2; });
    t["optim.eps"] = i64([](TrainConfig& c) -> double& { return c.adam.eps; });
    t["optim.lr"] = i64([](TrainConfig& c) -> double& { return c.schedule.initial_lr; });
    t["optim.halve_every"] = i64([](TrainConfig& c) -> std::int64_t& { return c.schedule.halve_every; });
    t["optim.num_halvings"] = i64([](TrainConfig& c) -> int& { return c.schedule.num_halvings; });

    t["train.batch_size"] = i64([](TrainConfig& c) -> int& { return c.batch_size; });
    t["train.patch_size"] = i64([](TrainConfig& c) -> int& { return c.patch_size; });
    t["train.iterations"] = i64([](TrainConfig& c) -> std::int64_t& { return c.iterations; });
    t["train.seed"] = i64([](TrainConfig& c) -> std::uint64_t& { return c.seed; });
    t["train.data_dir"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.data_dir = v; };
    t["train.out_dir"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.out_dir = v; };
    t["train.checkpoint_every"] = i64([](TrainConfig& c) -> std::int64_t& { return c.checkpoint_every; });
    t["train.log_every"] = i64([](TrainConfig& c) -> std::int64_t& { return c.log_every; });
    t["train.conv_algo"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      if (v == "direct") c.conv_algo = ConvAlgo::Direct;
      else if (v == "im2col") c.conv_algo = ConvAlgo::Im2col;
      else throw ConfigError("config key " + k + ": expected direct|im2col");
    };
    t["train.feature_seed"] = i64([](TrainConfig& c) -> std::uint64_t& { return c.feature_seed; });
    return t;
  }();
  return table;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (out.contains(key)) throw ConfigError("config key " + key + " given twice");
    out[key] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

TrainConfig config_from_text(std::string_view text) {
  const auto kv = parse_key_values(text);
  Mode mode = Mode::SuperResolution;
  if (auto it = kv.find("model.mode"); it != kv.end()) {
    try {
      mode = parse_mode(it->second);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config key model.mode: ") + e.what());
    }
  }
  TrainConfig config = TrainConfig::defaults(mode);
  for (const auto& [key, value] : kv) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key " + key);
    try {
      it->second(config, key, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key " + key + ": " + e.what());
    }
  }
  if (!kv.contains("optim.halve_every")) {
    config.schedule.halve_every = scaled_schedule(config.schedule.initial_lr, config.iterations,
                                                  config.schedule.num_halvings).halve_every;
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  TrainConfig config = config_from_text(ss.str());
  if (!config.data_dir.empty() && !std::filesystem::is_directory(config.data_dir)) {
    throw ConfigError("train.data_dir does not exist: " + config.data_dir.string());
  }
  return config;
}

std::string to_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "model.mode=" << to_string(c.model.mode) << '\n'
     << "model.num_blocks=" << c.model.num_blocks << '\n'
     << "model.channels=" << c.model.channels << '\n'
     << "model.scale=" << c.model.scale << '\n'
     << "model.kernel=" << c.model.kernel << '\n'
     << "model.leaky_slope=" << fmt(c.model.leaky_slope) << '\n'
     << "model.use_spade=" << (c.model.use_spade ? "true" : "false") << '\n'
     << "model.global_skip=" << (c.model.global_skip ? "true" : "false") << '\n'
     << "model.seed=" << c.model.seed << '\n'
     << "degradation.mode=" << to_string(c.degradation.mode) << '\n'
     << "degradation.scale=" << c.degradation.scale << '\n'
     << "degradation.jpeg_quality=" << c.degradation.jpeg_quality << '\n'
     << "degradation.fade=" << fmt(c.degradation.fade) << '\n'
     << "degradation.gray_level=" << fmt(c.degradation.gray_level) << '\n'
     << "degradation.saturation=" << fmt(c.degradation.saturation) << '\n'
     << "degradation.noise_sigma=" << fmt(c.degradation.noise_sigma) << '\n'
     << "degradation.seed=" << c.degradation.seed << '\n'
     << "loss.fidelity=" << fmt(c.losses.fidelity) << '\n'
     << "loss.ssim=" << fmt(c.losses.ssim) << '\n'
     << "loss.perceptual=" << fmt(c.losses.perceptual) << '\n'
     << "loss.adversarial=" << fmt(c.losses.adversarial) << '\n'
     << "loss.fidelity_kind=" << (c.fidelity_kind == FidelityKind::Absolute ? "absolute" : "squared") << '\n'
     << "optim.beta1=" << fmt(c.adam.beta1) << '\n'
     << "optim.beta2=" << fmt(c.adam.beta2) << '\n'
     << "optim.eps=" << fmt(c.adam.eps) << '\n'
     << "optim.lr=" << fmt(c.schedule.initial_lr) << '\n'
     << "optim.halve_every=" << c.schedule.halve_every << '\n'
     << "optim.num_halvings=" << c.schedule.num_halvings << '\n'
     << "train.batch_size=" << c.batch_size << '\n'
     << "train.patch_size=" << c.patch_size << '\n'
     << "train.iterations=" << c.iterations << '\n'
     << "train.seed=" << c.seed << '\n'
     << "train.data_dir=" << c.data_dir.string() << '\n'
     << "train.out_dir=" << c.out_dir.string() << '\n'
     << "train.checkpoint_every=" << c.checkpoint_every << '\n'
     << "train.log_every=" << c.log_every << '\n'
     << "train.conv_algo=" << (c.conv_algo == ConvAlgo::Direct ? "direct" : "im2col") << '\n'
     << "train.feature_seed=" << c.feature_seed << '\n';
  return os.str();
}

}  // namespace dmnet
