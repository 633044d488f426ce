#include "fera/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fera/errors.hpp"
#include "fera/rng.hpp"

namespace fera {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.values_ = {
      {"run.seed", "0"},
      {"data.kind", "powerlaw"},
      {"data.gamma", "2"},
      {"data.size", "32"},
      {"data.channels", "1"},
      {"data.boost_band", "3"},
      {"data.boost_factor", "3"},
      {"data.seed", "1"},
      {"data.train_count", "512"},
      {"data.val_count", "64"},
      {"data.input", ""},
      {"spectrum.n_bands", "3"},
      {"schedule.kind", "linear"},
      {"schedule.steps", "1000"},
      {"model.hidden", "16"},
      {"model.embed_dim", "32"},
      {"model.checkpoint", ""},
      {"adapters.experts", "3"},
      {"adapters.rank", "4"},
      {"adapters.scale", "1"},
      {"adapters.layers", "1"},
      {"router.mode", "fei_soft"},
      {"router.tau", "0.7"},
      {"router.thresholds", ""},
      {"train.stage", "adapt"},
      {"train.target", "band_boost"},
      {"train.steps", "2000"},
      {"train.pretrain_steps", "3000"},
      {"train.lr", "0.001"},
      {"train.batch", "8"},
      {"train.lambda_f", "0.1"},
      {"train.fecl_weights", "fei_xt"},
      {"train.grad_clip", "1"},
      {"train.weight_decay", "0"},
      {"train.val_every", "0"},
      {"sample.steps", "30"},
      {"sample.count", "16"},
      {"sample.trajectory", "false"},
      {"snr.noise_draws", "16"},
      {"snr.bins", "16"},
      {"snr.assert_monotone", "true"},
      {"ablate.bands", "3"},
      {"ablate.experts", "3"},
      {"ablate.lambda_f", "0.1"},
      {"ablate.routing", "fei_soft"},
      {"ablate.seeds", "0"},
      {"gradcheck.tolerance", "1e-4"},
  };
  return c;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path.string());
  load_stream(is, path.string());
}

void RunConfig::load_stream(std::istream& is, const std::string& source) {
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of a section");
    set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_real(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a real number, got '" + v + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t RunConfig::get_count(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream is(get(key));
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_list(key)) {
    RunConfig tmp;
    tmp.values_[key] = s;
    out.push_back(tmp.get_real(key));
  }
  return out;
}

std::vector<std::size_t> RunConfig::get_counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& s : get_list(key)) {
    RunConfig tmp;
    tmp.values_[key] = s;
    out.push_back(tmp.get_count(key));
  }
  return out;
}

void RunConfig::write(std::ostream& os) const {
  std::string section;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) os << '\n';
      os << '[' << s << "]\n";
      section = s;
    }
    os << key.substr(dot + 1) << " = " << value << '\n';
  }
}

TrainConfig train_config_from(const RunConfig& cfg, const std::string& stage) {
  if (stage != "pretrain" && stage != "adapt") throw ConfigError("train.stage must be pretrain or adapt, got '" + stage + "'");
  TrainConfig t;
  t.lambda_f = cfg.get_real("train.lambda_f");
  t.lr = cfg.get_real("train.lr");
  t.steps = cfg.get_count(stage == "pretrain" ? "train.pretrain_steps" : "train.steps");
  t.batch = cfg.get_count("train.batch");
  t.seed = cfg.get_u64("run.seed");
  t.n_bands = cfg.get_count("spectrum.n_bands");
  t.experts = cfg.get_count("adapters.experts");
  t.rank = cfg.get_count("adapters.rank");
  t.scale = cfg.get_real("adapters.scale");
  t.tau = cfg.get_real("router.tau");
  t.schedule = parse_schedule_kind(cfg.get("schedule.kind"));
  t.total_steps = cfg.get_count("schedule.steps");
  t.routing = parse_routing_mode(cfg.get("router.mode"));
  t.weighting = parse_fecl_weighting(cfg.get("train.fecl_weights"));
  t.grad_clip = cfg.get_real("train.grad_clip");
  t.weight_decay = cfg.get_real("train.weight_decay");
  t.attachment = cfg.get_counts("adapters.layers");
  t.thresholds = cfg.get_counts("router.thresholds");
  t.denoiser.channels = cfg.get_count("data.channels");
  t.denoiser.hidden = cfg.get_count("model.hidden");
  t.denoiser.embed_dim = cfg.get_count("model.embed_dim");
  t.val_every = cfg.get_count("train.val_every");
  try {
    t.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return t;
}

SyntheticSpec synthetic_spec_from(const RunConfig& cfg, SyntheticKind kind) {
  SyntheticSpec s;
  s.kind = kind;
  s.gamma = cfg.get_real("data.gamma");
  s.size = cfg.get_count("data.size");
  s.channels = cfg.get_count("data.channels");
  s.boost_band = cfg.get_count("data.boost_band");
  s.boost_factor = cfg.get_real("data.boost_factor");
  s.seed = cfg.get_u64("data.seed");
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

TrainData train_data_from(const RunConfig& cfg, const std::string& stage, const FilterBank& bank) {
  const SyntheticKind kind =
      stage == "pretrain" ? SyntheticKind::powerlaw : parse_synthetic_kind(cfg.get("train.target"));
  const SyntheticSpec spec = synthetic_spec_from(cfg, kind);
  const std::uint64_t base = mix64(spec.seed ^ (kind == SyntheticKind::powerlaw ? 0x505257ULL : 0x424f4fULL));
  TrainData d;
  d.train = make_dataset(spec, bank, cfg.get_count("data.train_count"), base);
  const auto val_fields = make_dataset(spec, bank, cfg.get_count("data.val_count"), mix64(base ^ 0x56414cULL));
  d.validation = make_validation_set(val_fields, cfg.get_count("schedule.steps"), mix64(base ^ 0x4e4f49ULL));
  return d;
}

}  // namespace fera
