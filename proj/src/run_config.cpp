// SPDX-License-Identifier: Apache-2.0
#include <badgnn/run_config.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

#include <badgnn/error.hpp>

namespace badgnn {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T> T parse_number(std::string_view key, std::string_view v) {
  v = trim(v);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "on" || v == "yes")
    return true;
  if (v == "false" || v == "0" || v == "off" || v == "no")
    return false;
  throw ConfigError("bad boolean for " + std::string(key) + ": '" + std::string(v) + "'");
}

template <typename T> std::vector<T> parse_list(std::string_view key, std::string_view v) {
  std::vector<T> out;
  v = trim(v);
  if (v.empty())
    return out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(parse_number<T>(key, v.substr(0, comma)));
    if (comma == std::string_view::npos)
      break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

template <typename T> std::string fmt_list(const std::vector<T> &xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i)
      s += ',';
    if constexpr (std::is_floating_point_v<T>)
      s += fmt_double(xs[i]);
    else
      s += std::to_string(xs[i]);
  }
  return s;
}

template <typename Fn> void for_each_setting(std::string_view text, Fn &&fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    try {
      if (eq == std::string_view::npos)
        throw ConfigError("expected key = value");
      fn(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError &e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string read_file(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw IoError("cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

} // namespace

std::string RunConfig::label() const {
  const bool t = tlr_active(), a = a3_active();
  if (t && a)
    return "badgnn";
  if (t)
    return "tgn-tlr";
  if (a)
    return "tgn-a3";
  return "tgn";
}

TrainConfig RunConfig::effective_train() const {
  TrainConfig c = train;
  if (!tlr_active())
    c.lambda_tlr = 0.0;
  if (!a3_active())
    c.lambda_a3 = 0.0;
  return c;
}

void RunConfig::validate() const {
  train.validate();
  if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0))
    throw ConfigError("train_frac and val_frac must be positive with sum < 1");
  if (mode != "train" && mode != "eval" && mode != "diagnose" && mode != "sweep")
    throw ConfigError("mode must be train, eval, diagnose or sweep");
  if (mode == "sweep" && grid.empty())
    throw ConfigError("sweep needs non-empty batch_sizes, lambda_tlr and lambda_a3 grids");
  for (std::size_t b : grid.batch_sizes)
    if (b < 1)
      throw ConfigError("sweep batch sizes must be >= 1");
  if (!(sigma >= 0.0))
    throw ConfigError("sigma must be >= 0");
  if (probe_trials < 1 || !(probe_step > 0.0))
    throw ConfigError("probe_trials must be >= 1 and probe_step > 0");
}

void apply_setting(RunConfig &c, std::string_view key, std::string_view v) {
  TrainConfig &t = c.train;
  if (key == "batch_size")
    t.batch_size = parse_number<std::size_t>(key, v);
  else if (key == "lambda_tlr")
    t.lambda_tlr = parse_number<double>(key, v);
  else if (key == "lambda_a3")
    t.lambda_a3 = parse_number<double>(key, v);
  else if (key == "a3_form") {
    if (v == "affine")
      t.a3_form = A3Form::Affine;
    else if (v == "pure")
      t.a3_form = A3Form::Pure;
    else
      throw ConfigError("a3_form must be affine or pure");
  } else if (key == "lr")
    t.lr = parse_number<double>(key, v);
  else if (key == "epochs")
    t.epochs = parse_number<std::size_t>(key, v);
  else if (key == "seed")
    t.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "d_mem")
    t.d_mem = parse_number<std::size_t>(key, v);
  else if (key == "d_time")
    t.d_time = parse_number<std::size_t>(key, v);
  else if (key == "heads")
    t.heads = parse_number<std::size_t>(key, v);
  else if (key == "d_k")
    t.d_k = parse_number<std::size_t>(key, v);
  else if (key == "neighbors")
    t.neighbors = parse_number<std::size_t>(key, v);
  else if (key == "dropout")
    t.dropout = parse_number<double>(key, v);
  else if (key == "init") {
    if (v == "xavier")
      t.zero_init = false;
    else if (v == "zero")
      t.zero_init = true;
    else
      throw ConfigError("init must be xavier or zero");
  } else if (key == "dataset")
    c.dataset = std::string(v);
  else if (key == "out_dir")
    c.out_dir = std::string(v);
  else if (key == "mode")
    c.mode = std::string(v);
  else if (key == "tlr_on")
    c.tlr_on = parse_bool(key, v);
  else if (key == "a3_on")
    c.a3_on = parse_bool(key, v);
  else if (key == "sweep_batch_sizes")
    c.grid.batch_sizes = parse_list<std::size_t>(key, v);
  else if (key == "sweep_lambda_tlr")
    c.grid.lambda_tlr = parse_list<double>(key, v);
  else if (key == "sweep_lambda_a3")
    c.grid.lambda_a3 = parse_list<double>(key, v);
  else if (key == "max_events")
    c.max_events = parse_number<std::size_t>(key, v);
  else if (key == "train_frac")
    c.train_frac = parse_number<double>(key, v);
  else if (key == "val_frac")
    c.val_frac = parse_number<double>(key, v);
  else if (key == "record_timing")
    c.record_timing = parse_bool(key, v);
  else if (key == "sigma")
    c.sigma = parse_number<double>(key, v);
  else if (key == "sigma_from_softmax")
    c.sigma_from_softmax = parse_bool(key, v);
  else if (key == "probe_trials")
    c.probe_trials = parse_number<std::size_t>(key, v);
  else if (key == "probe_step")
    c.probe_step = parse_number<double>(key, v);
  else if (key == "diagnose_every")
    c.diagnose_every = parse_number<std::size_t>(key, v);
  else
    throw ConfigError("unknown key '" + std::string(key) + "'");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  for_each_setting(text, [&](std::string_view k, std::string_view v) { apply_setting(c, k, v); });
  return c;
}

RunConfig load_run_config(const std::string &path) { return parse_run_config(read_file(path)); }

SweepGrid parse_sweep_grid(std::string_view text) {
  SweepGrid g;
  for_each_setting(text, [&](std::string_view k, std::string_view v) {
    if (k == "batch_sizes")
      g.batch_sizes = parse_list<std::size_t>(k, v);
    else if (k == "lambda_tlr")
      g.lambda_tlr = parse_list<double>(k, v);
    else if (k == "lambda_a3")
      g.lambda_a3 = parse_list<double>(k, v);
    else
      throw ConfigError("unknown grid key '" + std::string(k) + "'");
  });
  return g;
}

std::string to_text(const RunConfig &c) {
  const TrainConfig &t = c.train;
  std::ostringstream os;
  os << "batch_size = " << t.batch_size << '\n'
     << "lambda_tlr = " << fmt_double(t.lambda_tlr) << '\n'
     << "lambda_a3 = " << fmt_double(t.lambda_a3) << '\n'
     << "a3_form = " << (t.a3_form == A3Form::Affine ? "affine" : "pure") << '\n'
     << "lr = " << fmt_double(t.lr) << '\n'
     << "epochs = " << t.epochs << '\n'
     << "seed = " << t.seed << '\n'
     << "d_mem = " << t.d_mem << '\n'
     << "d_time = " << t.d_time << '\n'
     << "heads = " << t.heads << '\n'
     << "d_k = " << t.d_k << '\n'
     << "neighbors = " << t.neighbors << '\n'
     << "dropout = " << fmt_double(t.dropout) << '\n'
     << "init = " << (t.zero_init ? "zero" : "xavier") << '\n'
     << "dataset = " << c.dataset << '\n'
     << "out_dir = " << c.out_dir << '\n'
     << "mode = " << c.mode << '\n';
  if (c.tlr_on)
    os << "tlr_on = " << (*c.tlr_on ? "true" : "false") << '\n';
  if (c.a3_on)
    os << "a3_on = " << (*c.a3_on ? "true" : "false") << '\n';
  os << "sweep_batch_sizes = " << fmt_list(c.grid.batch_sizes) << '\n'
     << "sweep_lambda_tlr = " << fmt_list(c.grid.lambda_tlr) << '\n'
     << "sweep_lambda_a3 = " << fmt_list(c.grid.lambda_a3) << '\n'
     << "max_events = " << c.max_events << '\n'
     << "train_frac = " << fmt_double(c.train_frac) << '\n'
     << "val_frac = " << fmt_double(c.val_frac) << '\n'
     << "record_timing = " << (c.record_timing ? "true" : "false") << '\n'
     << "sigma = " << fmt_double(c.sigma) << '\n'
     << "sigma_from_softmax = " << (c.sigma_from_softmax ? "true" : "false") << '\n'
     << "probe_trials = " << c.probe_trials << '\n'
     << "probe_step = " << fmt_double(c.probe_step) << '\n'
     << "diagnose_every = " << c.diagnose_every << '\n';
  return os.str();
}

} // namespace badgnn
