#include "lyapcert/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/io.hpp"

namespace lyapcert {

namespace pt = boost::property_tree;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Nominal: return "nominal";
    case TrainMode::Adversarial: return "adversarial";
    case TrainMode::Both: return "both";
  }
  return "both";
}

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
  double out = 0;
  const auto s = trim(v);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto s = trim(v);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

// Tracks which keys of each section were consumed so leftovers can be rejected.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {
    for (const auto& [name, section] : tree) {
      if (!section.data().empty() && section.empty())
        throw ConfigError("key '" + name + "' must live inside a section");
      if (!known_sections().count(name)) throw ConfigError("unknown section [" + name + "]");
    }
  }

  static const std::set<std::string>& known_sections() {
    static const std::set<std::string> s{"run", "system", "train", "adversary", "evaluate", "bounds", "verify"};
    return s;
  }

  std::optional<std::string> get(const std::string& section, const std::string& key) {
    used_[section].insert(key);
    const auto sec = tree_.get_child_optional(pt::ptree::path_type(section, '\0'));
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  void num(const std::string& s, const std::string& k, double& target) {
    if (auto v = get(s, k)) target = to_double(s + "." + k, *v);
  }
  void opt_num(const std::string& s, const std::string& k, std::optional<double>& target) {
    if (auto v = get(s, k)) target = to_double(s + "." + k, *v);
  }
  template <class Int>
  void integer(const std::string& s, const std::string& k, Int& target) {
    if (auto v = get(s, k)) target = static_cast<Int>(to_u64(s + "." + k, *v));
  }
  void text(const std::string& s, const std::string& k, std::string& target) {
    if (auto v = get(s, k)) target = *v;
  }
  void vec(const std::string& s, const std::string& k, Vec& target) {
    if (auto v = get(s, k)) {
      const auto items = split_list(*v);
      if (items.empty()) throw ConfigError(s + "." + k + ": empty list");
      Vec out(static_cast<Eigen::Index>(items.size()));
      for (std::size_t i = 0; i < items.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = to_double(s + "." + k, items[i]);
      target = out;
    }
  }
  void doubles(const std::string& s, const std::string& k, std::vector<double>& target) {
    if (auto v = get(s, k)) {
      target.clear();
      for (const auto& item : split_list(*v)) target.push_back(to_double(s + "." + k, item));
    }
  }

  void reject_unknown() const {
    for (const auto& [name, section] : tree_) {
      const auto it = used_.find(name);
      for (const auto& [key, value] : section) {
        if (it == used_.end() || !it->second.count(key))
          throw ConfigError("unknown key '" + key + "' in section [" + name + "]");
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::map<std::string, std::set<std::string>> used_;
};

TimeMode parse_time_mode(const std::string& s) {
  if (s == "ct" || s == "CT") return TimeMode::CT;
  if (s == "dt" || s == "DT") return TimeMode::DT;
  throw ConfigError("time mode must be ct or dt, got '" + s + "'");
}

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + format_double(xs[i]);
  return out;
}

std::string join(const Vec& xs) { return join(std::vector<double>(xs.data(), xs.data() + xs.size())); }

}  // namespace

void RunConfig::validate() const {
  try {
    pendulum.validate();
    train.validate();
    if (train.n_train < 1) throw ConfigError("train.n_train must be >= 1");
    if (train.epochs < 1 && train_mode != TrainMode::Adversarial) throw ConfigError("train.epochs must be >= 1");
    if (train.ic_lo.size() != 2 || train.ic_hi.size() != 2) throw ConfigError("system box must be 2-dimensional");
    if (!((train.ic_lo.array() < train.ic_hi.array()).all())) throw ConfigError("system box needs lo < hi");
    step_count(train.horizon, train.dt);
    if (train_mode != TrainMode::Nominal && train.adversary.kind == TubeKind::None)
      throw ConfigError("adversarial training needs adversary.kind lipschitz, norm_bounded or combined");
    if (evaluate.n_test < 1) throw ConfigError("evaluate.n_test must be >= 1");
    if (evaluate.eta_points < 1) throw ConfigError("evaluate.eta_points must be >= 1");
    for (int c : evaluate.classes)
      if (c < 1 || c > 4) throw ConfigError("evaluate.classes entries must be 1..4");
    if (evaluate.eps_x && !(*evaluate.eps_x >= 0)) throw ConfigError("evaluate.eps_x must be >= 0");
    if (!(evaluate.perturbed_m > 0 && evaluate.perturbed_l > 0))
      throw ConfigError("evaluate perturbed parameters must be positive");
    bounds.ediss.validate();
    if (bounds.n < 1) throw ConfigError("bounds.n must be >= 1");
    if (verify.ediss_trials < 1 || verify.deviation_trials < 1) throw ConfigError("verify trials must be >= 1");
    if (verify.rhos.empty()) throw ConfigError("verify.rhos must be non-empty");
    if (verify.nested_t_max < 2) throw ConfigError("verify.nested_t_max must be >= 2");
    if (verify.nested_t_max > 30) throw ConfigError("verify.nested_t_max must be <= 30");
    if (!(verify.dt_rho > 0 && verify.dt_rho < 1)) throw ConfigError("verify.dt_rho must lie in (0, 1)");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  Reader r(tree);
  RunConfig c;
  std::string s;

  if (auto out = r.get("run", "out")) c.out = *out;
  r.integer("run", "seed", c.seed);
  r.integer("run", "threads", c.threads);

  r.num("system", "m", c.pendulum.m);
  r.num("system", "l", c.pendulum.l);
  r.num("system", "b", c.pendulum.b);
  r.num("system", "g", c.pendulum.g);
  r.num("system", "horizon", c.train.horizon);
  r.num("system", "dt", c.train.dt);
  r.vec("system", "box_lo", c.train.ic_lo);
  r.vec("system", "box_hi", c.train.ic_hi);

  if (auto mode = r.get("train", "mode")) {
    if (*mode == "nominal")
      c.train_mode = TrainMode::Nominal;
    else if (*mode == "adversarial")
      c.train_mode = TrainMode::Adversarial;
    else if (*mode == "both")
      c.train_mode = TrainMode::Both;
    else
      throw ConfigError("train.mode must be nominal, adversarial or both");
  }
  r.num("train", "eta", c.train.eta);
  r.num("train", "lambda", c.train.lambda);
  r.integer("train", "epochs", c.train.epochs);
  r.integer("train", "batch_size", c.train.batch_size);
  r.num("train", "base_lr", c.train.base_lr);
  r.integer("train", "alternations", c.train.alternations);
  r.integer("train", "inner_epochs", c.train.inner_epochs);
  r.integer("train", "n_train", c.train.n_train);
  r.integer("train", "hidden", c.train.hidden);
  if (auto ws = r.get("train", "warm_start")) {
    if (*ws == "true")
      c.train.warm_start = true;
    else if (*ws == "false")
      c.train.warm_start = false;
    else
      throw ConfigError("train.warm_start must be true or false");
  }

  if (auto kind = r.get("adversary", "kind")) {
    try {
      c.train.adversary.kind = parse_tube_kind(*kind);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("adversary.kind: ") + e.what());
    }
  }
  r.num("adversary", "eps_x", c.train.adversary.eps_x);
  r.num("adversary", "eps_u", c.train.adversary.eps_u);
  if (c.train.adversary.kind == TubeKind::NormBounded) c.train.adversary.eps_x = 0.0;
  if (c.train.adversary.kind == TubeKind::Lipschitz) c.train.adversary.eps_u = 0.0;

  if (auto certs = r.get("evaluate", "certificates")) {
    for (const auto& item : split_list(*certs)) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
        throw ConfigError("evaluate.certificates entries must look like name=path");
      c.evaluate.certificates.emplace_back(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
    }
  }
  r.text("evaluate", "greedy_reference", c.evaluate.greedy_reference);
  if (auto classes = r.get("evaluate", "classes")) {
    c.evaluate.classes.clear();
    for (const auto& item : split_list(*classes))
      c.evaluate.classes.push_back(static_cast<int>(to_u64("evaluate.classes", item)));
  }
  r.integer("evaluate", "n_test", c.evaluate.n_test);
  r.num("evaluate", "eta_lo", c.evaluate.eta_lo);
  r.num("evaluate", "eta_hi", c.evaluate.eta_hi);
  r.integer("evaluate", "eta_points", c.evaluate.eta_points);
  r.opt_num("evaluate", "eps_x", c.evaluate.eps_x);
  r.num("evaluate", "perturbed_m", c.evaluate.perturbed_m);
  r.num("evaluate", "perturbed_l", c.evaluate.perturbed_l);

  auto& b = c.bounds;
  if (auto mode = r.get("bounds", "mode")) b.mode = parse_time_mode(*mode);
  b.ediss.mode = b.mode;
  if (b.mode == TimeMode::DT) b.ediss.rho = 0.5;
  r.num("bounds", "beta", b.ediss.beta);
  r.num("bounds", "rho", b.ediss.rho);
  r.num("bounds", "gamma", b.ediss.gamma);
  r.num("bounds", "L_V", b.constants.L_V);
  r.num("bounds", "L_gradV", b.constants.L_gradV);
  r.num("bounds", "B_V", b.constants.B_V);
  r.num("bounds", "B_gradV", b.constants.B_gradV);
  r.num("bounds", "B_X", b.constants.B_X);
  r.num("bounds", "B_htilde", b.constants.B_htilde);
  r.text("bounds", "checkpoint", b.checkpoint);
  r.integer("bounds", "grid_per_dim", b.grid_per_dim);
  if (auto kinds = r.get("bounds", "kinds")) {
    b.kinds.clear();
    for (const auto& item : split_list(*kinds)) {
      try {
        b.kinds.push_back(parse_tube_kind(item));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("bounds.kinds: ") + e.what());
      }
    }
  }
  r.num("bounds", "eps_u", b.eps_u);
  r.num("bounds", "eps_x", b.eps_x);
  r.num("bounds", "nu", b.nu);
  r.num("bounds", "eta", b.eta);
  r.integer("bounds", "n", b.n);
  r.num("bounds", "xi_norm", b.xi_norm);
  r.opt_num("bounds", "rn", b.rn);
  r.num("bounds", "tau", b.tau);
  r.num("bounds", "b_h", b.b_h);
  r.num("bounds", "delta", b.delta);
  r.num("bounds", "k", b.k);
  r.num("bounds", "log_inner_scale", b.log_inner_scale);
  r.num("bounds", "l_h", b.l_h);
  r.num("bounds", "b_delta", b.b_delta);

  auto& v = c.verify;
  r.integer("verify", "ediss_trials", v.ediss_trials);
  r.integer("verify", "deviation_trials", v.deviation_trials);
  r.doubles("verify", "rhos", v.rhos);
  r.num("verify", "claim_beta", v.claim_beta);
  r.num("verify", "claim_rho_scale", v.claim_rho_scale);
  r.num("verify", "claim_gamma", v.claim_gamma);
  r.num("verify", "eps_u", v.eps_u);
  r.num("verify", "eps_x", v.eps_x);
  r.num("verify", "dt_rho", v.dt_rho);
  r.integer("verify", "nested_t_max", v.nested_t_max);

  r.reject_unknown();
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      const auto j = nlohmann::json::parse(text);
      return parse_config(j.at("config").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("manifest is not a replayable config: ") + e.what());
    }
  }
  return parse_config(text);
}

std::string RunConfig::resolved_text() const {
  std::ostringstream o;
  const auto d = [](double x) { return format_double(x); };
  o << "[run]\n"
    << "out = " << out.string() << "\n"
    << "seed = " << seed << "\n"
    << "threads = " << threads << "\n\n";
  o << "[system]\n"
    << "m = " << d(pendulum.m) << "\nl = " << d(pendulum.l) << "\nb = " << d(pendulum.b)
    << "\ng = " << d(pendulum.g) << "\nhorizon = " << d(train.horizon) << "\ndt = " << d(train.dt)
    << "\nbox_lo = " << join(train.ic_lo) << "\nbox_hi = " << join(train.ic_hi) << "\n\n";
  o << "[train]\n"
    << "mode = " << to_string(train_mode) << "\neta = " << d(train.eta) << "\nlambda = " << d(train.lambda)
    << "\nepochs = " << train.epochs << "\nbatch_size = " << train.batch_size
    << "\nbase_lr = " << d(train.base_lr) << "\nalternations = " << train.alternations
    << "\ninner_epochs = " << train.inner_epochs << "\nn_train = " << train.n_train
    << "\nhidden = " << train.hidden << "\nwarm_start = " << (train.warm_start ? "true" : "false") << "\n\n";
  o << "[adversary]\n"
    << "kind = " << to_string(train.adversary.kind) << "\neps_x = " << d(train.adversary.eps_x)
    << "\neps_u = " << d(train.adversary.eps_u) << "\n\n";
  o << "[evaluate]\n";
  if (!evaluate.certificates.empty()) {
    o << "certificates = ";
    for (std::size_t i = 0; i < evaluate.certificates.size(); ++i)
      o << (i ? ", " : "") << evaluate.certificates[i].first << "=" << evaluate.certificates[i].second;
    o << "\n";
  }
  o << "greedy_reference = " << evaluate.greedy_reference << "\nclasses = ";
  for (std::size_t i = 0; i < evaluate.classes.size(); ++i) o << (i ? ", " : "") << evaluate.classes[i];
  o << "\nn_test = " << evaluate.n_test << "\neta_lo = " << d(evaluate.eta_lo)
    << "\neta_hi = " << d(evaluate.eta_hi) << "\neta_points = " << evaluate.eta_points << "\n";
  if (evaluate.eps_x) o << "eps_x = " << d(*evaluate.eps_x) << "\n";
  o << "perturbed_m = " << d(evaluate.perturbed_m) << "\nperturbed_l = " << d(evaluate.perturbed_l) << "\n\n";
  const auto& b = bounds;
  o << "[bounds]\n"
    << "mode = " << (b.mode == TimeMode::CT ? "ct" : "dt") << "\nbeta = " << d(b.ediss.beta)
    << "\nrho = " << d(b.ediss.rho) << "\ngamma = " << d(b.ediss.gamma) << "\nL_V = " << d(b.constants.L_V)
    << "\nL_gradV = " << d(b.constants.L_gradV) << "\nB_V = " << d(b.constants.B_V)
    << "\nB_gradV = " << d(b.constants.B_gradV) << "\nB_X = " << d(b.constants.B_X)
    << "\nB_htilde = " << d(b.constants.B_htilde) << "\n";
  if (!b.checkpoint.empty()) o << "checkpoint = " << b.checkpoint << "\n";
  o << "grid_per_dim = " << b.grid_per_dim << "\nkinds = ";
  for (std::size_t i = 0; i < b.kinds.size(); ++i) o << (i ? ", " : "") << to_string(b.kinds[i]);
  o << "\neps_u = " << d(b.eps_u) << "\neps_x = " << d(b.eps_x) << "\nnu = " << d(b.nu) << "\neta = " << d(b.eta)
    << "\nn = " << b.n << "\nxi_norm = " << d(b.xi_norm) << "\n";
  if (b.rn) o << "rn = " << d(*b.rn) << "\n";
  o << "tau = " << d(b.tau) << "\nb_h = " << d(b.b_h) << "\ndelta = " << d(b.delta) << "\nk = " << d(b.k)
    << "\nlog_inner_scale = " << d(b.log_inner_scale) << "\nl_h = " << d(b.l_h) << "\nb_delta = " << d(b.b_delta)
    << "\n\n";
  const auto& v = verify;
  o << "[verify]\n"
    << "ediss_trials = " << v.ediss_trials << "\ndeviation_trials = " << v.deviation_trials
    << "\nrhos = " << join(v.rhos) << "\nclaim_beta = " << d(v.claim_beta)
    << "\nclaim_rho_scale = " << d(v.claim_rho_scale) << "\nclaim_gamma = " << d(v.claim_gamma)
    << "\neps_u = " << d(v.eps_u) << "\neps_x = " << d(v.eps_x) << "\ndt_rho = " << d(v.dt_rho)
    << "\nnested_t_max = " << v.nested_t_max << "\n";
  return o.str();
}

}  // namespace lyapcert
