#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pacq/common/errors.hpp"
#include "pacq/diag/model.hpp"
#include "pacq/diag/train.hpp"
#include "pacq/env/episode.hpp"
#include "pacq/eval/cache.hpp"
#include "pacq/eval/evaluate.hpp"
#include "pacq/eval/pathways.hpp"
#include "pacq/eval/sweep.hpp"
#include "pacq/oracle/oracle.hpp"
#include "pacq/prob/pmf.hpp"
#include "pacq/rl/ppo.hpp"
#include "pacq/synth/dataset_io.hpp"
#include "pacq/synth/generator.hpp"

namespace {

using namespace pacq;

// Key = value text config; '#' starts a comment, ':' also accepted.
class KVConfig {
 public:
  KVConfig() = default;

  explicit KVConfig(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    text_ = buf.str();
    std::istringstream in(text_);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      auto sep = trimmed.find_first_of("=:");
      if (sep == std::string::npos)
        throw ConfigError("config: missing '=' on line " + std::to_string(lineno));
      auto key = trim(trimmed.substr(0, sep));
      auto value = trim(trimmed.substr(sep + 1));
      if (key.empty() || value.empty())
        throw ConfigError("config: empty key or value on line " + std::to_string(lineno));
      kv_[key] = value;
    }
  }

  const std::string& text() const { return text_; }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  double get_double(const std::string& key, double fallback) const {
    auto it = lookup(key);
    if (it == kv_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: bad number for " + key);
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = lookup(key);
    if (it == kv_.end()) return fallback;
    try {
      return std::stoll(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: bad integer for " + key);
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = lookup(key);
    if (it == kv_.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: bad integer for " + key);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = lookup(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: bad boolean for " + key);
  }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    auto it = lookup(key);
    return it == kv_.end() ? fallback : it->second;
  }

  void check_known(const std::set<std::string>& known) const {
    for (const auto& [key, value] : kv_)
      if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string>::const_iterator lookup(const std::string& key) const {
    return kv_.find(key);
  }

  std::string text_;
  std::map<std::string, std::string> kv_;
};

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "generator.n_views",      "generator.embed_dim",     "generator.n_classes",
      "generator.n_patients",   "generator.quality_spread", "generator.noise_std",
      "generator.seed",         "generator.view_signal",   "encoder.layers",
      "encoder.heads",          "encoder.token_dim",       "encoder.ff_dim",
      "encoder.head_hidden",    "train.epochs",            "train.batch_size",
      "train.lr",               "train.lr_final_frac",     "train.clip_norm",
      "train.lambda_as",        "train.lambda_ef",         "train.mask_augment",
      "train.log_every",        "train.seed",              "ppo.clip_eps",
      "ppo.epochs_per_update",  "ppo.minibatch",           "ppo.lr",
      "ppo.entropy_coef",       "ppo.value_coef",          "ppo.gae_lambda",
      "ppo.gamma",              "ppo.train_epochs",        "ppo.episodes_per_epoch",
      "ppo.dense_scale",        "ppo.grad_clip",           "ppo.hidden",
      "ppo.log_every",          "ppo.seed",
  };
  return keys;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<double> parse_csv_doubles(const std::string& csv, const std::string& what) {
  std::vector<double> out;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError(what + ": bad number '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::vector<std::uint64_t> parse_csv_u64(const std::string& csv, const std::string& what) {
  std::vector<std::uint64_t> out;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw ConfigError(what + ": bad integer '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

synth::GeneratorConfig generator_from(const KVConfig& cfg, std::int64_t n_patients,
                                      std::uint64_t seed) {
  auto g = synth::GeneratorConfig::defaults(n_patients, cfg.get_u64("generator.seed", seed));
  g.n_views = static_cast<int>(cfg.get_int("generator.n_views", g.n_views));
  g.embed_dim = static_cast<int>(cfg.get_int("generator.embed_dim", g.embed_dim));
  g.n_classes = static_cast<int>(cfg.get_int("generator.n_classes", g.n_classes));
  g.n_patients = cfg.get_int("generator.n_patients", g.n_patients);
  g.quality_spread = cfg.get_double("generator.quality_spread", g.quality_spread);
  g.noise_std = cfg.get_double("generator.noise_std", g.noise_std);
  if (cfg.has("generator.view_signal")) {
    std::string spec = cfg.get_str("generator.view_signal", "");
    std::vector<synth::ViewSignal> vs;
    std::istringstream in(spec);
    std::string pair;
    while (std::getline(in, pair, ';')) {
      auto comma = pair.find(',');
      if (comma == std::string::npos)
        throw ConfigError("config: view_signal entries need 'w_as,w_ef'");
      synth::ViewSignal v;
      v.w_as = std::stod(pair.substr(0, comma));
      v.w_ef = std::stod(pair.substr(comma + 1));
      vs.push_back(v);
    }
    g.view_signal = vs;
  } else if (g.n_views != synth::kDefaultViews) {
    throw ConfigError("config: generator.view_signal required when n_views != 5");
  }
  return g;
}

diag::EncoderConfig encoder_from(const KVConfig& cfg, const synth::GeneratorConfig& gen) {
  diag::EncoderConfig e;
  e.layers = static_cast<int>(cfg.get_int("encoder.layers", e.layers));
  e.heads = static_cast<int>(cfg.get_int("encoder.heads", e.heads));
  e.token_dim = static_cast<int>(cfg.get_int("encoder.token_dim", e.token_dim));
  e.ff_dim = static_cast<int>(cfg.get_int("encoder.ff_dim", e.ff_dim));
  e.head_hidden = static_cast<int>(cfg.get_int("encoder.head_hidden", e.head_hidden));
  e.input_dim = gen.embed_dim;
  e.n_views = gen.n_views;
  e.n_classes = gen.n_classes;
  return e;
}

diag::TrainConfig train_from(const KVConfig& cfg, std::uint64_t seed) {
  diag::TrainConfig t;
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size", t.batch_size));
  t.lr = cfg.get_double("train.lr", t.lr);
  t.lr_final_frac = cfg.get_double("train.lr_final_frac", t.lr_final_frac);
  t.clip_norm = cfg.get_double("train.clip_norm", t.clip_norm);
  t.lambda_as = cfg.get_double("train.lambda_as", t.lambda_as);
  t.lambda_ef = cfg.get_double("train.lambda_ef", t.lambda_ef);
  t.mask_augment = cfg.get_bool("train.mask_augment", t.mask_augment);
  t.log_every = static_cast<int>(cfg.get_int("train.log_every", t.log_every));
  t.seed = cfg.get_u64("train.seed", seed);
  return t;
}

rl::PPOConfig ppo_from(const KVConfig& cfg, std::uint64_t seed) {
  rl::PPOConfig p;
  p.clip_eps = cfg.get_double("ppo.clip_eps", p.clip_eps);
  p.epochs_per_update = static_cast<int>(cfg.get_int("ppo.epochs_per_update", p.epochs_per_update));
  p.minibatch = static_cast<int>(cfg.get_int("ppo.minibatch", p.minibatch));
  p.lr = cfg.get_double("ppo.lr", p.lr);
  p.entropy_coef = cfg.get_double("ppo.entropy_coef", p.entropy_coef);
  p.value_coef = cfg.get_double("ppo.value_coef", p.value_coef);
  p.gae_lambda = cfg.get_double("ppo.gae_lambda", p.gae_lambda);
  p.gamma = cfg.get_double("ppo.gamma", p.gamma);
  p.train_epochs = static_cast<int>(cfg.get_int("ppo.train_epochs", p.train_epochs));
  p.episodes_per_epoch =
      static_cast<int>(cfg.get_int("ppo.episodes_per_epoch", p.episodes_per_epoch));
  p.dense_scale = cfg.get_double("ppo.dense_scale", p.dense_scale);
  p.grad_clip = cfg.get_double("ppo.grad_clip", p.grad_clip);
  p.hidden = static_cast<int>(cfg.get_int("ppo.hidden", p.hidden));
  p.log_every = static_cast<int>(cfg.get_int("ppo.log_every", p.log_every));
  p.seed = cfg.get_u64("ppo.seed", seed);
  return p;
}

std::ofstream open_records(const std::string& out_dir, const std::string& name) {
  std::filesystem::create_directories(out_dir);
  auto path = out_dir + "/" + name;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError(DataError::Kind::Other, "cannot write " + path);
  return f;
}

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;
  bool deterministic = false;

  KVConfig cfg;
  std::string config_hash;

  void finish() {
    if (!config_path.empty()) {
      cfg = KVConfig(config_path);
      cfg.check_known(known_keys());
    }
    if (threads < 1) throw ConfigError("--threads must be >= 1");
    config_hash = hex16(eval::fnv1a64(cfg.text() + ":" + std::to_string(seed)));
  }
};

int run_gen_data(const GlobalArgs& g, const std::string& out, std::int64_t n) {
  auto cfg = generator_from(g.cfg, n, g.seed);

  auto data = synth::generate_dataset(cfg);
  synth::save_dataset(data, out);
  std::cout << "wrote " << data.studies.size() << " studies to " << out << " (n_views "
            << cfg.n_views << ", embed_dim " << cfg.embed_dim << ", noise " << cfg.noise_std
            << ", spread " << cfg.quality_spread << ", seed " << cfg.seed << ")\n";
  return 0;
}

int run_split(const GlobalArgs& g, const std::string& data_path, const std::string& out,
              double train, double val, double test) {

  auto data = synth::load_dataset(data_path);
  auto split = synth::split_dataset(data.studies, {train, val, test}, g.seed);
  synth::save_split(split, out);
  std::cout << "split " << data.studies.size() << " studies into " << split.train.size() << "/"
            << split.val.size() << "/" << split.test.size() << " -> " << out << "\n";
  return 0;
}

int run_train_diag(const GlobalArgs& g, const std::string& data_path,
                   const std::string& split_path, const std::string& out) {
  auto data = synth::load_dataset(data_path);
  auto split = synth::load_split(split_path);
  auto ecfg = encoder_from(g.cfg, data.cfg);
  auto tcfg = train_from(g.cfg, g.seed);


  auto res = diag::train_diagnostic(data, split, ecfg, tcfg);
  diag::save_model(res.model, out);
  std::cout << "trained diagnostic: best val mean bACC " << res.best_val_bacc << " at epoch "
            << res.best_epoch + 1 << "/" << tcfg.epochs << ", checkpoint " << out << "\n";
  return 0;
}

int run_train_policy(const GlobalArgs& g, const std::string& data_path,
                     const std::string& split_path, const std::string& model_path,
                     const std::string& out, double lambda) {
  auto data = synth::load_dataset(data_path);
  auto split = synth::load_split(split_path);
  auto model = diag::load_model(model_path);
  auto pcfg = ppo_from(g.cfg, g.seed);


  env::ModelPredictor raw(model);
  eval::SubsetCache predictor(raw);
  auto grid = prob::CategoryGrid::defaults(data.cfg.n_classes);
  auto res = rl::train_selector(data, split, predictor, lambda, pcfg, grid);
  rl::save_policy(res.nets, pcfg, lambda, out);
  std::cout << "trained selector at lambda " << lambda << ": best val mean bACC "
            << res.best_val_bacc << " at epoch " << res.best_epoch + 1 << "/" << pcfg.train_epochs
            << ", final train count " << res.mean_count.back() << ", checkpoint " << out << "\n";
  return 0;
}

int run_eval(const GlobalArgs& g, const std::string& data_path, const std::string& split_path,
             const std::string& model_path, const std::string& method,
             const std::string& policy_path, int k, double lambda, bool lambda_given, int runs,
             bool stochastic) {
  auto data = synth::load_dataset(data_path);
  auto split = synth::load_split(split_path);
  auto model = diag::load_model(model_path);


  env::ModelPredictor raw(model);
  eval::SubsetCache predictor(raw);
  auto grid = prob::CategoryGrid::defaults(data.cfg.n_classes);
  auto records = open_records(g.out_dir, "metrics.jsonl");
  std::vector<std::pair<std::string, eval::MetricsReport>> rows;

  auto stamp = [&](eval::MetricsReport r) {
    r.config_hash = g.config_hash;
    if (r.seed == 0) r.seed = g.seed;
    return r;
  };

  if (method == "random") {
    if (k < 1) throw ConfigError("eval: --k is required for --method random");
    auto res = eval::eval_random_k(data, split.test, predictor, k, runs, g.seed, grid);
    for (std::size_t i = 0; i < res.runs.size(); ++i) {
      auto r = stamp(res.runs[i]);
      records << eval::report_line("random-k" + std::to_string(k) + "-run" + std::to_string(i),
                                   r)
              << "\n";
    }
    rows.emplace_back("random-k" + std::to_string(k), stamp(res.mean));
    rows.emplace_back("  std", stamp(res.stddev));
    records << eval::report_line("random-k" + std::to_string(k) + "-mean", stamp(res.mean))
            << "\n";
    records << eval::report_line("random-k" + std::to_string(k) + "-std", stamp(res.stddev))
            << "\n";
  } else if (method == "popwise") {
    if (k < 1) throw ConfigError("eval: --k is required for --method popwise");
    auto res = eval::eval_popwise_k(data, split.val, split.test, predictor, k, grid);
    std::string names;
    for (int v : res.subset)
      names += std::string(names.empty() ? "" : "+") + synth::view_name(v);
    std::cout << "popwise-k" << k << " chose " << names << " (val mean bACC "
              << res.val_mean_bacc << ")\n";
    rows.emplace_back("popwise-k" + std::to_string(k), stamp(res.report));
    records << eval::report_line("popwise-k" + std::to_string(k) + "-" + names,
                                 stamp(res.report))
            << "\n";
  } else if (method == "rl") {
    if (policy_path.empty()) throw ConfigError("eval: --policy is required for --method rl");
    auto ck = rl::load_policy(policy_path);
    double lam = lambda_given ? lambda : ck.cost_lambda;
    eval::RLEvalResult res;
    std::string label;
    if (k > 0) {
      res = eval::eval_rl_budget(data, split.test, predictor, ck.nets, k, lam, grid);
      label = "rl-budget-k" + std::to_string(k);
    } else {
      res = eval::eval_rl(data, split.test, predictor, ck.nets, lam, grid, !stochastic, g.seed);
      label = stochastic ? "rl-stochastic" : "rl";
    }
    env::save_traces(res.traces, g.out_dir + "/traces.jsonl");
    std::cout << label << " mean sparse reward " << res.mean_reward << ", traces -> "
              << g.out_dir << "/traces.jsonl\n";
    rows.emplace_back(label, stamp(res.report));
    records << eval::report_line(label, stamp(res.report)) << "\n";
  } else {
    throw ConfigError("eval: --method must be random, popwise, or rl");
  }

  std::cout << eval::render_table(rows);
  return 0;
}

int run_sweep(const GlobalArgs& g, const std::string& data_path, const std::string& split_path,
              const std::string& model_path, const std::string& lambdas_csv,
              const std::string& seeds_csv) {
  auto data = synth::load_dataset(data_path);
  auto split = synth::load_split(split_path);
  auto model = diag::load_model(model_path);
  auto lambdas = parse_csv_doubles(lambdas_csv, "sweep lambdas");
  auto seeds = parse_csv_u64(seeds_csv, "sweep seeds");
  auto base = ppo_from(g.cfg, g.seed);


  env::ModelPredictor raw(model);
  eval::SubsetCache predictor(raw);
  auto grid = prob::CategoryGrid::defaults(data.cfg.n_classes);
  auto sweep = eval::sweep_lambda(data, split, predictor, lambdas, seeds, base, grid);
  for (auto& row : sweep.rows) row.mean.config_hash = g.config_hash;

  auto records = open_records(g.out_dir, "sweep.jsonl");
  records << eval::sweep_lines(sweep);
  std::cout << eval::render_sweep(sweep);
  return 0;
}

int run_pathways(const GlobalArgs& g, const std::string& traces_path, int n_views) {

  auto traces = env::load_traces(traces_path);
  auto tree = eval::build_pathway_tree(traces, n_views);
  eval::check_flow(tree);
  std::filesystem::create_directories(g.out_dir);
  eval::save_pathways_dot(tree, g.out_dir + "/pathways.dot");
  eval::save_pathways_json(tree, g.out_dir + "/pathways.json");
  std::cout << "pathway tree over " << tree.n_studies << " studies: " << tree.nodes.size()
            << " states, " << tree.edges.size() << " edges, flow conserved; wrote "
            << g.out_dir << "/pathways.{dot,json}\n";
  return 0;
}

int run_oracle_check(const GlobalArgs& g, const std::string& data_path,
                     const std::string& split_path, const std::string& model_path,
                     std::int64_t max_studies) {

  auto data = synth::load_dataset(data_path);
  auto grid = prob::CategoryGrid::defaults(data.cfg.n_classes);
  std::vector<std::int64_t> ids;
  if (!split_path.empty()) {
    ids = synth::load_split(split_path).test;
  } else {
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(data.studies.size()); ++i)
      ids.push_back(i);
  }
  if (max_studies < static_cast<std::int64_t>(ids.size()))
    ids.resize(static_cast<std::size_t>(max_studies));
  std::int64_t n = static_cast<std::int64_t>(ids.size());
  if (n < 1) throw ConfigError("oracle-check: no studies selected");

  auto records = open_records(g.out_dir, "oracle.jsonl");
  std::vector<std::uint8_t> full(data.cfg.n_views, 1);

  std::vector<eval::StudyOutcome> outs;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& s = data.studies[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])];
    auto post = oracle::bayes_posterior(s, full, data.cfg);
    auto [pa, pe] = oracle::bayes_predict(post, grid);
    eval::StudyOutcome o;
    o.pred_as = pa;
    o.pred_ef = pe;
    o.mu_ef = post.mean.y;
    o.y_as = s.y_as_class;
    o.y_ef = grid.ef_category_of(s.y_ef);
    o.y_ef_value = s.y_ef;
    o.count = data.cfg.n_views;
    outs.push_back(o);
  }
  auto bayes_rep = eval::make_report(outs, data.cfg.n_views, grid);
  bayes_rep.config_hash = g.config_hash;
  bayes_rep.seed = g.seed;
  records << eval::report_line("bayes-oracle-full", bayes_rep) << "\n";
  std::vector<std::pair<std::string, eval::MetricsReport>> rows{{"bayes-oracle", bayes_rep}};

  auto prior = oracle::label_prior(grid);
  auto joint = oracle::bayes_posterior(data.studies[0], full, data.cfg).joint();
  double max_diff = 0.0;
  for (const auto& j : {prior.joint(), joint}) {
    auto exact = prob::discretize(j, grid);
    auto mc = oracle::mc_pmf(j, grid, 1000000, g.seed);
    for (std::size_t c = 0; c < exact.p.size(); ++c)
      max_diff = std::max(max_diff, std::fabs(exact.p[c] - mc.p[c]));
  }
  nlohmann::json mcj;
  mcj["label"] = "mc-vs-discretize";
  mcj["max_cell_diff"] = max_diff;
  mcj["bound"] = 3.0 * std::sqrt(0.25 / 1e6);
  records << mcj.dump() << "\n";
  std::cout << "mc vs discretize max cell diff " << max_diff << " (bound "
            << 3.0 * std::sqrt(0.25 / 1e6) << ")\n";

  if (!model_path.empty()) {
    auto model = diag::load_model(model_path);
    env::ModelPredictor predictor(model);
    std::vector<eval::StudyOutcome> mouts;
    for (std::int64_t i = 0; i < n; ++i)
      mouts.push_back(eval::subset_outcome(
          data.studies[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])], predictor,
          full, grid));
    auto model_rep = eval::make_report(mouts, data.cfg.n_views, grid);
    model_rep.config_hash = g.config_hash;
    records << eval::report_line("model-full", model_rep) << "\n";
    rows.emplace_back("model", model_rep);
    std::cout << "oracle-model mean bACC gap: "
              << bayes_rep.mean_bacc - model_rep.mean_bacc << " points\n";
  }
  std::cout << eval::render_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pacq: budget-constrained active echo-view acquisition on synthetic studies"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--seed", g.seed, "global seed (config-file seeds take precedence)");
  app.add_option("--out-dir", g.out_dir, "directory for metrics, traces, and graphs");
  app.add_option("--threads", g.threads, "worker threads (current build runs serially)");
  app.add_flag("--deterministic", g.deterministic,
               "assert deterministic mode (always on in this build)");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->fallthrough();
  std::string gen_out = "dataset.pacq";
  std::int64_t gen_n = 1000;
  gen->add_option("--out", gen_out, "output dataset path");
  gen->add_option("--n", gen_n, "number of studies");

  auto* spl = app.add_subcommand("split", "shuffle and split a dataset");
  spl->fallthrough();
  std::string spl_data, spl_out = "split.json";
  double spl_train = 0.70, spl_val = 0.15, spl_test = 0.15;
  spl->add_option("--data", spl_data, "dataset path")->required();
  spl->add_option("--out", spl_out, "output split path");
  spl->add_option("--train", spl_train, "train ratio");
  spl->add_option("--val", spl_val, "validation ratio");
  spl->add_option("--test", spl_test, "test ratio");

  auto* td = app.add_subcommand("train-diag", "train the diagnostic transformer");
  td->fallthrough();
  std::string td_data, td_split, td_out = "diag.pdxm";
  td->add_option("--data", td_data, "dataset path")->required();
  td->add_option("--split", td_split, "split path")->required();
  td->add_option("--out", td_out, "output checkpoint path");

  auto* tp = app.add_subcommand("train-policy", "train the PPO view selector");
  tp->fallthrough();
  std::string tp_data, tp_split, tp_model, tp_out = "policy.psel";
  double tp_lambda = 0.05;
  tp->add_option("--data", tp_data, "dataset path")->required();
  tp->add_option("--split", tp_split, "split path")->required();
  tp->add_option("--model", tp_model, "diagnostic checkpoint")->required();
  tp->add_option("--out", tp_out, "output policy path");
  tp->add_option("--lambda", tp_lambda, "acquisition cost weight");

  auto* ev = app.add_subcommand("eval", "evaluate an acquisition method on the test split");
  ev->fallthrough();
  std::string ev_data, ev_split, ev_model, ev_method, ev_policy;
  int ev_k = 0, ev_runs = 5;
  double ev_lambda = 0.0;
  bool ev_stochastic = false;
  ev->add_option("--data", ev_data, "dataset path")->required();
  ev->add_option("--split", ev_split, "split path")->required();
  ev->add_option("--model", ev_model, "diagnostic checkpoint")->required();
  ev->add_option("--method", ev_method, "random | popwise | rl")->required();
  ev->add_option("--policy", ev_policy, "policy checkpoint (rl)");
  ev->add_option("--k", ev_k, "subset size (random/popwise) or forced budget (rl)");
  auto* lam_opt = ev->add_option("--lambda", ev_lambda, "cost weight for rl rewards");
  ev->add_option("--runs", ev_runs, "random-method repetitions");
  ev->add_flag("--stochastic", ev_stochastic, "sample the policy instead of argmax");

  auto* sw = app.add_subcommand("sweep-lambda", "train and evaluate selectors over lambdas");
  sw->fallthrough();
  std::string sw_data, sw_split, sw_model;
  std::string sw_lambdas = "0.001,0.01,0.05,0.1,0.2,0.5";
  std::string sw_seeds = "1,2,3,4,5";
  sw->add_option("--data", sw_data, "dataset path")->required();
  sw->add_option("--split", sw_split, "split path")->required();
  sw->add_option("--model", sw_model, "diagnostic checkpoint")->required();
  sw->add_option("--lambdas", sw_lambdas, "comma-separated ascending lambdas");
  sw->add_option("--seeds", sw_seeds, "comma-separated selector seeds");

  auto* pw = app.add_subcommand("pathways", "aggregate eval traces into a pathway tree");
  pw->fallthrough();
  std::string pw_traces;
  int pw_views = 5;
  pw->add_option("--traces", pw_traces, "traces.jsonl from eval --method rl")->required();
  pw->add_option("--n-views", pw_views, "views in the generating dataset");

  auto* oc = app.add_subcommand("oracle-check", "validate predictions against the Bayes oracle");
  oc->fallthrough();
  std::string oc_data, oc_split, oc_model;
  std::int64_t oc_max = 2000;
  oc->add_option("--data", oc_data, "dataset path")->required();
  oc->add_option("--split", oc_split, "score the test split instead of the whole dataset");
  oc->add_option("--model", oc_model, "optional diagnostic checkpoint to compare");
  oc->add_option("--max-studies", oc_max, "cap on studies scored");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    g.finish();
    if (app.got_subcommand(gen)) return run_gen_data(g, gen_out, gen_n);
    if (app.got_subcommand(spl)) return run_split(g, spl_data, spl_out, spl_train, spl_val, spl_test);
    if (app.got_subcommand(td)) return run_train_diag(g, td_data, td_split, td_out);
    if (app.got_subcommand(tp))
      return run_train_policy(g, tp_data, tp_split, tp_model, tp_out, tp_lambda);
    if (app.got_subcommand(ev))
      return run_eval(g, ev_data, ev_split, ev_model, ev_method, ev_policy, ev_k, ev_lambda,
                      lam_opt->count() > 0, ev_runs, ev_stochastic);
    if (app.got_subcommand(sw)) return run_sweep(g, sw_data, sw_split, sw_model, sw_lambdas, sw_seeds);
    if (app.got_subcommand(pw)) return run_pathways(g, pw_traces, pw_views);
    if (app.got_subcommand(oc)) return run_oracle_check(g, oc_data, oc_split, oc_model, oc_max);
    throw ConfigError("no subcommand given");
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
