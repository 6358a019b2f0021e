// dymen: command-line front end for corpus generation, training, linking,
// evaluation, sweeps, gradient checks and reward tables.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dymen/corpus.hpp"
#include "dymen/harness.hpp"
#include "dymen/log.hpp"
#include "dymen/rewards.hpp"
#include "dymen/trainer.hpp"

namespace fs = std::filesystem;
using namespace dymen;

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Small-denominator fraction for display, e.g. -27/7.
std::string as_fraction(double x) {
  for (long den = 1; den <= 1000; ++den) {
    const double n = x * static_cast<double>(den);
    if (std::abs(n - std::round(n)) < 1e-9 * std::max(1.0, std::abs(n))) {
      const long nn = std::lround(n);
      return den == 1 ? std::to_string(nn) : std::to_string(nn) + "/" + std::to_string(den);
    }
  }
  return num(x);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void echo_config(const TrainConfig& cfg) {
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  std::cout << "# config_hash " << hash << " seed " << cfg.seed << "\n";
  std::istringstream in(to_config_string(cfg));
  std::string line;
  while (std::getline(in, line)) std::cout << "# " << line << "\n";
}

TrainConfig config_from(const std::string& path, const std::vector<std::string>& sets,
                        std::optional<std::uint64_t> seed) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  std::string extra;
  for (const auto& s : sets) extra += s + "\n";
  cfg = parse_config(extra, cfg);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

struct Split {
  std::vector<Document> train, validation, test;
};

// Last fraction of the documents goes to validation; with a test split the
// fraction before it goes to validation.
Split split_corpus(const std::vector<Document>& docs, double fraction, bool with_test) {
  const auto n = docs.size();
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  const std::size_t held = with_test ? 2 * k : k;
  if (held >= n) throw std::invalid_argument("corpus too small for the requested split");
  Split s;
  s.train.assign(docs.begin(), docs.end() - static_cast<std::ptrdiff_t>(held));
  s.validation.assign(docs.end() - static_cast<std::ptrdiff_t>(held),
                      docs.end() - static_cast<std::ptrdiff_t>(held - k));
  if (with_test) s.test.assign(docs.end() - static_cast<std::ptrdiff_t>(k), docs.end());
  return s;
}

struct LoadedModel {
  TrainConfig cfg;
  Model model;
};

LoadedModel load_model(const fs::path& dir, std::size_t dim) {
  LoadedModel m{load_config(dir / "train.cfg"), {}};
  m.model = Model::make(m.cfg, dim);
  load_checkpoint(dir / "model.ckpt", m.model.params);
  return m;
}

int cmd_gen_corpus(const SyntheticSpec& spec, const std::string& out) {
  const SyntheticCorpus sc = generate_synthetic(spec);
  save_corpus_dir(out, sc.corpus);
  nlohmann::json anchors = nlohmann::json::array();
  for (std::size_t i = 0; i < sc.anchors.size(); ++i) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [a, b] : sc.anchors[i]) pairs.push_back({a, b});
    anchors.push_back({{"document", sc.corpus.documents[i].id}, {"anchored_to", pairs}});
  }
  std::ofstream(fs::path(out) / "anchors.json") << anchors.dump(2) << "\n";
  std::cout << "wrote " << sc.corpus.documents.size() << " documents to " << out
            << " (seed " << spec.seed << ", gold recall "
            << num(gold_recall(sc.corpus.documents)) << ")\n";
  return 0;
}

int cmd_train(const std::string& corpus_dir, const TrainConfig& cfg, const std::string& out) {
  echo_config(cfg);
  const Corpus corpus = load_corpus_dir(corpus_dir);
  const Split s = split_corpus(corpus.documents, cfg.validation_fraction, false);
  Model model = Model::make(cfg, corpus.store.dim());
  fs::create_directories(out);
  std::ofstream log_csv(fs::path(out) / "train_log.csv");
  log_csv << "epoch,margin_loss,policy_objective,train_accuracy,validation_accuracy,lr\n";
  const TrainResult r = train(s.train, s.validation, corpus.store, cfg, model, fs::path(out),
                              [&](const EpochLog& e) {
                                log_csv << e.epoch << "," << num(e.margin_loss) << ","
                                        << num(e.policy_objective) << ","
                                        << num(e.train_accuracy) << ","
                                        << num(e.validation_accuracy) << "," << num(e.lr)
                                        << "\n";
                                std::cout << "epoch " << e.epoch << " loss "
                                          << num(e.margin_loss) << " val_acc "
                                          << num(e.validation_accuracy) << "\n";
                              });
  save_checkpoint(fs::path(out) / "model.ckpt", model.params);
  std::ofstream(fs::path(out) / "train.cfg") << to_config_string(cfg);
  std::cout << "best_validation " << num(r.best_validation) << " epoch " << r.best_epoch << "\n";
  return 0;
}

OrderingStrategy strategy_from(const std::string& order, std::size_t window,
                               std::uint64_t seed) {
  OrderingStrategy s = OrderingStrategy::parse(order);
  s.window = window;
  s.seed = seed;
  return s;
}

int cmd_eval(const std::string& corpus_dir, const std::string& model_dir,
             const std::string& order, std::size_t window, const std::string& report_path,
             std::size_t threads) {
  const Corpus corpus = load_corpus_dir(corpus_dir);
  LoadedModel lm = load_model(model_dir, corpus.store.dim());
  if (threads != 0) lm.cfg.threads = threads;
  echo_config(lm.cfg);
  const EvalReport rep = run_baseline(corpus.documents, corpus.store, lm.model, lm.cfg,
                                      strategy_from(order, window, lm.cfg.seed));
  std::cout << "micro_f1 " << num(rep.micro_f1) << " (" << rep.correct << "/" << rep.total
            << ") mean_displacement " << num(rep.mean_displacement) << "\n";
  if (!report_path.empty()) std::ofstream(report_path) << rep.to_json() << "\n";
  return 0;
}

int cmd_link(const std::string& corpus_dir, const std::string& model_dir,
             const std::string& order, std::size_t window, const std::string& out) {
  const Corpus corpus = load_corpus_dir(corpus_dir);
  LoadedModel lm = load_model(model_dir, corpus.store.dim());
  echo_config(lm.cfg);
  const EvalReport rep = run_baseline(corpus.documents, corpus.store, lm.model, lm.cfg,
                                      strategy_from(order, window, lm.cfg.seed));
  std::ofstream o(out);
  if (!o) throw std::runtime_error("cannot write " + out);
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    const Document& d = corpus.documents[i];
    const DocumentResult& r = rep.documents[i];
    nlohmann::json j;
    j["id"] = d.id;
    j["order"] = r.order;
    auto& ms = j["mentions"] = nlohmann::json::array();
    for (std::size_t m = 0; m < d.mentions.size(); ++m)
      ms.push_back({{"id", d.mentions[m].id},
                    {"span", {d.mentions[m].span_begin, d.mentions[m].span_end}},
                    {"predicted", r.predictions[m]},
                    {"gold", d.mentions[m].gold}});
    o << j.dump() << "\n";
  }
  std::cout << "linked " << rep.total << " mentions, micro_f1 " << num(rep.micro_f1) << "\n";
  return 0;
}

int cmd_sweep(const std::string& corpus_dir, const TrainConfig& cfg, const std::string& axis_s,
              const std::string& grid_s, const std::string& seeds_s, const std::string& out) {
  echo_config(cfg);
  const SweepAxis axis = parse_sweep_axis(axis_s);
  const auto grid = grid_s.empty() ? default_grid(axis) : split(grid_s, ',');
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split(seeds_s, ',')) seeds.push_back(std::stoull(s));
  const Corpus corpus = load_corpus_dir(corpus_dir);
  const Split s = split_corpus(corpus.documents, cfg.validation_fraction, true);
  const auto cells =
      sweep(s.train, s.validation, s.test, corpus.store, cfg, axis, grid, seeds);
  const auto summary = summarize(cells);
  write_sweep_csv(out + "_cells.csv", cells);
  write_summary_csv(out + "_summary.csv", summary);
  for (const auto& r : summary)
    std::cout << to_string(axis) << "=" << r.value << " micro_f1 " << num(r.mean) << " +- "
              << num(r.stdev) << " (" << r.runs << " runs)\n";
  return 0;
}

int cmd_grad_check(std::size_t seeds, const std::string& local, double tolerance,
                   std::size_t dim) {
  std::vector<LocalModelKind> kinds;
  if (local == "attn" || local == "both") kinds.push_back(LocalModelKind::attn);
  if (local == "transformer" || local == "both") kinds.push_back(LocalModelKind::transformer);
  if (kinds.empty()) throw std::invalid_argument("--local must be attn, transformer or both");
  double worst = 0.0;
  bool ok = true;
  std::map<std::string, double> per_tensor;
  for (std::size_t s = 1; s <= seeds; ++s) {
    for (LocalModelKind k : kinds) {
      TrainConfig cfg;
      cfg.seed = s;
      cfg.local_model = k;
      cfg.window = 3;
      cfg.top_k = 2;
      cfg.selector_top_k = 2;
      cfg.top_r = 3;
      cfg.transformer = TransformerConfig{1, 2, 3, 8, 4, 16, 8, 0.0};
      const Corpus c = random_instance(s, dim, 4, 3);
      Model model = Model::make(cfg, dim);
      GradCheckOptions opts;
      opts.tolerance = tolerance;
      const GradCheckReport r = grad_check(c.documents[0], c.store, model, cfg, s, opts);
      ok = ok && r.passed;
      worst = std::max(worst, r.max_rel_error);
      for (const auto& e : r.entries)
        per_tensor[e.name] = std::max(per_tensor[e.name], e.max_rel_error);
    }
  }
  for (const auto& [name, err] : per_tensor) std::cout << name << " " << num(err) << "\n";
  std::cout << (ok ? "PASS" : "FAIL") << " max_rel_error " << num(worst) << " over " << seeds
            << " seeds\n";
  return ok ? 0 : 1;
}

int cmd_reward_table(const std::string& flags_s, std::size_t L, std::size_t t, double gamma,
                     const std::string& lambda_s, const std::string& probs_s) {
  EpisodeOutcome o{parse_flags(flags_s), gamma};
  if (L != 0 && L != o.flags.size())
    throw std::invalid_argument("--L " + std::to_string(L) + " does not match " +
                                std::to_string(o.flags.size()) + " flags");
  if (t == 0) t = o.flags.size();
  TransitionRewards lambda;
  const auto parts = split(lambda_s, ',');
  if (parts.size() != 4) throw std::invalid_argument("--lambda needs TT,TF,FF,FT");
  lambda = {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]), std::stod(parts[3])};
  std::vector<double> probs;
  for (const auto& p : split(probs_s, ',')) probs.push_back(std::stod(p));

  std::cout << "flags " << flags_s << " L " << o.flags.size() << " t " << t << " gamma "
            << num(gamma) << "\n";
  auto row = [&](const std::string& name, RewardKind kind,
                 std::optional<std::span<const double>> p) {
    const double base = reward_base(kind, o, lambda, p);
    const double r = reward(kind, o, t, lambda, p);
    std::cout << name << " base " << as_fraction(base) << " (" << num(base) << ") R(t) "
              << num(r) << "\n";
  };
  row("R1", RewardKind::r1, std::nullopt);
  row("R2-1", RewardKind::r2_fixed, std::nullopt);
  if (!probs.empty()) row("R2-2", RewardKind::r2_prob, std::span<const double>(probs));
  row("R3", RewardKind::r3, std::nullopt);
  const TransitionCounts c = count_transitions(o.flags);
  std::cout << "transitions TT " << c.tt << " TF " << c.tf << " FF " << c.ff << " FT " << c.ft
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dymen: sequential entity linking with dynamic mention selection"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "debug, info, warn, error, off");

  // gen-corpus
  SyntheticSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic anchored corpus");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--docs", spec.num_docs);
  gen->add_option("--mentions", spec.mentions_per_doc);
  gen->add_option("--candidates", spec.candidates_per_mention);
  gen->add_option("--dim", spec.embedding_dim);
  gen->add_option("--anchor-fraction", spec.anchor_fraction);
  gen->add_option("--noise", spec.noise_scale);
  gen->add_option("--context", spec.context_size);
  gen->add_option("--seed", spec.seed);
  gen->add_flag("--flat-priors", spec.flat_priors, "Uniform candidate priors");

  // Shared training options.
  std::string corpus_dir, config_path, out, model_dir, order = "dynamic", report_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::size_t window = 0, threads = 0;

  auto* tr = app.add_subcommand("train", "Train a model on a corpus directory");
  tr->add_option("--corpus", corpus_dir)->required();
  tr->add_option("--config", config_path)->check(CLI::ExistingFile);
  tr->add_option("--set", sets, "Override a config key (key=value)");
  tr->add_option("--seed", seed);
  tr->add_option("--out", out, "Output model directory")->required();

  auto* ln = app.add_subcommand("link", "Annotate a corpus with predicted entities");
  ln->add_option("--corpus", corpus_dir)->required();
  ln->add_option("--model", model_dir)->required();
  ln->add_option("--order", order);
  ln->add_option("--window", window);
  ln->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a trained model under an ordering strategy");
  ev->add_option("--corpus", corpus_dir)->required();
  ev->add_option("--model", model_dir)->required();
  ev->add_option("--order", order);
  ev->add_option("--window", window);
  ev->add_option("--report", report_path, "Write the JSON report here");
  ev->add_option("--threads", threads);

  std::string axis = "window", grid, seeds_s = "1";
  auto* sw = app.add_subcommand("sweep", "Train and evaluate over a hyper-parameter grid");
  sw->add_option("--corpus", corpus_dir)->required();
  sw->add_option("--config", config_path)->check(CLI::ExistingFile);
  sw->add_option("--set", sets);
  sw->add_option("--axis", axis);
  sw->add_option("--grid", grid, "Comma separated values; default is the published grid");
  sw->add_option("--seeds", seeds_s);
  sw->add_option("--out", out, "Output prefix for the CSV files")->required();

  std::size_t gc_seeds = 5, gc_dim = 5;
  std::string gc_local = "both";
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check");
  gc->add_option("--seeds", gc_seeds);
  gc->add_option("--local", gc_local);
  gc->add_option("--tolerance", gc_tol);
  gc->add_option("--dim", gc_dim);

  std::string flags_s, lambda_s = "0,-2,-1,0", probs_s;
  std::size_t rt_L = 0, rt_t = 0;
  double rt_gamma = 0.9;
  auto* rt = app.add_subcommand("reward-table", "Print R1/R2/R3 for a flag string");
  rt->add_option("--flags", flags_s)->required();
  rt->add_option("--L", rt_L);
  rt->add_option("--t", rt_t);
  rt->add_option("--gamma", rt_gamma);
  rt->add_option("--lambda", lambda_s);
  rt->add_option("--probs", probs_s, "Per-step probabilities for R2-2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (log_level == "debug") logging::set_level(logging::Level::debug);
    else if (log_level == "info") logging::set_level(logging::Level::info);
    else if (log_level == "warn") logging::set_level(logging::Level::warn);
    else if (log_level == "error") logging::set_level(logging::Level::error);
    else if (log_level == "off") logging::set_level(logging::Level::off);
    else throw std::invalid_argument("unknown --log-level " + log_level);

    if (*gen) return cmd_gen_corpus(spec, gen_out);
    if (*tr) return cmd_train(corpus_dir, config_from(config_path, sets, seed), out);
    if (*ln) return cmd_link(corpus_dir, model_dir, order, window, out);
    if (*ev) return cmd_eval(corpus_dir, model_dir, order, window, report_path, threads);
    if (*sw)
      return cmd_sweep(corpus_dir, config_from(config_path, sets, std::nullopt), axis, grid,
                       seeds_s, out);
    if (*gc) return cmd_grad_check(gc_seeds, gc_local, gc_tol, gc_dim);
    if (*rt) return cmd_reward_table(flags_s, rt_L, rt_t, rt_gamma, lambda_s, probs_s);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
