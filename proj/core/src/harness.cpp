#include "dymen/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dymen/parallel.hpp"

namespace dymen {

double micro_f1(std::span<const std::string> predictions, std::span<const std::string> golds) {
  if (predictions.size() != golds.size())
    throw std::invalid_argument("micro_f1: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(golds.size()) + " golds");
  if (predictions.empty()) throw std::invalid_argument("micro_f1: empty prediction set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) correct += predictions[i] == golds[i];
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

// ---------------------------------------------------------------------------
// Ordering strategies

OrderingStrategy OrderingStrategy::parse(const std::string& spec) {
  OrderingStrategy s;
  if (spec == "offset") s.kind = OrderKind::offset;
  else if (spec == "size") s.kind = OrderKind::size;
  else if (spec == "random") s.kind = OrderKind::random;
  else if (spec == "similarity") s.kind = OrderKind::similarity;
  else if (spec == "dynamic") s.kind = OrderKind::dynamic;
  else if (spec == "exhaustive-best") s.kind = OrderKind::exhaustive_best;
  else if (spec.rfind("forced:", 0) == 0) {
    s.kind = OrderKind::forced;
    const std::string path = spec.substr(7);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open forced order file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::string id;
      if (!(ls >> id)) continue;
      std::vector<std::size_t> order;
      long long x = 0;
      while (ls >> x) {
        if (x < 0)
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": negative index");
        order.push_back(static_cast<std::size_t>(x));
      }
      s.forced[id] = std::move(order);
    }
  } else {
    throw std::invalid_argument(
        "unknown ordering '" + spec +
        "' (expected offset, size, random, similarity, dynamic, exhaustive-best, forced:<file>)");
  }
  return s;
}

std::string OrderingStrategy::name() const {
  switch (kind) {
    case OrderKind::offset: return "offset";
    case OrderKind::size: return "size";
    case OrderKind::random: return "random";
    case OrderKind::similarity: return "similarity";
    case OrderKind::dynamic: return "dynamic";
    case OrderKind::forced: return "forced";
    case OrderKind::exhaustive_best: return "exhaustive-best";
  }
  return "?";
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace

std::vector<std::size_t> fixed_order(const Document& doc, const EmbeddingStore& store,
                                     const Model& model, const OrderingStrategy& strategy,
                                     std::size_t doc_index) {
  const std::size_t L = doc.mentions.size();
  std::vector<std::size_t> order(L);
  std::iota(order.begin(), order.end(), 0);
  switch (strategy.kind) {
    case OrderKind::offset:
      break;
    case OrderKind::size:
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return doc.mentions[a].candidates.size() < doc.mentions[b].candidates.size();
      });
      break;
    case OrderKind::random: {
      std::seed_seq seq{strategy.seed, static_cast<std::uint64_t>(doc_index)};
      std::mt19937_64 rng(seq);
      std::shuffle(order.begin(), order.end(), rng);
      break;
    }
    case OrderKind::similarity: {
      std::vector<std::vector<double>> repr;
      for (const Mention& m : doc.mentions)
        repr.push_back(context_feature(m, store, model.attn).to_vector());
      order.clear();
      std::vector<bool> done(L, false);
      std::size_t cur = 0;
      for (std::size_t step = 0; step < L; ++step) {
        if (step > 0) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t pick = L;
          for (std::size_t j = 0; j < L; ++j) {
            if (done[j]) continue;
            const double s = cosine(repr[cur], repr[j]);
            if (pick == L || s > best) {
              best = s;
              pick = j;
            }
          }
          cur = pick;
        }
        done[cur] = true;
        order.push_back(cur);
      }
      break;
    }
    case OrderKind::forced: {
      auto it = strategy.forced.find(doc.id);
      if (it == strategy.forced.end())
        throw std::invalid_argument("forced ordering has no entry for document '" + doc.id +
                                    "'");
      order = it->second;
      break;
    }
    case OrderKind::dynamic:
    case OrderKind::exhaustive_best:
      throw std::invalid_argument("fixed_order: '" + strategy.name() +
                                  "' ordering depends on the model");
  }
  return order;
}

std::vector<std::vector<std::size_t>> window_orderings(std::size_t L, std::size_t W) {
  if (L > 9) throw std::invalid_argument("ordering enumeration is limited to L <= 9");
  if (W == 0) throw std::invalid_argument("window width must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> unresolved(L), prefix;
  std::iota(unresolved.begin(), unresolved.end(), 0);
  std::function<void()> rec = [&] {
    if (unresolved.empty()) {
      out.push_back(prefix);
      return;
    }
    const std::size_t k = std::min(W, unresolved.size());
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t m = unresolved[i];
      unresolved.erase(unresolved.begin() + static_cast<std::ptrdiff_t>(i));
      prefix.push_back(m);
      rec();
      prefix.pop_back();
      unresolved.insert(unresolved.begin() + static_cast<std::ptrdiff_t>(i), m);
    }
  };
  rec();
  return out;
}

std::vector<std::size_t> exhaustive_best_order(const Document& doc, const EmbeddingStore& store,
                                               const Model& model, std::size_t window) {
  const std::size_t L = doc.mentions.size();
  if (L > 9)
    throw std::invalid_argument("exhaustive-best ordering needs L <= 9, document '" + doc.id +
                                "' has " + std::to_string(L));
  if (window == 0) window = L;
  const ForwardContext ctx{};
  const auto views = view_mentions(doc, store, model, ctx);

  std::vector<std::size_t> unresolved(L), prefix, best_order;
  std::iota(unresolved.begin(), unresolved.end(), 0);
  std::vector<std::string> linked;
  std::size_t best = 0;
  bool have = false;
  std::function<void(std::size_t)> rec = [&](std::size_t correct) {
    if (unresolved.empty()) {
      if (!have || correct > best) {
        best = correct;
        best_order = prefix;
        have = true;
      }
      return;
    }
    if (have && correct + unresolved.size() <= best) return;
    const std::size_t k = std::min(window, unresolved.size());
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t m = unresolved[i];
      const LinkDecision d = link_mention(doc.mentions[m], views[m], linked, store, model, ctx);
      unresolved.erase(unresolved.begin() + static_cast<std::ptrdiff_t>(i));
      prefix.push_back(m);
      linked.push_back(doc.mentions[m].candidates[d.predicted].entity_id);
      rec(correct + (d.correct ? 1 : 0));
      linked.pop_back();
      prefix.pop_back();
      unresolved.insert(unresolved.begin() + static_cast<std::ptrdiff_t>(i), m);
      if (best == L) return;
    }
  };
  rec(0);
  return best_order;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["strategy"] = strategy;
  j["micro_f1"] = micro_f1;
  j["correct"] = correct;
  j["total"] = total;
  j["mean_displacement"] = mean_displacement;
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  j["config_hash"] = hash;
  j["seed"] = seed;
  j["config"] = config;
  auto& docs = j["documents"] = nlohmann::json::array();
  for (const DocumentResult& d : documents) {
    std::string flags;
    for (bool f : d.flags) flags += f ? '1' : '0';
    docs.push_back({{"id", d.id},
                    {"order", d.order},
                    {"flags", flags},
                    {"accuracy", d.accuracy},
                    {"predictions", d.predictions},
                    {"probabilities", d.probabilities}});
  }
  return j.dump(2);
}

EvalReport run_baseline(std::span<const Document> docs, const EmbeddingStore& store,
                        const Model& model, const TrainConfig& cfg,
                        const OrderingStrategy& strategy) {
  if (docs.empty()) throw std::invalid_argument("evaluation: no documents");
  EvalReport report;
  report.strategy = strategy.name();
  report.config = to_config_string(cfg);
  report.config_hash = config_hash(cfg);
  report.seed = cfg.seed;
  report.documents.resize(docs.size());

  parallel_for(docs.size(), cfg.threads, [&](std::size_t i) {
    const Document& doc = docs[i];
    RolloutOptions opts;
    if (strategy.kind == OrderKind::dynamic) {
      opts.window = strategy.window;
    } else if (strategy.kind == OrderKind::exhaustive_best) {
      const std::size_t w =
          strategy.window != 0 ? strategy.window : cfg.window_for(doc.mentions.size());
      opts.forced_order = exhaustive_best_order(doc, store, model, w);
    } else {
      opts.forced_order = fixed_order(doc, store, model, strategy, i);
    }
    const Episode ep = rollout(doc, store, model, cfg, opts);
    DocumentResult& r = report.documents[i];
    r.id = doc.id;
    r.order = ep.order;
    r.flags = ep.flags;
    r.probabilities = ep.predicted_prob;
    r.predictions.assign(doc.mentions.size(), "");
    for (std::size_t t = 0; t < ep.order.size(); ++t)
      r.predictions[ep.order[t]] = ep.predicted_entity[t];
    r.accuracy = ep.accuracy();
  });

  std::vector<std::string> preds, golds;
  double displacement = 0.0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const DocumentResult& r = report.documents[i];
    for (std::size_t m = 0; m < docs[i].mentions.size(); ++m) {
      preds.push_back(r.predictions[m]);
      golds.push_back(docs[i].mentions[m].gold);
    }
    for (std::size_t t = 0; t < r.order.size(); ++t)
      displacement += std::abs(static_cast<double>(t) - static_cast<double>(r.order[t]));
  }
  report.micro_f1 = micro_f1(preds, golds);
  report.total = golds.size();
  report.correct = static_cast<std::size_t>(
      std::llround(report.micro_f1 * static_cast<double>(report.total)));
  report.mean_displacement = displacement / static_cast<double>(report.total);
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "window" || name == "W") return SweepAxis::window;
  if (name == "gamma1") return SweepAxis::gamma1;
  if (name == "reward") return SweepAxis::reward;
  throw std::invalid_argument("unknown sweep axis '" + name + "' (expected window, gamma1, reward)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::window: return "window";
    case SweepAxis::gamma1: return "gamma1";
    case SweepAxis::reward: return "reward";
  }
  return "?";
}

std::vector<std::string> default_grid(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::window: return {"2", "3", "4", "5", "6", "7", "L"};
    case SweepAxis::gamma1: return {"0.001", "0.00075", "0.0005", "0.00025", "0.0001"};
    case SweepAxis::reward: return {"R1", "R2-1", "R2-2", "R3"};
  }
  return {};
}

TrainConfig with_axis_value(TrainConfig cfg, SweepAxis axis, const std::string& value) {
  switch (axis) {
    case SweepAxis::window:
      cfg = parse_config("window = " + value, cfg);
      break;
    case SweepAxis::gamma1:
      cfg = parse_config("gamma1 = " + value, cfg);
      break;
    case SweepAxis::reward:
      cfg.reward = parse_reward_kind(value);
      if (cfg.reward == RewardKind::r2_fixed) cfg.lambda = TransitionRewards{0, -2, -1, 0};
      break;
  }
  cfg.validate();
  return cfg;
}

std::vector<SweepCell> sweep(std::span<const Document> train_docs,
                             std::span<const Document> validation_docs,
                             std::span<const Document> test_docs, const EmbeddingStore& store,
                             const TrainConfig& base, SweepAxis axis,
                             const std::vector<std::string>& grid,
                             const std::vector<std::uint64_t>& seeds) {
  if (grid.empty() || seeds.empty()) throw std::invalid_argument("sweep: empty grid or seeds");
  std::vector<std::pair<std::string, std::uint64_t>> jobs;
  for (const auto& v : grid)
    for (auto s : seeds) jobs.emplace_back(v, s);
  std::vector<SweepCell> cells(jobs.size());
  TrainConfig inner = base;
  const std::size_t workers = std::max<std::size_t>(1, base.threads);
  inner.threads = 1;
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    TrainConfig cfg = with_axis_value(inner, axis, jobs[i].first);
    cfg.seed = jobs[i].second;
    Model model = Model::make(cfg, store.dim());
    const TrainResult tr = train(train_docs, validation_docs, store, cfg, model);
    const EvalReport rep = run_baseline(test_docs, store, model, cfg, OrderingStrategy{});
    cells[i] = SweepCell{to_string(axis), jobs[i].first, cfg.seed, rep.micro_f1,
                         tr.best_validation, config_hash(cfg)};
  });
  return cells;
}

std::vector<SweepSummary> summarize(const std::vector<SweepCell>& cells) {
  std::vector<SweepSummary> out;
  for (const SweepCell& c : cells) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const SweepSummary& s) { return s.value == c.value; });
    if (it == out.end()) {
      out.push_back({c.value, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    ++it->runs;
    it->mean += c.micro_f1;
  }
  for (SweepSummary& s : out) {
    s.mean /= static_cast<double>(s.runs);
    double ss = 0.0;
    for (const SweepCell& c : cells)
      if (c.value == s.value) ss += (c.micro_f1 - s.mean) * (c.micro_f1 - s.mean);
    s.stdev = s.runs > 1 ? std::sqrt(ss / static_cast<double>(s.runs - 1)) : 0.0;
  }
  return out;
}

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

constexpr const char* kSweepHeader = "axis,value,seed,micro_f1,best_validation,config_hash";

}  // namespace

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kSweepHeader << "\n";
  for (const SweepCell& c : cells) {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(c.config_hash));
    out << c.axis << "," << c.value << "," << c.seed << "," << num(c.micro_f1) << ","
        << num(c.best_validation) << "," << hash << "\n";
  }
}

std::vector<SweepCell> load_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kSweepHeader)
    throw std::runtime_error(path.string() + ": unexpected sweep CSV header");
  std::vector<SweepCell> cells;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 6)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected 6 columns");
    try {
      cells.push_back(SweepCell{f[0], f[1], std::stoull(f[2]), std::stod(f[3]), std::stod(f[4]),
                                std::stoull(f[5], nullptr, 16)});
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed number");
    }
  }
  return cells;
}

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<SweepSummary>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "value,mean,stdev,runs\n";
  for (const SweepSummary& r : rows)
    out << r.value << "," << num(r.mean) << "," << num(r.stdev) << "," << r.runs << "\n";
}

// ---------------------------------------------------------------------------
// Gradient checking

Corpus random_instance(std::uint64_t seed, std::size_t dim, std::size_t mentions,
                       std::size_t candidates) {
  if (dim == 0 || mentions == 0 || candidates == 0)
    throw std::invalid_argument("random_instance: sizes must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  std::uniform_real_distribution<double> u(0.05, 1.0);
  auto vec = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    return v;
  };
  Corpus c;
  c.context_size = 2;
  c.store = EmbeddingStore(dim);
  Document doc;
  doc.id = "r" + std::to_string(seed);
  std::vector<std::string> all_entities;
  for (std::size_t i = 0; i < mentions; ++i) {
    const std::string mp = doc.id + "_m" + std::to_string(i);
    Mention m;
    m.id = mp;
    for (std::size_t k = 0; k < 2; ++k) {
      c.store.set_word(mp + "_l" + std::to_string(k), vec(dim));
      doc.words.push_back(mp + "_l" + std::to_string(k));
    }
    m.span_begin = doc.words.size();
    c.store.set_word(mp + "_s", vec(dim));
    doc.words.push_back(mp + "_s");
    m.span_end = doc.words.size();
    c.store.set_word(mp + "_r", vec(dim));
    doc.words.push_back(mp + "_r");
    double total = 0.0;
    std::vector<double> pri(candidates);
    for (double& p : pri) total += (p = u(rng));
    for (std::size_t k = 0; k < candidates; ++k) {
      const std::string eid = mp + "_e" + std::to_string(k);
      c.store.set_entity(eid, vec(dim));
      c.store.set_word(eid + "_w", vec(dim));
      c.store.set_entity_surface(eid, {eid + "_w"});
      c.store.set_entity_type(eid, vec(3));
      m.candidates.push_back({eid, pri[k] / total});
      all_entities.push_back(eid);
    }
    c.store.set_mention_type(mp, vec(3));
    m.gold = m.candidates[std::uniform_int_distribution<std::size_t>(0, candidates - 1)(rng)]
                 .entity_id;
    doc.mentions.push_back(std::move(m));
  }
  std::bernoulli_distribution edge(0.3);
  for (const auto& a : all_entities)
    for (const auto& b : all_entities)
      if (a != b && edge(rng)) c.store.add_edge(a, b);
  derive_context(doc, c.context_size);
  c.documents.push_back(std::move(doc));
  return c;
}

GradCheckReport grad_check(const Document& doc, const EmbeddingStore& store, Model& model,
                           const TrainConfig& cfg_in, std::uint64_t seed,
                           const GradCheckOptions& opts) {
  TrainConfig cfg = cfg_in;
  cfg.dropout = 0.0;
  std::optional<double> saved_tdrop;
  if (model.transformer) {
    saved_tdrop = model.transformer->config.dropout;
    model.transformer->config.dropout = 0.0;
  }
  struct Restore {
    Model& m;
    std::optional<double> d;
    ~Restore() {
      if (d && m.transformer) m.transformer->config.dropout = *d;
    }
  } restore{model, saved_tdrop};

  std::mt19937_64 rng(seed);
  if (opts.jitter > 0.0) {
    std::normal_distribution<double> noise(0.0, opts.jitter);
    for (auto& [name, param] : model.params.items())
      for (double& v : param.mutable_values()) v += noise(rng);
  }
  RolloutOptions sample;
  sample.mode = Mode::train;
  sample.select = SelectMode::sample;
  sample.rng = &rng;
  const std::vector<std::size_t> order = rollout(doc, store, model, cfg, sample).order;
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::vector<double> c(order.size());
  for (double& x : c) x = coef(rng);

  auto objective = [&]() {
    RolloutOptions o;
    o.mode = Mode::train;
    o.forced_order = order;
    o.score_forced = true;
    const Episode ep = rollout(doc, store, model, cfg, o);
    Tensor obj = margin_loss(doc, ep, cfg.beta);
    for (std::size_t t = 0; t < ep.log_probs.size(); ++t)
      obj = add(obj, scale(ep.log_probs[t], c[t]));
    return obj;
  };

  model.params.zero_grad();
  const Tensor f = objective();
  backward(f);
  const double f0 = f.item();

  GradCheckReport report;
  for (auto& [name, param] : model.params.items()) {
    GradCheckEntry entry;
    entry.name = name;
    const std::vector<double> analytic(param.grad().begin(), param.grad().end());
    std::vector<std::size_t> idx(param.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::stable_partition(idx.begin(), idx.end(),
                          [&](std::size_t i) { return analytic[i] != 0.0; });
    if (opts.max_entries_per_tensor != 0 && idx.size() > opts.max_entries_per_tensor)
      idx.resize(opts.max_entries_per_tensor);

    for (std::size_t i : idx) {
      auto v = param.mutable_values();
      const double orig = v[i];
      v[i] = orig + opts.step;
      const double fp = objective().item();
      v[i] = orig - opts.step;
      const double fm = objective().item();
      v[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double fwd = (fp - f0) / opts.step, bwd = (f0 - fm) / opts.step;
      const bool kink =
          std::abs(fwd - bwd) > 1e-2 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-6;
      const double rel = std::abs(analytic[i] - numeric) /
                         std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      if (rel > opts.tolerance && kink) {
        ++entry.skipped;
        continue;
      }
      ++entry.checked;
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
    }
    report.checked += entry.checked;
    report.skipped += entry.skipped;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(entry);
  }
  const double total = static_cast<double>(report.checked + report.skipped);
  report.passed = report.max_rel_error <= opts.tolerance &&
                  (total == 0.0 ||
                   static_cast<double>(report.skipped) / total <= opts.max_skip_fraction);
  model.params.zero_grad();
  return report;
}

}  // namespace dymen
