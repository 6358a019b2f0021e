#include "dymen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "dymen/log.hpp"
#include "dymen/parallel.hpp"

namespace dymen {

LocalModelKind parse_local_model(const std::string& name) {
  if (name == "attn") return LocalModelKind::attn;
  if (name == "transformer" || name == "tran") return LocalModelKind::transformer;
  throw std::invalid_argument("unknown local model '" + name + "' (expected attn, transformer)");
}

std::string to_string(LocalModelKind kind) {
  return kind == LocalModelKind::attn ? "attn" : "transformer";
}

// ---------------------------------------------------------------------------
// Configuration

TrainConfig TrainConfig::paper_profile() {
  TrainConfig c;
  c.lr = 2e-4;
  c.lr_after = 1e-4;
  c.lr_drop_threshold = 0.9;
  c.epochs = 300;
  c.window = 4;
  c.top_k = 7;
  c.selector_top_k = 7;
  c.gamma = 0.9;
  c.gamma1 = 1e-4;
  c.fusion_hidden = 100;
  c.transformer = TransformerConfig{4, 6, 50, 300, 100, 512, 64, 0.1};
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (!(gamma1 > 0.0)) fail("gamma1 must be > 0");
  if (!(beta > 0.0)) fail("beta must be > 0");
  if (!(lr > 0.0) || !(lr_after > 0.0)) fail("learning rates must be > 0");
  if (top_k == 0 || selector_top_k == 0) fail("top_k values must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(transformer.dropout >= 0.0 && transformer.dropout < 1.0))
    fail("transformer.dropout must be in [0, 1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    fail("validation_fraction must be in [0, 1)");
  if (local_model == LocalModelKind::attn && !ablations.empty())
    fail("ablations only apply to the transformer local model");
  if (features.count() == 0) fail("at least one selector feature must be enabled");
  TransformerAblation::parse(ablations);
}

std::size_t TrainConfig::window_for(std::size_t mention_count) const {
  return window == 0 ? std::max<std::size_t>(1, mention_count) : window;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  return x;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" +
                                v + "'");
  return static_cast<std::size_t>(std::stoull(v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void set_key(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "gamma") c.gamma = to_double(key, v);
  else if (key == "gamma1") c.gamma1 = to_double(key, v);
  else if (key == "beta") c.beta = to_double(key, v);
  else if (key == "lr") c.lr = to_double(key, v);
  else if (key == "lr_after") c.lr_after = to_double(key, v);
  else if (key == "lr_drop_threshold") c.lr_drop_threshold = to_double(key, v);
  else if (key == "epochs") c.epochs = to_size(key, v);
  else if (key == "window") c.window = (v == "L" || v == "l") ? 0 : to_size(key, v);
  else if (key == "top_k") c.top_k = to_size(key, v);
  else if (key == "selector_top_k") c.selector_top_k = to_size(key, v);
  else if (key == "reward") c.reward = parse_reward_kind(v);
  else if (key == "lambda") {
    const auto parts = split_list(v);
    if (parts.size() != 4)
      throw std::invalid_argument("config: lambda needs four values TT,TF,FF,FT");
    c.lambda = {to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2]),
                to_double(key, parts[3])};
  } else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_size(key, v));
  else if (key == "local_model") c.local_model = parse_local_model(v);
  else if (key == "top_r") c.top_r = to_size(key, v);
  else if (key == "transformer.layers") c.transformer.layers = to_size(key, v);
  else if (key == "transformer.heads") c.transformer.heads = to_size(key, v);
  else if (key == "transformer.head_dim") c.transformer.head_dim = to_size(key, v);
  else if (key == "transformer.ffn_width") c.transformer.ffn_width = to_size(key, v);
  else if (key == "transformer.head_hidden") c.transformer.head_hidden = to_size(key, v);
  else if (key == "transformer.max_positions") c.transformer.max_positions = to_size(key, v);
  else if (key == "transformer.max_segments") c.transformer.max_segments = to_size(key, v);
  else if (key == "transformer.dropout") c.transformer.dropout = to_double(key, v);
  else if (key == "ablations") c.ablations = split_list(v);
  else if (key == "features") c.features = FeatureMask::parse(v);
  else if (key == "fusion_hidden") c.fusion_hidden = to_size(key, v);
  else if (key == "z_normalize") c.z_normalize = to_bool(key, v);
  else if (key == "dropout") c.dropout = to_double(key, v);
  else if (key == "validation_fraction") c.validation_fraction = to_double(key, v);
  else if (key == "threads") c.threads = to_size(key, v);
  else if (key == "check_teacher_forcing") c.check_teacher_forcing = to_bool(key, v);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

}  // namespace

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    try {
      set_key(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig c = parse_config(ss.str());
  c.validate();
  return c;
}

std::string to_config_string(const TrainConfig& c) {
  std::ostringstream o;
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
  };
  o << "gamma = " << fmt(c.gamma) << "\n"
    << "gamma1 = " << fmt(c.gamma1) << "\n"
    << "beta = " << fmt(c.beta) << "\n"
    << "lr = " << fmt(c.lr) << "\n"
    << "lr_after = " << fmt(c.lr_after) << "\n"
    << "lr_drop_threshold = " << fmt(c.lr_drop_threshold) << "\n"
    << "epochs = " << c.epochs << "\n"
    << "window = " << (c.window == 0 ? std::string("L") : std::to_string(c.window)) << "\n"
    << "top_k = " << c.top_k << "\n"
    << "selector_top_k = " << c.selector_top_k << "\n"
    << "reward = " << to_string(c.reward) << "\n"
    << "lambda = " << fmt(c.lambda.tt) << "," << fmt(c.lambda.tf) << "," << fmt(c.lambda.ff)
    << "," << fmt(c.lambda.ft) << "\n"
    << "seed = " << c.seed << "\n"
    << "local_model = " << to_string(c.local_model) << "\n"
    << "top_r = " << c.top_r << "\n"
    << "transformer.layers = " << c.transformer.layers << "\n"
    << "transformer.heads = " << c.transformer.heads << "\n"
    << "transformer.head_dim = " << c.transformer.head_dim << "\n"
    << "transformer.ffn_width = " << c.transformer.ffn_width << "\n"
    << "transformer.head_hidden = " << c.transformer.head_hidden << "\n"
    << "transformer.max_positions = " << c.transformer.max_positions << "\n"
    << "transformer.max_segments = " << c.transformer.max_segments << "\n"
    << "transformer.dropout = " << fmt(c.transformer.dropout) << "\n"
    << "ablations = " << join(c.ablations) << "\n"
    << "features = " << c.features.to_string() << "\n"
    << "fusion_hidden = " << c.fusion_hidden << "\n"
    << "z_normalize = " << (c.z_normalize ? "true" : "false") << "\n"
    << "dropout = " << fmt(c.dropout) << "\n"
    << "validation_fraction = " << fmt(c.validation_fraction) << "\n"
    << "threads = " << c.threads << "\n"
    << "check_teacher_forcing = " << (c.check_teacher_forcing ? "true" : "false") << "\n";
  return o.str();
}

std::uint64_t config_hash(const TrainConfig& c) {
  std::string s = to_config_string(c);
  // threads never changes results, so it is left out of the identity.
  const auto pos = s.find("threads = ");
  s.erase(pos, s.find('\n', pos) - pos + 1);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Model

Model Model::make(const TrainConfig& cfg, std::size_t dim) {
  cfg.validate();
  if (dim == 0) throw std::invalid_argument("model: embedding dimension must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  Model m;
  m.dim = dim;
  m.local_model = cfg.local_model;
  m.attn = LocalAttnParams::make(dim, cfg.top_r);
  if (cfg.local_model == LocalModelKind::transformer) {
    m.transformer = TransformerLocalParams::make(dim, cfg.transformer, rng);
    m.transformer->ablation = TransformerAblation::parse(cfg.ablations);
  }
  m.policy = PolicyParams::make(dim, cfg.top_k);
  m.selector = SelectorParams::make(dim, cfg.selector_top_k, cfg.features, cfg.fusion_hidden,
                                    cfg.z_normalize, rng);
  m.attn.register_params(m.params, "attn");
  if (m.transformer) m.transformer->register_params(m.params, "transformer");
  m.policy.register_params(m.params, "policy");
  m.selector.register_params(m.params, "selector");
  return m;
}

// ---------------------------------------------------------------------------
// Rollouts

std::vector<MentionView> view_mentions(const Document& doc, const EmbeddingStore& store,
                                       const Model& model, const ForwardContext& ctx) {
  std::vector<MentionView> out;
  out.reserve(doc.mentions.size());
  for (const Mention& m : doc.mentions) {
    MentionView v;
    v.candidates = candidate_matrix(m, store);
    v.repr = context_feature(m, store, model.attn);
    if (model.local_model == LocalModelKind::attn) {
      v.psi_local = local_scores_attn(v.candidates, v.repr, model.attn);
      v.psi_policy = softmax(v.psi_local);
    } else {
      const ForwardContext tctx{ctx.mode, model.transformer->config.dropout, ctx.rng};
      v.psi_local = local_scores_transformer(m, store, *model.transformer, tctx);
      v.psi_policy = v.psi_local;
    }
    out.push_back(std::move(v));
  }
  return out;
}

LinkDecision link_mention(const Mention& mention, const MentionView& view,
                          std::span<const std::string> linked, const EmbeddingStore& store,
                          const Model& model, const ForwardContext& ctx) {
  LinkDecision d;
  d.probs = candidate_distribution(mention, linked, store, model.selector, view.psi_local, ctx)
                .probs;
  const auto p = d.probs.values();
  d.predicted = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  d.probability = p[d.predicted];
  d.correct = mention.candidates[d.predicted].entity_id == mention.gold;
  return d;
}

double Episode::accuracy() const {
  if (flags.empty()) return 0.0;
  return static_cast<double>(std::count(flags.begin(), flags.end(), true)) /
         static_cast<double>(flags.size());
}

namespace {

Tensor entity_row(const EmbeddingStore& store, const std::string& id) {
  const auto e = store.entity(id);
  return Tensor::constant({1, e.size()}, std::vector<double>(e.begin(), e.end()));
}

void check_permutation(const std::vector<std::size_t>& order, std::size_t L,
                       const std::string& doc_id) {
  std::vector<bool> seen(L, false);
  bool ok = order.size() == L;
  for (std::size_t i : order) {
    if (!ok || i >= L || seen[i]) {
      ok = false;
      break;
    }
    seen[i] = true;
  }
  if (!ok)
    throw std::invalid_argument("forced order for document '" + doc_id +
                                "' is not a permutation of its " + std::to_string(L) +
                                " mentions");
}

}  // namespace

Episode rollout(const Document& doc, const EmbeddingStore& store, const Model& model,
                const TrainConfig& cfg, const RolloutOptions& opts) {
  const std::size_t L = doc.mentions.size();
  if (L == 0) throw std::invalid_argument("rollout: document '" + doc.id + "' has no mentions");
  const bool forced = opts.forced_order.has_value();
  if (forced) check_permutation(*opts.forced_order, L, doc.id);
  if (!forced && opts.select == SelectMode::sample && opts.rng == nullptr)
    throw std::invalid_argument("rollout: sampling needs an rng");

  const ForwardContext ctx{opts.mode, cfg.dropout, opts.rng};
  const auto views = view_mentions(doc, store, model, ctx);

  std::size_t width = opts.window != 0 ? opts.window : cfg.window_for(L);
  if (forced && !opts.score_forced && opts.window == 0) width = L;

  Episode ep;
  ep.document_id = doc.id;
  ep.sampled = !forced && opts.select == SelectMode::sample;
  LinkingState state = LinkingState::initial(model.policy);
  ActionWindow window = ActionWindow::over(L, width);

  for (std::size_t t = 0; t < L; ++t) {
    const auto acts = window.actions();
    std::size_t chosen = 0;
    Tensor log_prob;
    if (acts.size() == 1) {
      chosen = acts[0];
      log_prob = Tensor::scalar(0.0);
    } else if (forced && !opts.score_forced) {
      chosen = (*opts.forced_order)[t];
      log_prob = Tensor::scalar(0.0);
    } else {
      std::vector<Tensor> rows;
      rows.reserve(acts.size());
      for (std::size_t a : acts)
        rows.push_back(
            action_representation(views[a].repr, views[a].psi_policy, views[a].candidates));
      const Tensor actions = stack_rows(rows);
      if (forced) {
        chosen = (*opts.forced_order)[t];
        const auto it = std::find(acts.begin(), acts.end(), chosen);
        if (it == acts.end())
          throw std::invalid_argument("forced order leaves the action window at step " +
                                      std::to_string(t + 1));
        ActionChoice c = select_action(state, actions, model.policy, SelectMode::greedy, nullptr);
        log_prob = log(element(c.distribution, 0, static_cast<std::size_t>(it - acts.begin())));
      } else {
        ActionChoice c = select_action(state, actions, model.policy, opts.select, opts.rng);
        chosen = acts[c.index];
        log_prob = c.log_prob;
      }
    }
    if (forced && chosen != (*opts.forced_order)[t])
      throw std::invalid_argument("forced order leaves the action window at step " +
                                  std::to_string(t + 1));

    const Mention& mention = doc.mentions[chosen];
    const LinkDecision dec = link_mention(mention, views[chosen], ep.linked, store, model, ctx);

    std::string appended = mention.candidates[dec.predicted].entity_id;
    if (opts.mode == Mode::train) {
      if (store.has_entity(mention.gold))
        appended = mention.gold;
      else
        logging::warn("teacher forcing: gold entity '" + mention.gold + "' of mention '" +
                  mention.id + "' has no embedding; linking the prediction");
    }
    const Tensor entity_vec = entity_row(store, appended);
    advance(state, window, chosen, views[chosen].repr, entity_vec);
    ep.linked.push_back(appended);

    if (opts.mode == Mode::train && cfg.check_teacher_forcing &&
        store.has_entity(mention.gold)) {
      const auto pair = state.history.back().values();
      const auto gold = store.entity(mention.gold);
      const std::size_t d = gold.size();
      if (ep.linked.back() != mention.gold ||
          !std::equal(gold.begin(), gold.end(), pair.begin() + static_cast<std::ptrdiff_t>(d)))
        throw TeacherForcingViolation("training history holds a non-gold entity for mention '" +
                                      mention.id + "'");
    }

    ep.order.push_back(chosen);
    ep.window_sizes.push_back(acts.size());
    ep.log_probs.push_back(log_prob);
    ep.predicted.push_back(dec.predicted);
    ep.predicted_entity.push_back(mention.candidates[dec.predicted].entity_id);
    ep.predicted_prob.push_back(dec.probability);
    ep.flags.push_back(dec.correct);
    ep.probs.push_back(dec.probs);
  }

  const EpisodeOutcome outcome{ep.flags, cfg.gamma};
  ep.rewards = cfg.reward == RewardKind::r2_prob
                   ? reward_trace(cfg.reward, outcome, cfg.lambda,
                                  std::span<const double>(ep.predicted_prob))
                   : reward_trace(cfg.reward, outcome, cfg.lambda);
  return ep;
}

Tensor reinforce_objective(std::span<const Episode> episodes) {
  if (episodes.empty()) throw std::invalid_argument("reinforce: no episodes");
  Tensor total = Tensor::scalar(0.0);
  for (const Episode& ep : episodes) {
    if (!ep.sampled)
      throw std::invalid_argument(
          "reinforce: episode '" + ep.document_id +
          "' was not sampled from the policy; greedy or forced episodes give no policy "
          "gradient");
    if (ep.rewards.size() != ep.log_probs.size())
      throw std::invalid_argument("reinforce: reward and log-probability counts differ");
    for (std::size_t t = 0; t < ep.log_probs.size(); ++t)
      if (ep.rewards[t] != 0.0) total = add(total, scale(ep.log_probs[t], ep.rewards[t]));
  }
  return scale(total, 1.0 / static_cast<double>(episodes.size()));
}

Tensor margin_terms(const Tensor& probs, std::size_t gold, double beta) {
  if (gold >= probs.cols()) throw std::invalid_argument("margin: gold index out of range");
  const Tensor ones = Tensor::constant({1, probs.cols()}, std::vector<double>(probs.cols(), 1.0));
  const Tensor gold_p = matmul(element(probs, 0, gold), ones);
  return sum(relu(add_scalar(sub(probs, gold_p), beta)));
}

Tensor margin_loss(const Document& doc, const Episode& ep, double beta) {
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < ep.order.size(); ++t) {
    const Mention& m = doc.mentions[ep.order[t]];
    const auto gi = m.gold_index();
    if (!gi) {
      logging::debug("margin loss: skipping mention '" + m.id + "' (gold not among candidates)");
      continue;
    }
    total = add(total, margin_terms(ep.probs[t], *gi, beta));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Training loop

double evaluate_accuracy(std::span<const Document> docs, const EmbeddingStore& store,
                         const Model& model, const TrainConfig& cfg) {
  std::vector<std::size_t> correct(docs.size(), 0), total(docs.size(), 0);
  parallel_for(docs.size(), cfg.threads, [&](std::size_t i) {
    const Episode ep = rollout(docs[i], store, model, cfg, RolloutOptions{});
    correct[i] = static_cast<std::size_t>(std::count(ep.flags.begin(), ep.flags.end(), true));
    total[i] = ep.flags.size();
  });
  const std::size_t c = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
  const std::size_t n = std::accumulate(total.begin(), total.end(), std::size_t{0});
  return n == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(n);
}

TrainResult train(std::span<const Document> train_docs,
                  std::span<const Document> validation_docs, const EmbeddingStore& store,
                  const TrainConfig& cfg, Model& model,
                  const std::optional<std::filesystem::path>& diagnostic_dir,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_docs.empty()) throw std::invalid_argument("train: no training documents");
  std::seed_seq seq{cfg.seed, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  Adam adam(model.params);
  double lr = cfg.lr;
  bool dropped = false;
  const auto val = validation_docs.empty() ? train_docs : validation_docs;

  TrainResult result;
  auto best = model.params.values();
  std::vector<std::size_t> idx(train_docs.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    EpochLog log_row;
    log_row.epoch = epoch;
    log_row.lr = lr;
    std::size_t flags_true = 0, flags_total = 0;
    for (std::size_t i : idx) {
      const Document& doc = train_docs[i];
      model.params.zero_grad();
      RolloutOptions opts;
      opts.mode = Mode::train;
      opts.select = SelectMode::sample;
      opts.rng = &rng;
      const Episode ep = rollout(doc, store, model, cfg, opts);
      const Tensor les = margin_loss(doc, ep, cfg.beta);
      const Tensor jms = reinforce_objective(std::span<const Episode>(&ep, 1));
      const Tensor loss = sub(les, scale(jms, cfg.gamma1));
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        std::string where;
        if (diagnostic_dir) {
          std::filesystem::create_directories(*diagnostic_dir);
          const auto p = *diagnostic_dir / "diverged.ckpt";
          save_checkpoint(p, model.params);
          where = "; parameters written to " + p.string();
        }
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                               " on document '" + doc.id + "'" + where);
      }
      backward(loss);
      adam.step(lr);
      log_row.margin_loss += les.item();
      log_row.policy_objective += std::abs(jms.item());
      flags_true += static_cast<std::size_t>(std::count(ep.flags.begin(), ep.flags.end(), true));
      flags_total += ep.flags.size();
    }
    const double n = static_cast<double>(train_docs.size());
    log_row.margin_loss /= n;
    log_row.policy_objective /= n;
    log_row.train_accuracy =
        static_cast<double>(flags_true) / static_cast<double>(std::max<std::size_t>(1, flags_total));
    log_row.validation_accuracy = evaluate_accuracy(val, store, model, cfg);
    if (log_row.validation_accuracy > result.best_validation) {
      result.best_validation = log_row.validation_accuracy;
      result.best_epoch = epoch;
      best = model.params.values();
    }
    if (!dropped && log_row.validation_accuracy > cfg.lr_drop_threshold) {
      lr = cfg.lr_after;
      dropped = true;
    }
    result.log.push_back(log_row);
    if (on_epoch) on_epoch(log_row);
  }
  model.params.assign(best);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << "dymen-checkpoint 1\n" << params.items().size() << "\n";
  for (const auto& [name, t] : params.items()) {
    out << name << " " << t.rows() << " " << t.cols() << "\n";
    const auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt(v[i]);
    out << "\n";
  }
  if (!out) throw std::runtime_error("error writing checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, ParamSet& params) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  in >> magic >> version >> count;
  if (magic != "dymen-checkpoint" || version != 1)
    throw std::runtime_error(path.string() + ": not a version 1 checkpoint");
  std::map<std::string, std::pair<Shape, std::vector<double>>> loaded;
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    Shape s;
    if (!(in >> name >> s.rows >> s.cols))
      throw std::runtime_error(path.string() + ": truncated header for tensor " +
                               std::to_string(k));
    std::vector<double> v(s.size());
    for (double& x : v) {
      std::string tok;
      if (!(in >> tok)) throw std::runtime_error(path.string() + ": truncated tensor " + name);
      x = std::strtod(tok.c_str(), nullptr);
    }
    loaded.emplace(name, std::make_pair(s, std::move(v)));
  }
  if (loaded.size() != params.items().size())
    throw std::runtime_error(path.string() + ": holds " + std::to_string(loaded.size()) +
                             " tensors, model has " + std::to_string(params.items().size()));
  std::vector<std::vector<double>> values;
  for (const auto& [name, t] : params.items()) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw std::runtime_error(path.string() + ": missing tensor " + name);
    if (!(it->second.first == t.shape()))
      throw std::runtime_error(path.string() + ": tensor " + name + " has shape " +
                               to_string(it->second.first) + ", model expects " +
                               to_string(t.shape()));
    values.push_back(it->second.second);
  }
  params.assign(values);
}

}  // namespace dymen
