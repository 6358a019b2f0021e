#include "dymen/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dymen {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<std::size_t> Mention::gold_index() const {
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].entity_id == gold) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------- store

void EmbeddingStore::Table::set(const std::string& id, std::vector<double> v) {
  auto [it, inserted] = index.emplace(id, rows.size());
  if (inserted) {
    ids.push_back(id);
    rows.push_back(std::move(v));
  } else {
    rows[it->second] = std::move(v);
  }
}

const std::vector<double>* EmbeddingStore::Table::find(const std::string& id) const {
  auto it = index.find(id);
  return it == index.end() ? nullptr : &rows[it->second];
}

void EmbeddingStore::check_dim(const std::vector<double>& v,
                               const std::string& what) const {
  if (v.size() != dim_) {
    throw std::invalid_argument(what + " has dimension " + std::to_string(v.size()) +
                                ", store dimension is " + std::to_string(dim_));
  }
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(what + " has a non-finite entry");
}

void EmbeddingStore::set_word(const std::string& id, std::vector<double> v) {
  check_dim(v, "word '" + id + "'");
  words_.set(id, std::move(v));
}

void EmbeddingStore::set_entity(const std::string& id, std::vector<double> v) {
  check_dim(v, "entity '" + id + "'");
  entities_.set(id, std::move(v));
}

void EmbeddingStore::set_entity_surface(const std::string& id,
                                        std::vector<std::string> words) {
  if (surface_.count(id) == 0) surface_order_.push_back(id);
  surface_[id] = std::move(words);
}

void EmbeddingStore::add_edge(const std::string& src, const std::string& dst) {
  auto [it, inserted] = edges_.try_emplace(src);
  if (inserted) edge_order_.push_back(src);
  auto& out = it->second;
  if (std::find(out.begin(), out.end(), dst) == out.end()) out.push_back(dst);
}

void EmbeddingStore::set_mention_type(const std::string& mention_id,
                                      std::vector<double> v) {
  mention_types_.set(mention_id, std::move(v));
}

void EmbeddingStore::set_entity_type(const std::string& entity_id,
                                     std::vector<double> v) {
  entity_types_.set(entity_id, std::move(v));
}

std::span<const double> EmbeddingStore::word(const std::string& id) const {
  if (const auto* v = words_.find(id)) return *v;
  throw std::out_of_range("unknown word id '" + id + "'");
}

std::span<const double> EmbeddingStore::entity(const std::string& id) const {
  if (const auto* v = entities_.find(id)) return *v;
  throw std::out_of_range("unknown entity id '" + id + "'");
}

const std::vector<std::string>* EmbeddingStore::entity_surface(
    const std::string& id) const {
  auto it = surface_.find(id);
  return it == surface_.end() ? nullptr : &it->second;
}

std::span<const std::string> EmbeddingStore::neighbors(const std::string& id) const {
  auto it = edges_.find(id);
  if (it == edges_.end()) return {};
  return it->second;
}

std::optional<std::span<const double>> EmbeddingStore::mention_type(
    const std::string& id) const {
  if (const auto* v = mention_types_.find(id)) return std::span<const double>(*v);
  return std::nullopt;
}

std::optional<std::span<const double>> EmbeddingStore::entity_type(
    const std::string& id) const {
  if (const auto* v = entity_types_.find(id)) return std::span<const double>(*v);
  return std::nullopt;
}

bool EmbeddingStore::operator==(const EmbeddingStore& o) const {
  auto same_table = [](const Table& a, const Table& b) {
    return a.ids == b.ids && a.rows == b.rows;
  };
  return dim_ == o.dim_ && same_table(words_, o.words_) &&
         same_table(entities_, o.entities_) &&
         same_table(mention_types_, o.mention_types_) &&
         same_table(entity_types_, o.entity_types_) && surface_ == o.surface_ &&
         surface_order_ == o.surface_order_ && edges_ == o.edges_ &&
         edge_order_ == o.edge_order_;
}

// ---------------------------------------------------------------- documents

void derive_context(Document& doc, std::size_t context_size) {
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    Mention& m = doc.mentions[i];
    m.position = i;
    if (m.span_begin >= m.span_end || m.span_end > doc.words.size()) continue;
    m.surface.assign(doc.words.begin() + static_cast<std::ptrdiff_t>(m.span_begin),
                     doc.words.begin() + static_cast<std::ptrdiff_t>(m.span_end));
    const std::size_t lb = m.span_begin > context_size ? m.span_begin - context_size : 0;
    const std::size_t re = std::min(doc.words.size(), m.span_end + context_size);
    m.context_window.assign(doc.words.begin() + static_cast<std::ptrdiff_t>(lb),
                            doc.words.begin() + static_cast<std::ptrdiff_t>(m.span_begin));
    m.left_context = m.context_window.size();
    m.context_window.insert(m.context_window.end(),
                            doc.words.begin() + static_cast<std::ptrdiff_t>(m.span_end),
                            doc.words.begin() + static_cast<std::ptrdiff_t>(re));
  }
}

void validate_document(const Document& doc, const EmbeddingStore& store) {
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("document '" + doc.id + "': " + msg);
  };
  if (doc.mentions.empty()) fail("mention list is empty");
  for (const std::string& w : doc.words)
    if (!store.has_word(w)) fail("unknown word id '" + w + "'");
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const Mention& m = doc.mentions[i];
    const std::string where = "mention '" + m.id + "': ";
    if (m.span_begin >= m.span_end || m.span_end > doc.words.size())
      fail(where + "span out of range");
    if (i > 0 && m.span_begin <= doc.mentions[i - 1].span_begin)
      fail(where + "mentions are not in strictly increasing text order");
    if (m.candidates.empty()) fail(where + "candidate list is empty");
    for (const CandidateEntity& c : m.candidates) {
      if (!(c.prior >= 0.0 && c.prior <= 1.0))
        fail(where + "prior of '" + c.entity_id + "' outside [0, 1]");
      if (!store.has_entity(c.entity_id))
        fail(where + "unknown entity id '" + c.entity_id + "'");
    }
    if (!store.has_entity(m.gold)) fail(where + "unknown gold entity id '" + m.gold + "'");
  }
}

namespace {

Document document_from_json(const json& j) {
  Document d;
  d.id = j.at("id").get<std::string>();
  d.words = j.at("words").get<std::vector<std::string>>();
  for (const json& jm : j.at("mentions")) {
    Mention m;
    m.id = jm.at("id").get<std::string>();
    const auto span = jm.at("span").get<std::vector<std::size_t>>();
    if (span.size() != 2) throw std::runtime_error("span must be [begin, end]");
    m.span_begin = span[0];
    m.span_end = span[1];
    for (const json& jc : jm.at("candidates"))
      m.candidates.push_back({jc.at("entity").get<std::string>(),
                              jc.at("prior").get<double>()});
    m.gold = jm.at("gold").get<std::string>();
    d.mentions.push_back(std::move(m));
  }
  return d;
}

json document_to_json(const Document& d) {
  json jm = json::array();
  for (const Mention& m : d.mentions) {
    json jc = json::array();
    for (const CandidateEntity& c : m.candidates)
      jc.push_back({{"entity", c.entity_id}, {"prior", c.prior}});
    jm.push_back({{"id", m.id},
                  {"span", {m.span_begin, m.span_end}},
                  {"candidates", jc},
                  {"gold", m.gold}});
  }
  return {{"id", d.id}, {"words", d.words}, {"mentions", jm}};
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

void write_vec_line(std::ostream& out, const std::string& id,
                    std::span<const double> v) {
  out << id;
  for (double x : v) out << ' ' << x;
  out << '\n';
}

std::vector<double> parse_floats(std::istringstream& in) {
  std::vector<double> v;
  std::string tok;
  while (in >> tok) v.push_back(std::stod(tok));
  return v;
}

}  // namespace

std::vector<Document> load_corpus(const fs::path& path, const EmbeddingStore& store,
                                  std::size_t context_size) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path.string());
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      Document d = document_from_json(json::parse(line));
      validate_document(d, store);
      derive_context(d, context_size);
      docs.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw std::runtime_error(where + e.what());
    }
  }
  return docs;
}

void save_documents(const fs::path& path, const std::vector<Document>& docs) {
  auto out = open_out(path);
  for (const Document& d : docs) out << document_to_json(d).dump() << '\n';
}

EmbeddingStore load_store(const fs::path& dir, std::size_t dim) {
  EmbeddingStore store(dim);
  auto read_lines = [](const fs::path& p, bool required, auto&& fn) {
    std::ifstream in(p);
    if (!in) {
      if (required) throw std::runtime_error("cannot open " + p.string());
      return;
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        fn(line);
      } catch (const std::exception& e) {
        throw std::runtime_error(p.string() + ":" + std::to_string(lineno) + ": " +
                                 e.what());
      }
    }
  };
  auto vec_reader = [&](auto setter) {
    return [setter](const std::string& line) {
      std::istringstream in(line);
      std::string id;
      in >> id;
      setter(id, parse_floats(in));
    };
  };
  read_lines(dir / "words.vec", true, vec_reader([&](const std::string& id, auto v) {
               store.set_word(id, std::move(v));
             }));
  read_lines(dir / "entities.vec", true, vec_reader([&](const std::string& id, auto v) {
               store.set_entity(id, std::move(v));
             }));
  read_lines(dir / "entity_surface.tsv", false, [&](const std::string& line) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("expected <entity>\\t<words>");
    std::istringstream in(line.substr(tab + 1));
    std::vector<std::string> words;
    std::string w;
    while (in >> w) {
      if (!store.has_word(w)) throw std::runtime_error("unknown word id '" + w + "'");
      words.push_back(w);
    }
    store.set_entity_surface(line.substr(0, tab), std::move(words));
  });
  read_lines(dir / "kg.edges", false, [&](const std::string& line) {
    std::istringstream in(line);
    std::string src, dst;
    if (!(in >> src >> dst)) throw std::runtime_error("expected <src> <dst>");
    if (!store.has_entity(src)) throw std::runtime_error("unknown entity id '" + src + "'");
    if (!store.has_entity(dst)) throw std::runtime_error("unknown entity id '" + dst + "'");
    store.add_edge(src, dst);
  });
  read_lines(dir / "types.vec", false, [&](const std::string& line) {
    std::istringstream in(line);
    std::string kind, id;
    in >> kind >> id;
    auto v = parse_floats(in);
    if (kind == "mention")
      store.set_mention_type(id, std::move(v));
    else if (kind == "entity")
      store.set_entity_type(id, std::move(v));
    else
      throw std::runtime_error("type kind must be 'mention' or 'entity'");
  });
  return store;
}

void save_store(const fs::path& dir, const EmbeddingStore& store) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "words.vec");
    for (const auto& id : store.word_ids()) write_vec_line(out, id, store.word(id));
  }
  {
    auto out = open_out(dir / "entities.vec");
    for (const auto& id : store.entity_ids()) write_vec_line(out, id, store.entity(id));
  }
  {
    auto out = open_out(dir / "entity_surface.tsv");
    for (const auto& id : store.surface_ids()) {
      out << id << '\t';
      const auto& words = *store.entity_surface(id);
      for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "kg.edges");
    for (const auto& src : store.edge_sources())
      for (const auto& dst : store.neighbors(src)) out << src << ' ' << dst << '\n';
  }
  if (!store.mention_type_ids().empty() || !store.entity_type_ids().empty()) {
    auto out = open_out(dir / "types.vec");
    for (const auto& id : store.mention_type_ids())
      write_vec_line(out, "mention " + id, *store.mention_type(id));
    for (const auto& id : store.entity_type_ids())
      write_vec_line(out, "entity " + id, *store.entity_type(id));
  }
}

Corpus load_corpus_dir(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
  json manifest = json::parse(mf);
  if (manifest.value("format", "") != "dymen-corpus")
    throw std::runtime_error((dir / "manifest.json").string() + ": not a dymen corpus");
  Corpus c;
  c.context_size = manifest.at("context_size").get<std::size_t>();
  c.store = load_store(dir, manifest.at("dim").get<std::size_t>());
  c.documents = load_corpus(dir / "docs.jsonl", c.store, c.context_size);
  return c;
}

void save_corpus_dir(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  save_store(dir, corpus.store);
  save_documents(dir / "docs.jsonl", corpus.documents);
  auto out = open_out(dir / "manifest.json");
  out << json{{"format", "dymen-corpus"},
              {"version", 1},
              {"context_size", corpus.context_size},
              {"dim", corpus.store.dim()}}
             .dump(2)
      << '\n';
}

double gold_recall(std::span<const Document> docs) {
  std::size_t total = 0, hit = 0;
  for (const Document& d : docs)
    for (const Mention& m : d.mentions) {
      ++total;
      if (m.gold_index()) ++hit;
    }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

// ---------------------------------------------------------------- synthetic

namespace {

std::vector<double> unit(std::size_t d, std::initializer_list<std::size_t> coords) {
  std::vector<double> v(d, 0.0);
  const double w = 1.0 / std::sqrt(static_cast<double>(coords.size()));
  for (std::size_t c : coords) v[c] = w;
  return v;
}

std::vector<double> random_unit_in(std::size_t d, std::span<const std::size_t> coords,
                                   std::mt19937_64& rng, bool positive) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d, 0.0);
  double norm = 0.0;
  for (std::size_t c : coords) {
    double x = n(rng);
    if (positive) x = std::abs(x) + 0.1;
    v[c] = x;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (std::size_t c : coords) v[c] /= norm;
  return v;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_docs == 0 || spec.mentions_per_doc == 0 ||
      spec.candidates_per_mention == 0 || spec.embedding_dim == 0 ||
      spec.context_size == 0)
    throw std::invalid_argument("synthetic spec: all counts must be >= 1");
  if (!(spec.anchor_fraction >= 0.0 && spec.anchor_fraction <= 1.0))
    throw std::invalid_argument("synthetic spec: anchor_fraction must be in [0, 1]");
  if (spec.noise_scale < 0.0)
    throw std::invalid_argument("synthetic spec: noise_scale must be >= 0");

  const std::size_t L = spec.mentions_per_doc;
  const std::size_t n = spec.candidates_per_mention;
  const std::size_t d = spec.embedding_dim;
  const auto anchored_count = static_cast<std::size_t>(
      std::llround(spec.anchor_fraction * static_cast<double>(L)));
  if (anchored_count > 0 && L < 2)
    throw std::invalid_argument(
        "synthetic spec: anchored mentions need mentions_per_doc >= 2");
  if (anchored_count > L / 2)
    throw std::invalid_argument(
        "synthetic spec: anchor_fraction needs " + std::to_string(anchored_count) +
        " anchored mentions, but only " + std::to_string(L / 2) +
        " anchor pairs fit in a document");
  if (anchored_count > 0 && n < 2)
    throw std::invalid_argument(
        "synthetic spec: anchored mentions need candidates_per_mention >= 2");
  const std::size_t structural = L + anchored_count;
  if (d < structural + 4)
    throw std::invalid_argument("synthetic spec: embedding_dim " + std::to_string(d) +
                                " too small; need at least " +
                                std::to_string(structural + 4));
  const std::size_t free_dims = d - structural;
  const std::size_t ctx_dims = std::max<std::size_t>(2, free_dims / 4);
  const std::size_t decoy_dims = free_dims - ctx_dims;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  SyntheticCorpus out;
  Corpus& corpus = out.corpus;
  corpus.store = EmbeddingStore(d);
  corpus.context_size = spec.context_size;
  EmbeddingStore& store = corpus.store;

  for (std::size_t di = 0; di < spec.num_docs; ++di) {
    const std::string dp = "d" + std::to_string(di);
    std::vector<std::size_t> coords(d);
    std::iota(coords.begin(), coords.end(), 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    std::size_t next_coord = 0;
    auto take = [&] { return coords[next_coord++]; };

    std::vector<std::size_t> pairs(L / 2);
    std::iota(pairs.begin(), pairs.end(), 0);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    std::vector<bool> anchored_pair(L / 2, false);
    for (std::size_t i = 0; i < anchored_count; ++i) anchored_pair[pairs[i]] = true;

    // Coordinate budget: anchored pairs use three coordinates (anchor gold,
    // shared u, decoy-only v), every other mention one; the rest split into a
    // context-only block and a decoy block.
    struct Plan {
      std::vector<double> gold_vec;
      std::vector<std::vector<double>> others;  // non-gold candidates
      std::vector<double> gold_prior_and_rest;  // {gold prior, tied decoy prior, rest}
      bool ambiguous = false;
    };
    std::vector<Plan> plans(L);
    std::map<std::size_t, std::size_t> anchor_map;
    std::vector<std::size_t> anchor_gold_coord(L, 0);
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t pair = i / 2;
      const bool in_anchored = pair < anchored_pair.size() && anchored_pair[pair];
      if (in_anchored && i % 2 == 0) continue;  // filled with its anchor
      anchor_gold_coord[i] = take();
      plans[i].gold_vec = unit(d, {anchor_gold_coord[i]});
    }
    for (std::size_t p = 0; p < anchored_pair.size(); ++p) {
      if (!anchored_pair[p]) continue;
      const std::size_t a = 2 * p, b = 2 * p + 1;
      const std::size_t u = take(), v = take();
      plans[a].ambiguous = true;
      plans[a].gold_vec = unit(d, {anchor_gold_coord[b], u});
      plans[a].others.push_back(unit(d, {v, u}));
      anchor_map[a] = b;
    }
    std::vector<std::size_t> ctx_block(coords.begin() + static_cast<std::ptrdiff_t>(next_coord),
                                       coords.begin() + static_cast<std::ptrdiff_t>(next_coord + ctx_dims));
    next_coord += ctx_dims;
    std::vector<std::size_t> decoy_block(
        coords.begin() + static_cast<std::ptrdiff_t>(next_coord),
        coords.begin() + static_cast<std::ptrdiff_t>(next_coord + decoy_dims));

    Document doc;
    doc.id = dp;
    for (std::size_t i = 0; i < L; ++i) {
      Plan& plan = plans[i];
      while (plan.others.size() + 1 < n)
        plan.others.push_back(random_unit_in(d, decoy_block, rng, false));

      const std::string mp = dp + "_m" + std::to_string(i);
      auto context_vec = [&]() {
        if (plan.ambiguous) return random_unit_in(d, ctx_block, rng, true);
        std::vector<double> w = plan.gold_vec;
        for (double& x : w) x += spec.noise_scale * noise(rng);
        return w;
      };
      Mention m;
      m.id = mp;
      auto add_word = [&](const std::string& id) {
        store.set_word(id, context_vec());
        doc.words.push_back(id);
      };
      for (std::size_t k = 0; k < spec.context_size; ++k)
        add_word(mp + "_l" + std::to_string(k));
      m.span_begin = doc.words.size();
      add_word(mp + "_s");
      m.span_end = doc.words.size();
      for (std::size_t k = 0; k < spec.context_size; ++k)
        add_word(mp + "_r" + std::to_string(k));

      std::vector<CandidateEntity> cands;
      const std::string gold_id = mp + "_e0";
      store.set_entity(gold_id, plan.gold_vec);
      const double rest_prior =
          plan.ambiguous ? (n > 2 ? std::min(0.05, 0.1 / static_cast<double>(n - 2)) : 0.0)
                         : (n > 1 ? std::min(0.05, 0.1 / static_cast<double>(n - 1)) : 0.0);
      cands.push_back({gold_id, plan.ambiguous ? 0.45 : 0.9});
      for (std::size_t k = 0; k < plan.others.size(); ++k) {
        const std::string eid = mp + "_e" + std::to_string(k + 1);
        store.set_entity(eid, plan.others[k]);
        const bool tied = plan.ambiguous && k == 0;
        cands.push_back({eid, tied ? 0.45 : rest_prior});
      }
      for (const CandidateEntity& c : cands) {
        const std::string sw = c.entity_id + "_name";
        store.set_word(sw, std::vector<double>(store.entity(c.entity_id).begin(),
                                               store.entity(c.entity_id).end()));
        store.set_entity_surface(c.entity_id, {sw});
      }
      if (spec.flat_priors)
        for (CandidateEntity& c : cands) c.prior = 1.0 / static_cast<double>(cands.size());
      std::shuffle(cands.begin(), cands.end(), rng);
      m.candidates = std::move(cands);
      m.gold = gold_id;
      doc.mentions.push_back(std::move(m));
    }
    for (const auto& [a, b] : anchor_map)
      store.add_edge(doc.mentions[b].gold, doc.mentions[a].gold);
    derive_context(doc, spec.context_size);
    corpus.documents.push_back(std::move(doc));
    out.anchors.push_back(std::move(anchor_map));
  }
  return out;
}

std::vector<std::size_t> anchors_first_order(
    std::size_t mention_count, const std::map<std::size_t, std::size_t>& anchors) {
  std::vector<std::size_t> order;
  std::vector<bool> done(mention_count, false);
  for (std::size_t i = 0; i < mention_count; ++i) {
    if (done[i]) continue;
    auto it = anchors.find(i);
    if (it != anchors.end() && !done[it->second]) {
      order.push_back(it->second);
      done[it->second] = true;
    }
    order.push_back(i);
    done[i] = true;
  }
  return order;
}

}  // namespace dymen
