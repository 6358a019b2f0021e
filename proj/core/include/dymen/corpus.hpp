#pragma once

// Documents, mentions, candidate sets, embeddings and their on-disk format.
//
// A corpus directory holds:
//   manifest.json       {"format": "dymen-corpus", "version": 1, "context_size": c, "dim": d}
//   docs.jsonl          one document per line
//   words.vec           "<word id> <d floats>" per line
//   entities.vec        "<entity id> <d floats>" per line
//   entity_surface.tsv  "<entity id>\t<word id> <word id> ..." per line
//   kg.edges            "<src entity> <dst entity>" per line (directed)
//   types.vec           optional; "mention|entity <id> <floats>" per line
//
// A docs.jsonl record:
//   {"id": "...", "words": ["w", ...],
//    "mentions": [{"id": "...", "span": [begin, end],
//                  "candidates": [{"entity": "...", "prior": 0.9}, ...],
//                  "gold": "..."}, ...]}

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dymen {

struct CandidateEntity {
  std::string entity_id;
  double prior = 0.0;

  bool operator==(const CandidateEntity&) const = default;
};

struct Mention {
  std::string id;
  std::size_t span_begin = 0;  // token span [begin, end) into Document::words
  std::size_t span_end = 0;
  std::size_t position = 0;    // index within the document's mention list
  std::vector<CandidateEntity> candidates;
  std::string gold;

  // Derived at load time from the document words and the context size.
  std::vector<std::string> surface;
  std::vector<std::string> context_window;  // left words then right words
  std::size_t left_context = 0;             // how many of them precede the mention

  std::optional<std::size_t> gold_index() const;
  bool operator==(const Mention&) const = default;
};

struct Document {
  std::string id;
  std::vector<std::string> words;
  std::vector<Mention> mentions;

  bool operator==(const Document&) const = default;
};

/// Word and entity vectors, entity surface forms, KG adjacency and optional
/// type vectors. All vectors share one dimension.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }

  void set_word(const std::string& id, std::vector<double> v);
  void set_entity(const std::string& id, std::vector<double> v);
  void set_entity_surface(const std::string& id, std::vector<std::string> words);
  /// Directed edge src -> dst; duplicates are ignored.
  void add_edge(const std::string& src, const std::string& dst);
  void set_mention_type(const std::string& mention_id, std::vector<double> v);
  void set_entity_type(const std::string& entity_id, std::vector<double> v);

  bool has_word(const std::string& id) const { return words_.index.count(id) != 0; }
  bool has_entity(const std::string& id) const { return entities_.index.count(id) != 0; }
  std::span<const double> word(const std::string& id) const;
  std::span<const double> entity(const std::string& id) const;
  const std::vector<std::string>* entity_surface(const std::string& id) const;
  std::span<const std::string> neighbors(const std::string& id) const;
  std::optional<std::span<const double>> mention_type(const std::string& id) const;
  std::optional<std::span<const double>> entity_type(const std::string& id) const;

  // Insertion-ordered ids, used for serialization.
  const std::vector<std::string>& word_ids() const { return words_.ids; }
  const std::vector<std::string>& entity_ids() const { return entities_.ids; }
  const std::vector<std::string>& surface_ids() const { return surface_order_; }
  const std::vector<std::string>& edge_sources() const { return edge_order_; }
  const std::vector<std::string>& mention_type_ids() const { return mention_types_.ids; }
  const std::vector<std::string>& entity_type_ids() const { return entity_types_.ids; }

  bool operator==(const EmbeddingStore& o) const;

 private:
  struct Table {
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;

    void set(const std::string& id, std::vector<double> v);
    const std::vector<double>* find(const std::string& id) const;
  };

  void check_dim(const std::vector<double>& v, const std::string& what) const;

  std::size_t dim_;
  Table words_, entities_, mention_types_, entity_types_;
  std::unordered_map<std::string, std::vector<std::string>> surface_;
  std::vector<std::string> surface_order_;
  std::unordered_map<std::string, std::vector<std::string>> edges_;
  std::vector<std::string> edge_order_;
};

/// Fills surface/context_window/left_context/position from the words.
void derive_context(Document& doc, std::size_t context_size);

/// Checks document invariants and that every referenced id is in the store.
/// Throws std::runtime_error describing the first violation.
void validate_document(const Document& doc, const EmbeddingStore& store);

/// Parses a docs.jsonl file. Errors carry "<path>:<line>:" prefixes.
std::vector<Document> load_corpus(const std::filesystem::path& path,
                                  const EmbeddingStore& store,
                                  std::size_t context_size);
void save_documents(const std::filesystem::path& path,
                    const std::vector<Document>& docs);

struct Corpus {
  std::vector<Document> documents;
  EmbeddingStore store;
  std::size_t context_size = 10;
};

EmbeddingStore load_store(const std::filesystem::path& dir, std::size_t dim);
void save_store(const std::filesystem::path& dir, const EmbeddingStore& store);

/// Loads a whole corpus directory (see the header comment for the layout).
Corpus load_corpus_dir(const std::filesystem::path& dir);
void save_corpus_dir(const std::filesystem::path& dir, const Corpus& corpus);

/// Fraction of mentions whose candidate set contains the gold entity.
double gold_recall(std::span<const Document> docs);

struct SyntheticSpec {
  std::size_t num_docs = 20;
  std::size_t mentions_per_doc = 8;
  std::size_t candidates_per_mention = 4;
  std::size_t embedding_dim = 32;
  double anchor_fraction = 0.5;
  double noise_scale = 0.05;
  std::uint64_t seed = 1;
  std::size_t context_size = 3;
  /// Uniform priors over every candidate set, so that only the context
  /// separates the gold entity from the decoys.
  bool flat_priors = false;
};

/// Generator output: the corpus plus, per document, the anchored mention ->
/// anchor mention map (mention indices).
struct SyntheticCorpus {
  Corpus corpus;
  std::vector<std::map<std::size_t, std::size_t>> anchors;
};

/// Builds a corpus where a fraction of mentions are locally ambiguous and are
/// resolved only by coherence with a later, locally unambiguous anchor.
///
/// Layout per document: mentions come in consecutive pairs (2i, 2i+1). In an
/// anchored pair, mention 2i has two candidates (gold and a decoy) with equal
/// priors and context words that carry no information about either, and
/// mention 2i+1 is its anchor. Entity vectors use disjoint coordinate
/// supports so that, for any diagonal bilinear form, the gold and the decoy
/// tie on every feature until the anchor's gold entity has been linked.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Anchors first, then everything else; otherwise document order.
std::vector<std::size_t> anchors_first_order(
    std::size_t mention_count, const std::map<std::size_t, std::size_t>& anchors);

}  // namespace dymen
