#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "treeattn/tensor.hpp"

namespace treeattn {

// Dependency parse of one sentence.  Tokens are 0-based here; CoNLL's 1-based
// ids and its 0-for-root convention live only in the parser.
struct DepTree {
  std::vector<std::string> surface;
  std::vector<std::string> lower;
  std::vector<int> head;      // parent token index, -1 for the root
  std::vector<std::string> relation;
  std::vector<std::vector<int>> children;  // sorted by token index
  int root = -1;

  int size() const { return static_cast<int>(surface.size()); }
};

// N-ary constituency node: either >=1 children or a leaf token, never both.
struct ConstTree {
  std::string label;
  std::vector<ConstTree> children;
  std::string leaf;

  bool is_leaf() const { return children.empty(); }
};

// Strictly binary constituency node after CNF rewriting; internal nodes may
// carry the dummy label "X" introduced by the factoring.
struct BinTree {
  std::string label;
  std::unique_ptr<BinTree> left;
  std::unique_ptr<BinTree> right;
  std::string leaf;

  bool is_preterminal() const { return left == nullptr; }
  int leaf_count() const;
  std::vector<std::string> leaves() const;
};

// Lowercased word -> dense id map with a reserved unknown-word slot at id 0.
class Vocabulary {
 public:
  static constexpr const char* kUnknown = "<unk>";
  static constexpr int kUnknownId = 0;

  // Lowercases, dedups, sorts; ids 1..n follow sorted order.  Throws
  // ArgumentError on an empty corpus.
  static Vocabulary build(const std::vector<std::string>& tokens);
  static Vocabulary from_words(std::vector<std::string> words_by_id);

  // Lowercases the token and maps it; absent words get kUnknownId.
  int lookup(const std::string& token) const;
  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(int id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;          // index = id; [0] = kUnknown
  std::map<std::string, int> ids_;
};

struct EmbeddingTable {
  Tensor table;            // vocab size x dim
  bool trainable = false;
  double coverage = 0.0;   // in-file words / (vocab size - 1)
};

// One sentence pair with both tree forms and a gold score in [1,5].
struct SickExample {
  std::vector<std::string> tokens_a;
  std::vector<std::string> tokens_b;
  DepTree dep_a;
  DepTree dep_b;
  std::shared_ptr<const BinTree> const_a;
  std::shared_ptr<const BinTree> const_b;
  double gold = 0.0;
};

std::string lowercase(const std::string& s);
std::string read_file(const std::string& path);

// CoNLL-X: blank-line-separated sentences, tab-separated lines with at least
// 8 fields; ID, FORM, HEAD, DEPREL are consumed.  Throws ParseError with the
// line number on malformed lines, StructureError with the sentence ordinal on
// zero/multiple roots or head cycles.
std::vector<DepTree> parse_conll(const std::string& text);

// Single bracketed parse; trailing non-whitespace is an error.  ParseError
// messages carry the character offset.
ConstTree parse_ptb(const std::string& text);
// Every tree in the text, in order (one per line or whitespace-separated).
std::vector<ConstTree> parse_ptb_all(const std::string& text);
std::string print_ptb(const ConstTree& t);

// Right-factored CNF: children c1..cn become (label c1 (X c2 ... (X cn-1 cn)));
// unary non-preterminal chains collapse into the child, keeping the lower
// label.  Leaf order is preserved.
BinTree binarize_cnf(const ConstTree& t);

// Word then `dim` reals per line, whitespace-separated.  Rows for missing
// words are drawn uniformly from [-0.05, 0.05] on a named substream of seed,
// in vocabulary id order.
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                               int dim, std::uint64_t seed);

// The missing-word path of load_embeddings applied to every word: a fully
// random table for runs without a pretrained vector file.
EmbeddingTable random_embeddings(const Vocabulary& vocab, int dim,
                                 std::uint64_t seed);

// Dataset manifest: one example per line,
//   sentenceA \t sentenceB \t gold \t depA \t depB \t constA \t constB
// where the four tree fields are `file:index` references (path relative to
// the manifest, index = 0-based ordinal within the file).  Referenced files
// are parsed once and cached.  Token counts must agree between sentences and
// both tree forms.
std::vector<SickExample> load_manifest(const std::string& path);

// Every token of every sentence in the examples, for vocabulary building.
std::vector<std::string> collect_tokens(const std::vector<SickExample>& examples);

}  // namespace treeattn
