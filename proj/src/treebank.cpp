#include "treeattn/treebank.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "treeattn/errors.hpp"
#include "treeattn/rng.hpp"

namespace treeattn {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_tabs(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = s.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, tab - start));
    start = tab + 1;
  }
}

int parse_int_field(const std::string& s, int line_no, const char* what) {
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": " + what +
                     " field '" + s + "' is not an integer");
  }
}

}  // namespace

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int BinTree::leaf_count() const {
  if (is_preterminal()) return 1;
  return left->leaf_count() + right->leaf_count();
}

std::vector<std::string> BinTree::leaves() const {
  std::vector<std::string> out;
  const auto walk = [&out](const BinTree& n, const auto& self) -> void {
    if (n.is_preterminal()) {
      out.push_back(n.leaf);
      return;
    }
    self(*n.left, self);
    self(*n.right, self);
  };
  walk(*this, walk);
  return out;
}

std::vector<DepTree> parse_conll(const std::string& text) {
  std::vector<DepTree> trees;
  std::vector<std::pair<int, std::vector<std::string>>> pending;  // (line, fields)

  const auto flush = [&]() {
    if (pending.empty()) return;
    const int ordinal = static_cast<int>(trees.size()) + 1;
    const int n = static_cast<int>(pending.size());
    DepTree t;
    t.surface.reserve(n);
    t.head.assign(n, -1);
    t.relation.resize(n);
    t.children.resize(n);
    std::vector<int> heads_1b(n);
    for (int i = 0; i < n; ++i) {
      const auto& [line_no, f] = pending[i];
      const int id = parse_int_field(f[0], line_no, "ID");
      if (id != i + 1) {
        throw ParseError("line " + std::to_string(line_no) + ": token ID " +
                         std::to_string(id) + " breaks the 1.." +
                         std::to_string(n) + " sequence");
      }
      t.surface.push_back(f[1]);
      t.lower.push_back(lowercase(f[1]));
      heads_1b[i] = parse_int_field(f[6], line_no, "HEAD");
      t.relation[i] = f[7];
    }
    int roots = 0;
    for (int i = 0; i < n; ++i) {
      const int h = heads_1b[i];
      if (h < 0 || h > n) {
        throw StructureError("sentence " + std::to_string(ordinal) +
                             ": token " + std::to_string(i + 1) + " has head " +
                             std::to_string(h) + " outside 0.." +
                             std::to_string(n));
      }
      if (h == 0) {
        t.head[i] = -1;
        t.root = i;
        ++roots;
      } else {
        t.head[i] = h - 1;
        t.children[h - 1].push_back(i);  // appended in index order => sorted
      }
    }
    if (roots != 1) {
      throw StructureError("sentence " + std::to_string(ordinal) + ": " +
                           std::to_string(roots) + " roots, expected exactly 1");
    }
    // Reachability from the root doubles as the cycle check: a cycle strands
    // its members from the root's subtree.
    std::vector<int> stack{t.root};
    int seen = 0;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      ++seen;
      for (int c : t.children[v]) stack.push_back(c);
    }
    if (seen != n) {
      throw StructureError("sentence " + std::to_string(ordinal) +
                           ": head links form a cycle (" +
                           std::to_string(n - seen) +
                           " tokens unreachable from the root)");
    }
    trees.push_back(std::move(t));
    pending.clear();
  };

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() < 8) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected at least 8 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    pending.emplace_back(line_no, std::move(fields));
  }
  flush();
  return trees;
}

namespace {

// Recursive-descent bracketed-parse reader.  Offsets in errors are 0-based
// character positions into the original text.
class PtbReader {
 public:
  explicit PtbReader(const std::string& text) : text_(text) {}

  ConstTree parse_one() {
    skip_ws();
    ConstTree t = parse_node();
    return t;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  std::size_t pos() const { return pos_; }

 private:
  ConstTree parse_node() {
    if (pos_ >= text_.size() || text_[pos_] != '(') {
      throw ParseError("expected '(' at offset " + std::to_string(pos_));
    }
    const std::size_t open = pos_;
    ++pos_;
    skip_ws();
    ConstTree node;
    node.label = read_token();
    skip_ws();
    bool saw_child = false;
    while (pos_ < text_.size() && text_[pos_] != ')') {
      if (text_[pos_] == '(') {
        if (!node.leaf.empty()) {
          throw ParseError("constituent at offset " + std::to_string(open) +
                           " mixes a leaf token with children");
        }
        node.children.push_back(parse_node());
        saw_child = true;
      } else {
        if (saw_child || !node.leaf.empty()) {
          throw ParseError("constituent at offset " + std::to_string(open) +
                           " has more than one leaf token");
        }
        node.leaf = read_token();
      }
      skip_ws();
    }
    if (pos_ >= text_.size()) {
      throw ParseError("unbalanced parentheses: '(' at offset " +
                       std::to_string(open) + " is never closed");
    }
    ++pos_;  // consume ')'
    if (node.children.empty() && node.leaf.empty()) {
      throw ParseError("empty constituent at offset " + std::to_string(open));
    }
    if (node.label.empty()) {
      // Anonymous wrapper "( (S ...) )" common at the top of treebank files.
      if (node.children.size() == 1) return std::move(node.children[0]);
      throw ParseError("constituent at offset " + std::to_string(open) +
                       " has no label");
    }
    return node;
  }

  std::string read_token() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '(' && text_[pos_] != ')') {
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace

ConstTree parse_ptb(const std::string& text) {
  PtbReader reader(text);
  ConstTree t = reader.parse_one();
  if (!reader.at_end()) {
    throw ParseError("trailing content at offset " +
                     std::to_string(reader.pos()));
  }
  return t;
}

std::vector<ConstTree> parse_ptb_all(const std::string& text) {
  PtbReader reader(text);
  std::vector<ConstTree> out;
  while (!reader.at_end()) out.push_back(reader.parse_one());
  return out;
}

std::string print_ptb(const ConstTree& t) {
  std::string out = "(" + t.label;
  if (t.is_leaf()) {
    out += " " + t.leaf;
  } else {
    for (const ConstTree& c : t.children) out += " " + print_ptb(c);
  }
  out += ")";
  return out;
}

namespace {

BinTree make_internal(std::string label, BinTree left, BinTree right) {
  BinTree n;
  n.label = std::move(label);
  n.left = std::make_unique<BinTree>(std::move(left));
  n.right = std::make_unique<BinTree>(std::move(right));
  return n;
}

BinTree bin_node(const ConstTree& t);

// Right-deep chain of dummy-labeled nodes over children [i..n).
BinTree x_chain(const std::vector<ConstTree>& cs, std::size_t i) {
  if (i + 1 == cs.size()) return bin_node(cs[i]);
  return make_internal("X", bin_node(cs[i]), x_chain(cs, i + 1));
}

BinTree bin_node(const ConstTree& t) {
  if (t.is_leaf()) {
    BinTree n;
    n.label = t.label;
    n.leaf = t.leaf;
    return n;
  }
  if (t.children.size() == 1) return bin_node(t.children[0]);
  return make_internal(t.label, bin_node(t.children[0]), x_chain(t.children, 1));
}

}  // namespace

BinTree binarize_cnf(const ConstTree& t) { return bin_node(t); }

Vocabulary Vocabulary::build(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ArgumentError("vocabulary: empty corpus");
  std::vector<std::string> lowered;
  lowered.reserve(tokens.size());
  for (const std::string& t : tokens) lowered.push_back(lowercase(t));
  std::sort(lowered.begin(), lowered.end());
  lowered.erase(std::unique(lowered.begin(), lowered.end()), lowered.end());
  std::erase(lowered, std::string(kUnknown));  // reserved slot
  std::vector<std::string> words;
  words.reserve(lowered.size() + 1);
  words.emplace_back(kUnknown);
  words.insert(words.end(), lowered.begin(), lowered.end());
  return from_words(std::move(words));
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words_by_id) {
  if (words_by_id.empty() || words_by_id[0] != kUnknown) {
    throw ArgumentError("vocabulary word list must start with the reserved '" +
                        std::string(kUnknown) + "' entry");
  }
  Vocabulary v;
  v.words_ = std::move(words_by_id);
  for (int i = 0; i < static_cast<int>(v.words_.size()); ++i) {
    if (!v.ids_.emplace(v.words_[i], i).second) {
      throw ArgumentError("vocabulary word '" + v.words_[i] + "' duplicated");
    }
  }
  return v;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = ids_.find(lowercase(token));
  return it == ids_.end() ? kUnknownId : it->second;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                               int dim, std::uint64_t seed) {
  const std::string text = read_file(path);
  std::map<std::string, std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_ws(line);
    if (static_cast<int>(fields.size()) != dim + 1) {
      throw FormatError("line " + std::to_string(line_no) + ": expected word + " +
                        std::to_string(dim) + " values, got " +
                        std::to_string(fields.size() - 1));
    }
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      try {
        v[static_cast<std::size_t>(i)] = std::stod(fields[static_cast<std::size_t>(i) + 1]);
      } catch (const std::exception&) {
        throw FormatError("line " + std::to_string(line_no) + ": value '" +
                          fields[static_cast<std::size_t>(i) + 1] +
                          "' is not a number");
      }
    }
    rows.emplace(lowercase(fields[0]), std::move(v));  // first occurrence wins
  }

  EmbeddingTable table;
  table.table = Tensor::zeros(vocab.size(), dim);
  double* data = table.table.mutable_data();
  int found = 0;
  for (int id = 0; id < vocab.size(); ++id) {
    double* row = data + static_cast<std::size_t>(id) * dim;
    auto it = rows.find(vocab.word(id));
    if (it != rows.end()) {
      std::copy(it->second.begin(), it->second.end(), row);
      if (id != Vocabulary::kUnknownId) ++found;
      continue;
    }
    Rng rng = Rng::substream(seed, "embed_init", static_cast<std::uint64_t>(id));
    for (int j = 0; j < dim; ++j) row[j] = rng.uniform(-0.05, 0.05);
  }
  table.coverage =
      vocab.size() > 1 ? static_cast<double>(found) / (vocab.size() - 1) : 0.0;
  return table;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, int dim,
                                 std::uint64_t seed) {
  EmbeddingTable table;
  table.table = Tensor::zeros(vocab.size(), dim);
  double* data = table.table.mutable_data();
  for (int id = 0; id < vocab.size(); ++id) {
    double* row = data + static_cast<std::size_t>(id) * dim;
    Rng rng = Rng::substream(seed, "embed_init", static_cast<std::uint64_t>(id));
    for (int j = 0; j < dim; ++j) row[j] = rng.uniform(-0.05, 0.05);
  }
  return table;
}

namespace {

struct TreeRef {
  std::string path;
  int index = 0;
};

TreeRef parse_tree_ref(const std::string& field, int example_no,
                       const std::filesystem::path& base_dir) {
  const std::size_t colon = field.rfind(':');
  if (colon == std::string::npos || colon + 1 == field.size()) {
    throw FormatError("example " + std::to_string(example_no) +
                      ": tree reference '" + field + "' is not 'file:index'");
  }
  TreeRef ref;
  try {
    std::size_t used = 0;
    ref.index = std::stoi(field.substr(colon + 1), &used);
    if (used != field.size() - colon - 1 || ref.index < 0) {
      throw std::invalid_argument(field);
    }
  } catch (const std::exception&) {
    throw FormatError("example " + std::to_string(example_no) +
                      ": tree index in '" + field + "' is not a non-negative integer");
  }
  ref.path = (base_dir / field.substr(0, colon)).string();
  return ref;
}

void check_tokens(const std::vector<std::string>& sentence,
                  const std::vector<std::string>& tree_tokens, int example_no,
                  const char* what) {
  if (sentence != tree_tokens) {
    throw StructureError("example " + std::to_string(example_no) + ": " + what +
                         " tokens disagree with the sentence (" +
                         std::to_string(tree_tokens.size()) + " vs " +
                         std::to_string(sentence.size()) + " tokens)");
  }
}

}  // namespace

std::vector<SickExample> load_manifest(const std::string& path) {
  const std::string text = read_file(path);
  const std::filesystem::path base_dir =
      std::filesystem::path(path).parent_path();

  std::map<std::string, std::vector<DepTree>> dep_cache;
  std::map<std::string, std::vector<std::shared_ptr<const BinTree>>> bin_cache;

  const auto dep_at = [&](const TreeRef& ref, int example_no) -> const DepTree& {
    auto it = dep_cache.find(ref.path);
    if (it == dep_cache.end()) {
      it = dep_cache.emplace(ref.path, parse_conll(read_file(ref.path))).first;
    }
    const auto& trees = it->second;
    if (ref.index >= static_cast<int>(trees.size())) {
      throw FormatError("example " + std::to_string(example_no) + ": index " +
                        std::to_string(ref.index) + " outside '" + ref.path +
                        "' (" + std::to_string(trees.size()) + " sentences)");
    }
    return trees[static_cast<std::size_t>(ref.index)];
  };

  const auto bin_at = [&](const TreeRef& ref,
                          int example_no) -> std::shared_ptr<const BinTree> {
    auto it = bin_cache.find(ref.path);
    if (it == bin_cache.end()) {
      std::vector<std::shared_ptr<const BinTree>> trees;
      for (const ConstTree& c : parse_ptb_all(read_file(ref.path))) {
        trees.push_back(std::make_shared<const BinTree>(binarize_cnf(c)));
      }
      it = bin_cache.emplace(ref.path, std::move(trees)).first;
    }
    const auto& trees = it->second;
    if (ref.index >= static_cast<int>(trees.size())) {
      throw FormatError("example " + std::to_string(example_no) + ": index " +
                        std::to_string(ref.index) + " outside '" + ref.path +
                        "' (" + std::to_string(trees.size()) + " trees)");
    }
    return trees[static_cast<std::size_t>(ref.index)];
  };

  std::vector<SickExample> examples;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const int example_no = static_cast<int>(examples.size()) + 1;
    auto fields = split_tabs(line);
    if (fields.size() != 7) {
      throw FormatError("example " + std::to_string(example_no) + " (line " +
                        std::to_string(line_no) +
                        "): expected 7 tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    SickExample ex;
    ex.tokens_a = split_ws(fields[0]);
    ex.tokens_b = split_ws(fields[1]);
    if (ex.tokens_a.empty() || ex.tokens_b.empty()) {
      throw FormatError("example " + std::to_string(example_no) +
                        ": empty sentence");
    }
    try {
      ex.gold = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw FormatError("example " + std::to_string(example_no) +
                        ": gold score '" + fields[2] + "' is not a number");
    }
    if (ex.gold < 1.0 || ex.gold > 5.0) {
      throw FormatError("example " + std::to_string(example_no) +
                        ": gold score " + fields[2] + " outside [1,5]");
    }
    ex.dep_a = dep_at(parse_tree_ref(fields[3], example_no, base_dir), example_no);
    ex.dep_b = dep_at(parse_tree_ref(fields[4], example_no, base_dir), example_no);
    ex.const_a = bin_at(parse_tree_ref(fields[5], example_no, base_dir), example_no);
    ex.const_b = bin_at(parse_tree_ref(fields[6], example_no, base_dir), example_no);
    check_tokens(ex.tokens_a, ex.dep_a.surface, example_no, "dependency tree A");
    check_tokens(ex.tokens_b, ex.dep_b.surface, example_no, "dependency tree B");
    check_tokens(ex.tokens_a, ex.const_a->leaves(), example_no, "constituency tree A");
    check_tokens(ex.tokens_b, ex.const_b->leaves(), example_no, "constituency tree B");
    examples.push_back(std::move(ex));
  }
  return examples;
}

std::vector<std::string> collect_tokens(const std::vector<SickExample>& examples) {
  std::vector<std::string> out;
  for (const SickExample& ex : examples) {
    out.insert(out.end(), ex.tokens_a.begin(), ex.tokens_a.end());
    out.insert(out.end(), ex.tokens_b.begin(), ex.tokens_b.end());
  }
  return out;
}

}  // namespace treeattn
