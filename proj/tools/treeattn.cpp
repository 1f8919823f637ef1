// Command-line front end: train / eval / attend / gradcheck.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error
// (unreadable or malformed input files), 3 verification failure (gradient
// check mismatch, trace replay mismatch, numeric degeneracy).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "treeattn/attention.hpp"
#include "treeattn/cells.hpp"
#include "treeattn/checkpoint.hpp"
#include "treeattn/errors.hpp"
#include "treeattn/gradcheck.hpp"
#include "treeattn/model.hpp"
#include "treeattn/ops.hpp"
#include "treeattn/treebank.hpp"

using namespace treeattn;
using nlohmann::json;

namespace {

// File-level settings that are not model hyperparameters.
struct RunPaths {
  std::string train, dev, embeddings, out, model, data;
  std::string format = "binary";
};

bool is_path_key(const std::string& key) {
  return key == "train" || key == "dev" || key == "embeddings" ||
         key == "out" || key == "model" || key == "data" || key == "format";
}

void set_path(RunPaths& paths, const std::string& key, const std::string& value) {
  if (key == "train") paths.train = value;
  else if (key == "dev") paths.dev = value;
  else if (key == "embeddings") paths.embeddings = value;
  else if (key == "out") paths.out = value;
  else if (key == "model") paths.model = value;
  else if (key == "data") paths.data = value;
  else if (key == "format") paths.format = value;
}

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Config files come in two shapes: a flat JSON object or key=value lines
// ('#' starts a comment).  Both share one key vocabulary; data paths are
// split off into RunPaths, the rest goes through apply_config_entry.
void load_config_file(const std::string& path, ModelConfig& cfg,
                      RunPaths& paths) {
  const std::string text = read_file(path);
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": config must be an object");
    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& [key, val] : j.items()) {
      const std::string value =
          val.is_string() ? val.get<std::string>() : val.dump();
      if (is_path_key(key)) {
        set_path(paths, key, value);
      } else if (key == "d") {
        entries.insert(entries.begin(), {key, value});  // d resets attn_dim
      } else {
        entries.emplace_back(key, value);
      }
    }
    for (const auto& [key, value] : entries) apply_config_entry(cfg, key, value);
    return;
  }

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    if (is_path_key(key)) {
      set_path(paths, key, value);
    } else {
      apply_config_entry(cfg, key, value);
    }
  }
}

CheckpointFormat checkpoint_format(const std::string& name) {
  if (name == "binary") return CheckpointFormat::binary;
  if (name == "json") return CheckpointFormat::json;
  throw ConfigError("unknown checkpoint format '" + name +
                    "' (expected binary or json)");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("short write to '" + path + "'");
}

// ---------------------------------------------------------------- train ---

int cmd_train(const ModelConfig& cfg, const RunPaths& paths) {
  validate(cfg);
  if (paths.train.empty()) {
    throw ConfigError("train needs a manifest (--train or train= in config)");
  }
  const CheckpointFormat fmt = checkpoint_format(paths.format);

  std::vector<SickExample> train_set = load_manifest(paths.train);
  std::vector<SickExample> dev_set;
  if (!paths.dev.empty()) dev_set = load_manifest(paths.dev);

  Vocabulary vocab = Vocabulary::build(collect_tokens(train_set));
  EmbeddingTable emb =
      paths.embeddings.empty()
          ? random_embeddings(vocab, cfg.embed_dim, cfg.seed)
          : load_embeddings(paths.embeddings, vocab, cfg.embed_dim, cfg.seed);

  Model model(cfg, vocab);
  model.init(cfg.seed);
  model.set_embeddings(emb.table);

  std::cout.precision(10);
  if (!paths.embeddings.empty()) {
    std::cout << "embedding coverage " << emb.coverage << "\n";
  }
  TrainResult result =
      train(model, train_set, dev_set, [&](const EpochRecord& rec) {
        std::cout << "epoch " << rec.epoch << " train_loss " << rec.train_loss;
        if (!dev_set.empty()) {
          std::cout << " dev_pearson ";
          if (rec.dev_pearson_defined) {
            std::cout << rec.dev_pearson;
          } else {
            std::cout << "undefined";
          }
          std::cout << " dev_mse " << rec.dev_mse;
        }
        std::cout << std::endl;
      });

  const std::string out = paths.out.empty() ? "model.ckpt" : paths.out;
  save_checkpoint(out, model, fmt);

  json summary;
  summary["command"] = "train";
  summary["epochs"] = static_cast<int>(result.history.size());
  summary["best_epoch"] = result.best_epoch;
  if (!result.history.empty()) {
    summary["final_train_loss"] = result.history.back().train_loss;
  }
  if (result.best_epoch > 0) {
    const EpochRecord& best =
        result.history[static_cast<std::size_t>(result.best_epoch) - 1];
    summary["best_dev_mse"] = best.dev_mse;
    if (best.dev_pearson_defined) summary["best_dev_pearson"] = best.dev_pearson;
  }
  summary["checkpoint"] = out;
  summary["config"] = json::parse(config_to_json_text(cfg));
  std::cout << summary.dump() << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ---

int cmd_eval(const RunPaths& paths) {
  if (paths.model.empty()) throw ConfigError("eval needs --model <checkpoint>");
  if (paths.data.empty()) throw ConfigError("eval needs --data <manifest>");
  Model model = model_from_checkpoint(read_checkpoint(paths.model));
  std::vector<SickExample> data = load_manifest(paths.data);
  EvalReport r = evaluate(model, data);

  json j;
  j["command"] = "eval";
  j["n"] = r.n;
  j["mse"] = r.mse;
  j["pearson_defined"] = r.pearson_defined;
  j["pearson"] = r.pearson_defined ? json(r.pearson) : json(nullptr);
  std::cout << j.dump() << "\n";
  return 0;
}

// --------------------------------------------------------------- attend ---

bool traces_identical(const std::vector<NodeTrace>& a,
                      const std::vector<NodeTrace>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].parent != b[i].parent ||
        a[i].label != b[i].label || a[i].token != b[i].token ||
        a[i].child_ids != b[i].child_ids || a[i].alpha != b[i].alpha) {
      return false;
    }
  }
  return true;
}

json trace_to_json(const std::vector<NodeTrace>& nodes) {
  json arr = json::array();
  for (const NodeTrace& n : nodes) {
    json jn;
    jn["id"] = n.id;
    jn["parent"] = n.parent;
    jn["label"] = n.label;
    jn["token"] = n.token;
    jn["children"] = n.child_ids;
    jn["alpha"] = n.alpha;
    arr.push_back(std::move(jn));
  }
  return arr;
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

void dot_tree(std::ostream& os, const std::vector<NodeTrace>& nodes,
              const std::string& prefix, const std::string& title) {
  os << "  subgraph cluster_" << prefix << " {\n";
  os << "    label=\"" << dot_escape(title) << "\";\n";
  for (const NodeTrace& n : nodes) {
    std::string text = n.label;
    if (!n.token.empty()) text += (text.empty() ? "" : " ") + n.token;
    os << "    " << prefix << n.id << " [label=\"" << dot_escape(text)
       << "\"];\n";
  }
  for (const NodeTrace& n : nodes) {
    for (std::size_t k = 0; k < n.child_ids.size(); ++k) {
      os << "    " << prefix << n.id << " -> " << prefix << n.child_ids[k];
      if (k < n.alpha.size()) {
        std::ostringstream w;
        w.precision(3);
        w << n.alpha[k];
        os << " [label=\"" << w.str() << "\"]";
      }
      os << ";\n";
    }
  }
  os << "  }\n";
}

// Alphas are checked to sum to one only under softmax normalization; the
// weighted-ratio mechanism and plain normalization deliberately leave a
// small epsilon-sized gap (or none at all when scores are unnormalized).
int cmd_attend(const RunPaths& paths, int index, const std::string& dot_path) {
  if (paths.model.empty()) throw ConfigError("attend needs --model <checkpoint>");
  if (paths.data.empty()) throw ConfigError("attend needs --data <manifest>");
  Model model = model_from_checkpoint(read_checkpoint(paths.model));
  if (model.config().attention.kind == AttentionKind::none) {
    throw ConfigError(
        "checkpoint was trained with attention=none: no attention trace exists");
  }
  std::vector<SickExample> data = load_manifest(paths.data);
  if (index < 0 || index >= static_cast<int>(data.size())) {
    throw ArgumentError("example index " + std::to_string(index) +
                        " outside [0, " + std::to_string(data.size()) + ")");
  }
  const SickExample& ex = data[static_cast<std::size_t>(index)];

  auto run = [&](std::vector<NodeTrace>& ta, std::vector<NodeTrace>& tb) {
    ParamContext ctx(model.store(), nullptr);
    Model::Forward f = model.forward(
        ex, ctx, nullptr, [&](const NodeTrace& n) { ta.push_back(n); },
        [&](const NodeTrace& n) { tb.push_back(n); });
    return f.y_hat;
  };

  std::vector<NodeTrace> trace_a, trace_b;
  const double y_hat = run(trace_a, trace_b);

  // The same encoding replayed must reproduce the trace bit for bit.
  std::vector<NodeTrace> replay_a, replay_b;
  const double y_replay = run(replay_a, replay_b);
  if (y_replay != y_hat || !traces_identical(trace_a, replay_a) ||
      !traces_identical(trace_b, replay_b)) {
    std::cerr << "verification failure: trace replay diverged\n";
    return 3;
  }

  const AttentionSpec& spec = model.config().attention;
  const bool check_sums = spec.kind != AttentionKind::none &&
                          spec.kind != AttentionKind::soft &&
                          spec.normalization == Normalization::softmax;
  for (const std::vector<NodeTrace>* t : {&trace_a, &trace_b}) {
    for (const NodeTrace& n : *t) {
      if (n.alpha.empty()) continue;
      if (n.alpha.size() != n.child_ids.size()) {
        std::cerr << "verification failure: node " << n.id << " has "
                  << n.alpha.size() << " weights for " << n.child_ids.size()
                  << " children\n";
        return 3;
      }
      if (check_sums) {
        double sum = 0.0;
        for (double a : n.alpha) sum += a;
        if (std::abs(sum - 1.0) > 1e-6) {
          std::cerr << "verification failure: node " << n.id
                    << " attention sums to " << sum << "\n";
          return 3;
        }
      }
    }
  }

  json j;
  j["command"] = "attend";
  j["example"] = index;
  j["gold"] = ex.gold;
  j["y_hat"] = y_hat;
  j["cell"] = to_string(model.config().cell);
  j["attention"] = {{"kind", to_string(spec.kind)},
                    {"query", to_string(spec.query_source)},
                    {"norm", to_string(spec.normalization)}};
  j["sentence_a"] = ex.tokens_a;
  j["sentence_b"] = ex.tokens_b;
  j["nodes_a"] = trace_to_json(trace_a);
  j["nodes_b"] = trace_to_json(trace_b);

  if (paths.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_text(paths.out, j.dump(2) + "\n");
    std::cout << "wrote " << paths.out << "\n";
  }

  if (!dot_path.empty()) {
    std::ostringstream os;
    os << "digraph attention {\n  node [shape=box];\n";
    dot_tree(os, trace_a, "a", "sentence A");
    dot_tree(os, trace_b, "b", "sentence B");
    os << "}\n";
    write_text(dot_path, os.str());
    std::cout << "wrote " << dot_path << "\n";
  }
  return 0;
}

// ------------------------------------------------------------ gradcheck ---

// Small fixed sentence pair exercising both tree forms.  Built through the
// regular parsers so the probe covers them too.
SickExample probe_example() {
  const std::string conll =
      "1\tthe\t_\t_\t_\t_\t2\tdet\n"
      "2\tcat\t_\t_\t_\t_\t3\tnsubj\n"
      "3\tsat\t_\t_\t_\t_\t0\troot\n"
      "\n"
      "1\ta\t_\t_\t_\t_\t2\tdet\n"
      "2\tdog\t_\t_\t_\t_\t4\tnsubj\n"
      "3\tnever\t_\t_\t_\t_\t4\tadvmod\n"
      "4\tran\t_\t_\t_\t_\t0\troot\n";
  std::vector<DepTree> deps = parse_conll(conll);

  SickExample ex;
  ex.tokens_a = {"the", "cat", "sat"};
  ex.tokens_b = {"a", "dog", "never", "ran"};
  ex.dep_a = std::move(deps[0]);
  ex.dep_b = std::move(deps[1]);
  ex.const_a = std::make_shared<BinTree>(
      binarize_cnf(parse_ptb("(S (NP (D the) (N cat)) (VP (V sat)))")));
  ex.const_b = std::make_shared<BinTree>(binarize_cnf(
      parse_ptb("(S (NP (D a) (N dog)) (VP (ADV never) (V ran)))")));
  ex.gold = 3.5;
  return ex;
}

// One configuration through the end-to-end checker.
json gradcheck_record(const ModelConfig& cfg, const SickExample& ex,
                      const Vocabulary& vocab, bool corrupt) {
  Model model(cfg, vocab);
  model.init(cfg.seed);
  model.set_embeddings(
      random_embeddings(vocab, cfg.embed_dim, cfg.seed).table);

  GradCheckOptions opts;
  opts.corrupt_one = corrupt;
  GradCheckReport rep = check_gradients(
      model.store(),
      [&](ParamContext& ctx) { return model.forward(ex, ctx, nullptr).loss; },
      opts);

  json j;
  j["cell"] = to_string(cfg.cell);
  j["attn"] = to_string(cfg.attention.kind);
  j["query"] = to_string(cfg.attention.query_source);
  j["norm"] = to_string(cfg.attention.normalization);
  j["passed"] = rep.passed;
  j["checked"] = rep.checked;
  j["max_rel_err"] = rep.max_rel_err;
  j["worst_param"] = rep.worst_param;
  j["worst_index"] = rep.worst_index;
  return j;
}

int cmd_gradcheck(ModelConfig cfg, bool corrupt, bool single) {
  // The probe differentiates every parameter, embeddings included; a frozen
  // table would influence the loss without appearing on the tape, which is
  // exactly what the checker is built to reject.
  cfg.train_embeddings = true;

  SickExample ex = probe_example();
  std::vector<std::string> tokens = ex.tokens_a;
  tokens.insert(tokens.end(), ex.tokens_b.begin(), ex.tokens_b.end());
  Vocabulary vocab = Vocabulary::build(tokens);

  // Structural flags narrow the run to that one configuration.
  if (single) {
    validate(cfg);
    json j = gradcheck_record(cfg, ex, vocab, corrupt);
    j["command"] = "gradcheck";
    std::cout << j.dump() << "\n";
    return j["passed"].get<bool>() ? 0 : 3;
  }

  // Default: the whole cell x attention x query grid.  Kind none takes no
  // query and the ratio mechanism has no self query, so the grid is ragged.
  json configs = json::array();
  bool all_passed = true;
  for (CellKind cell : {CellKind::child_sum, CellKind::binary}) {
    for (AttentionKind kind : {AttentionKind::none, AttentionKind::soft,
                               AttentionKind::model1, AttentionKind::model2}) {
      std::vector<QuerySource> sources;
      if (kind == AttentionKind::none) {
        sources = {QuerySource::other_sentence};  // never read
      } else if (kind == AttentionKind::soft) {
        sources = {QuerySource::own_sentence, QuerySource::other_sentence,
                   QuerySource::phrase};
      } else {
        sources = {QuerySource::self, QuerySource::own_sentence,
                   QuerySource::other_sentence, QuerySource::phrase};
      }
      for (QuerySource src : sources) {
        ModelConfig c = cfg;
        c.cell = cell;
        c.attention = {kind, src, cfg.attention.normalization};
        validate(c);
        json rec = gradcheck_record(c, ex, vocab, corrupt);
        const bool passed = rec["passed"].get<bool>();
        all_passed = all_passed && passed;
        std::cerr << (passed ? "ok   " : "FAIL ") << to_string(cell) << " "
                  << to_string(kind);
        if (kind != AttentionKind::none) std::cerr << " " << to_string(src);
        std::cerr << " max_rel_err " << rec["max_rel_err"].get<double>()
                  << "\n";
        configs.push_back(std::move(rec));
      }
    }
  }
  json j;
  j["command"] = "gradcheck";
  j["total"] = configs.size();
  j["configurations"] = std::move(configs);
  j["passed"] = all_passed;
  std::cout << j.dump() << "\n";
  return all_passed ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tree-structured similarity models with attention"};
  app.require_subcommand(1);

  // Shared flag storage; each subcommand registers the subset it honors.
  std::string config_path, cell, attn, query, norm, out;
  std::uint64_t seed = 0;
  RunPaths flag_paths;
  int index = 0;
  std::string dot_path;
  bool corrupt = false;

  auto add_common = [&](CLI::App* sub, bool structural) {
    sub->add_option("--config", config_path,
                    "config file (key=value lines or JSON)");
    sub->add_option("--out", out, "output path");
    if (structural) {
      sub->add_option("--seed", seed, "master seed");
      sub->add_option("--cell", cell, "tree cell: child_sum | binary");
      sub->add_option("--attn", attn,
                      "attention: none | soft | model1 | model2");
      sub->add_option("--query", query,
                      "query source: self | own | other | phrase");
      sub->add_option("--norm", norm, "weight normalization: softmax | plain");
    }
  };

  CLI::App* train_cmd = app.add_subcommand("train", "fit a similarity model");
  add_common(train_cmd, true);
  train_cmd->add_option("--train", flag_paths.train, "training manifest");
  train_cmd->add_option("--dev", flag_paths.dev, "development manifest");
  train_cmd->add_option("--embeddings", flag_paths.embeddings,
                        "pretrained word vectors (word + floats per line)");
  train_cmd->add_option("--format", flag_paths.format,
                        "checkpoint format: binary | json");

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a dataset");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--model", flag_paths.model, "checkpoint to load");
  eval_cmd->add_option("--data", flag_paths.data, "evaluation manifest");

  CLI::App* attend_cmd =
      app.add_subcommand("attend", "dump one example's attention trace");
  add_common(attend_cmd, false);
  attend_cmd->add_option("--model", flag_paths.model, "checkpoint to load");
  attend_cmd->add_option("--data", flag_paths.data, "manifest with examples");
  attend_cmd->add_option("--index", index, "example index (default 0)");
  attend_cmd->add_option("--dot", dot_path, "also write a Graphviz file");

  CLI::App* grad_cmd = app.add_subcommand(
      "gradcheck", "compare tape gradients against central differences");
  add_common(grad_cmd, true);
  grad_cmd
      ->add_flag("--self-test-corrupt", corrupt,
                 "corrupt one analytic entry; the check must then fail")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    ModelConfig cfg;
    if (grad_cmd->parsed()) {
      // Probe-sized defaults; a config file can still override them.
      cfg.d = 8;
      cfg.attn_dim = 8;
      cfg.embed_dim = 6;
      cfg.mlp_hidden = 4;
      cfg.dropout = 0.0;
    }
    RunPaths paths;
    if (!config_path.empty()) load_config_file(config_path, cfg, paths);

    // Explicit flags win over the config file.
    auto flag = [&](CLI::App* sub, const std::string& name) {
      const CLI::Option* o = sub->get_option_no_throw(name);
      return o && o->count() > 0;
    };
    CLI::App* sub = train_cmd->parsed()    ? train_cmd
                    : eval_cmd->parsed()   ? eval_cmd
                    : attend_cmd->parsed() ? attend_cmd
                                           : grad_cmd;
    if (flag(sub, "--cell")) apply_config_entry(cfg, "cell", cell);
    if (flag(sub, "--attn")) apply_config_entry(cfg, "attn", attn);
    if (flag(sub, "--query")) apply_config_entry(cfg, "query", query);
    if (flag(sub, "--norm")) apply_config_entry(cfg, "norm", norm);
    if (flag(sub, "--seed")) cfg.seed = seed;
    if (flag(sub, "--out")) paths.out = out;
    if (!flag_paths.train.empty()) paths.train = flag_paths.train;
    if (!flag_paths.dev.empty()) paths.dev = flag_paths.dev;
    if (!flag_paths.embeddings.empty()) paths.embeddings = flag_paths.embeddings;
    if (!flag_paths.model.empty()) paths.model = flag_paths.model;
    if (!flag_paths.data.empty()) paths.data = flag_paths.data;
    if (flag(train_cmd, "--format")) paths.format = flag_paths.format;

    if (train_cmd->parsed()) return cmd_train(cfg, paths);
    if (eval_cmd->parsed()) return cmd_eval(paths);
    if (attend_cmd->parsed()) return cmd_attend(paths, index, dot_path);
    const bool single_cfg = flag(grad_cmd, "--cell") ||
                            flag(grad_cmd, "--attn") ||
                            flag(grad_cmd, "--query") || flag(grad_cmd, "--norm");
    return cmd_gradcheck(cfg, corrupt, single_cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const StructureError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ConsistencyError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateDenominatorError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 3;
  } catch (const UndefinedCorrelationError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
