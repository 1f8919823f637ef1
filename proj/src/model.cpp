#include "treeattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "treeattn/errors.hpp"
#include "treeattn/ops.hpp"

namespace treeattn {

std::string to_string(CellKind k) {
  return k == CellKind::child_sum ? "child_sum" : "binary";
}

CellKind cell_kind_from(const std::string& s) {
  if (s == "child_sum" || s == "childsum" || s == "dependency") {
    return CellKind::child_sum;
  }
  if (s == "binary" || s == "constituency") return CellKind::binary;
  throw ConfigError("unknown cell kind '" + s +
                    "' (expected child_sum or binary)");
}

void validate(const ModelConfig& cfg) {
  if (cfg.d < 1) throw ConfigError("d must be >= 1");
  if (cfg.mlp_hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
  if (cfg.embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (cfg.attn_dim != cfg.d) {
    throw ConfigError("attn_dim (" + std::to_string(cfg.attn_dim) +
                      ") must equal d (" + std::to_string(cfg.d) +
                      "): attention mixes raw child hiddens into the gates");
  }
  // lr = 0 is legal: it freezes the weights, which the null-update
  // property tests rely on.
  if (!(cfg.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  if (cfg.grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (cfg.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.optimizer != "adagrad" && cfg.optimizer != "sgd" &&
      cfg.optimizer != "adam") {
    throw ConfigError("unknown optimizer '" + cfg.optimizer + "'");
  }
  if (!(cfg.lr_decay >= 0.0)) throw ConfigError("lr_decay must be >= 0");
  if (cfg.attend_forget && cfg.cell != CellKind::binary) {
    throw ConfigError("attend_forget needs the binary cell");
  }
  if (cfg.attention.kind != AttentionKind::none) validate_spec(cfg.attention);
}

namespace {

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not an integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not an unsigned integer");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": '" + value + "' is not a boolean");
}

}  // namespace

void apply_config_entry(ModelConfig& cfg, const std::string& key,
                        const std::string& value) {
  if (key == "cell") {
    cfg.cell = cell_kind_from(value);
  } else if (key == "attn" || key == "attention") {
    cfg.attention.kind = attention_kind_from(value);
  } else if (key == "query") {
    cfg.attention.query_source = query_source_from(value);
  } else if (key == "norm") {
    cfg.attention.normalization = normalization_from(value);
  } else if (key == "d") {
    cfg.d = parse_int(key, value);
    cfg.attn_dim = cfg.d;  // follows d unless set explicitly afterwards
  } else if (key == "mlp_hidden") {
    cfg.mlp_hidden = parse_int(key, value);
  } else if (key == "attn_dim") {
    cfg.attn_dim = parse_int(key, value);
  } else if (key == "embed_dim") {
    cfg.embed_dim = parse_int(key, value);
  } else if (key == "lr") {
    cfg.lr = parse_double(key, value);
  } else if (key == "batch") {
    cfg.batch = parse_int(key, value);
  } else if (key == "dropout") {
    cfg.dropout = parse_double(key, value);
  } else if (key == "grad_clip") {
    cfg.grad_clip = parse_double(key, value);
  } else if (key == "weight_decay") {
    cfg.weight_decay = parse_double(key, value);
  } else if (key == "epochs") {
    cfg.epochs = parse_int(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_u64(key, value);
  } else if (key == "optimizer") {
    cfg.optimizer = value;
  } else if (key == "lr_decay") {
    cfg.lr_decay = parse_double(key, value);
  } else if (key == "attend_forget") {
    cfg.attend_forget = parse_bool(key, value);
  } else if (key == "train_embeddings") {
    cfg.train_embeddings = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string config_to_json_text(const ModelConfig& cfg) {
  nlohmann::json j;
  j["cell"] = to_string(cfg.cell);
  j["attn"] = to_string(cfg.attention.kind);
  j["query"] = to_string(cfg.attention.query_source);
  j["norm"] = to_string(cfg.attention.normalization);
  j["d"] = cfg.d;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["attn_dim"] = cfg.attn_dim;
  j["embed_dim"] = cfg.embed_dim;
  j["lr"] = cfg.lr;
  j["batch"] = cfg.batch;
  j["dropout"] = cfg.dropout;
  j["grad_clip"] = cfg.grad_clip;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["optimizer"] = cfg.optimizer;
  j["lr_decay"] = cfg.lr_decay;
  j["attend_forget"] = cfg.attend_forget;
  j["train_embeddings"] = cfg.train_embeddings;
  return j.dump(2);
}

ModelConfig config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config JSON must be an object");
  ModelConfig cfg;
  // Route every entry through the flat key=value path so both config formats
  // accept exactly the same vocabulary.  "d" first: it also resets attn_dim.
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [key, val] : j.items()) {
    std::string text_value = val.is_string() ? val.get<std::string>() : val.dump();
    if (key == "d") {
      entries.insert(entries.begin(), {key, text_value});
    } else {
      entries.emplace_back(key, text_value);
    }
  }
  for (const auto& [key, value] : entries) apply_config_entry(cfg, key, value);
  return cfg;
}

void HeadParams::create(ParamStore& store, const std::string& prefix, int d,
                        int hidden) {
  store.create(prefix + ".Wprod", hidden, d, true);
  store.create(prefix + ".Wdiff", hidden, d, true);
  store.create(prefix + ".bh", 1, hidden, false);
  store.create(prefix + ".Wout", 5, hidden, true);
  store.create(prefix + ".bout", 1, 5, false);
}

HeadParams HeadParams::fetch(ParamContext& ctx, const std::string& prefix) {
  HeadParams p;
  p.Wprod = ctx[prefix + ".Wprod"];
  p.Wdiff = ctx[prefix + ".Wdiff"];
  p.bh = ctx[prefix + ".bh"];
  p.Wout = ctx[prefix + ".Wout"];
  p.bout = ctx[prefix + ".bout"];
  return p;
}

Tensor similarity_probs(const Tensor& hl, const Tensor& hr,
                        const HeadParams& p) {
  if (hl.rows() != 1 || hr.rows() != 1 || hl.cols() != hr.cols()) {
    throw DimensionError("similarity head expects two 1xd root hiddens");
  }
  Tensor h_prod = ops::mul(hl, hr);
  Tensor h_diff = ops::abs(ops::sub(hl, hr));
  Tensor pre = ops::add(
      ops::add(ops::matmul_nt(h_prod, p.Wprod), ops::matmul_nt(h_diff, p.Wdiff)),
      p.bh);
  Tensor hs = ops::sigmoid(pre);
  return ops::softmax_rows(ops::affine(hs, p.Wout, p.bout));
}

double expected_score(const Tensor& p_hat) {
  if (p_hat.rows() != 1) throw DimensionError("expected_score wants a 1xK row");
  const double* d = p_hat.data();
  double s = 0.0;
  for (int i = 0; i < p_hat.cols(); ++i) s += (i + 1) * d[i];
  return s;
}

std::vector<double> sparse_target(double y) {
  if (!(y >= 1.0 && y <= 5.0)) {
    throw ArgumentError("gold score must lie in [1,5], got " +
                        std::to_string(y));
  }
  std::vector<double> p(5, 0.0);
  const int fl = static_cast<int>(std::floor(y));
  if (fl == 5) {
    p[4] = 1.0;
    return p;
  }
  p[static_cast<std::size_t>(fl) - 1] = fl - y + 1.0;
  p[static_cast<std::size_t>(fl)] = y - fl;
  return p;
}

Tensor kl_loss(const std::vector<double>& p, const Tensor& p_hat) {
  if (p_hat.rows() != 1 ||
      p_hat.cols() != static_cast<int>(p.size())) {
    throw DimensionError("kl_loss: target and p_hat lengths differ");
  }
  double mass = 0.0;
  double p_log_p = 0.0;  // entropy term is constant, so it stays off the tape
  for (double v : p) {
    if (v < 0.0) throw ArgumentError("kl_loss: negative target mass");
    mass += v;
    if (v > 0.0) p_log_p += v * std::log(v);
  }
  if (std::abs(mass - 1.0) > 1e-9) {
    throw ArgumentError("kl_loss: target must sum to 1");
  }
  Tensor p_const(1, static_cast<int>(p.size()), p);
  Tensor cross = ops::sum_all(ops::mul(p_const, ops::log(p_hat)));
  return ops::sub(Tensor::scalar(p_log_p), cross);
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ArgumentError("pearson: length mismatch");
  if (xs.empty()) throw ArgumentError("pearson: empty input");
  const std::size_t n = xs.size();
  if (n < 2) {
    throw UndefinedCorrelationError("pearson needs at least two points");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelationError("pearson: an input has zero variance");
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

bool needs_sentence_lstm(const AttentionSpec& spec) {
  return spec.kind != AttentionKind::none &&
         (spec.query_source == QuerySource::own_sentence ||
          spec.query_source == QuerySource::other_sentence);
}

bool needs_phrase_lstm(const AttentionSpec& spec) {
  return spec.kind != AttentionKind::none &&
         spec.query_source == QuerySource::phrase;
}

// Inverted dropout: kept units are scaled by 1/(1-p) so inference needs no
// rescaling.
Tensor dropout_mask(int n, double p, Rng& rng) {
  std::vector<double> m(static_cast<std::size_t>(n));
  const double keep_scale = 1.0 / (1.0 - p);
  for (int i = 0; i < n; ++i) {
    m[static_cast<std::size_t>(i)] = rng.next_double() < p ? 0.0 : keep_scale;
  }
  return Tensor(1, n, std::move(m));
}

}  // namespace

Model::Model(ModelConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  validate(config_);
  const int d = config_.d;
  const int e = config_.embed_dim;
  store_.create("embed.table", vocab_.size(), e, false);
  if (config_.cell == CellKind::child_sum) {
    ChildSumParams::create(store_, "cs", d, e);
  } else {
    BinaryParams::create(store_, "bin", d, e);
  }
  const AttentionSpec& spec = config_.attention;
  if (spec.kind != AttentionKind::none) {
    if (needs_sentence_lstm(spec)) LstmParams::create(store_, "seq", d, e);
    if (needs_phrase_lstm(spec)) LstmParams::create(store_, "phrase", d, d);
    if (spec.kind == AttentionKind::soft) {
      SoftParams::create(store_, "soft", d);
    } else {
      KqvParams::create(store_, "attn", d, spec.kind);
    }
  }
  HeadParams::create(store_, "head", d, config_.mlp_hidden);
}

void Model::init(std::uint64_t seed) { store_.init(seed); }

void Model::set_embeddings(const Tensor& table) {
  Tensor& dst = store_.get("embed.table");
  if (table.rows() != dst.rows() || table.cols() != dst.cols()) {
    throw DimensionError("embedding table must be " + std::to_string(dst.rows()) +
                         "x" + std::to_string(dst.cols()) + ", got " +
                         std::to_string(table.rows()) + "x" +
                         std::to_string(table.cols()));
  }
  dst = table.clone();
}

std::vector<Tensor> Model::embed_tokens(const std::vector<std::string>& tokens,
                                        ParamContext& ctx,
                                        Rng* dropout_rng) const {
  std::vector<Tensor> out;
  out.reserve(tokens.size());
  const int e = config_.embed_dim;
  for (const std::string& tok : tokens) {
    const int id = vocab_.lookup(tok);
    Tensor x;
    if (config_.train_embeddings) {
      x = ops::row(ctx["embed.table"], id);
    } else {
      // Frozen vectors bypass the context so the table never joins the tape.
      const Tensor& table = store_.get("embed.table");
      const double* src = table.data() + static_cast<std::size_t>(id) * e;
      x = Tensor(1, e, std::vector<double>(src, src + e));
    }
    if (dropout_rng && config_.dropout > 0.0) {
      x = ops::mul(x, dropout_mask(e, config_.dropout, *dropout_rng));
    }
    out.push_back(std::move(x));
  }
  return out;
}

Model::Forward Model::forward(const SickExample& ex, ParamContext& ctx,
                              Rng* dropout_rng, const TraceSink& sink_a,
                              const TraceSink& sink_b) const {
  // Mask draws happen here, in token order, then twice for the root hiddens
  // below; nothing about tree shape or attention changes the draw sequence.
  std::vector<Tensor> xa = embed_tokens(ex.tokens_a, ctx, dropout_rng);
  std::vector<Tensor> xb = embed_tokens(ex.tokens_b, ctx, dropout_rng);

  const AttentionSpec& spec = config_.attention;
  QueryContext qa, qb;
  if (needs_sentence_lstm(spec)) {
    LstmParams seq = LstmParams::fetch(ctx, "seq");
    Tensor va = lstm_encode(xa, seq);
    Tensor vb = lstm_encode(xb, seq);
    qa.own_sentence_vec = va;
    qa.other_sentence_vec = vb;
    qb.own_sentence_vec = vb;
    qb.other_sentence_vec = va;
  }
  SoftParams soft;
  KqvParams kqv;
  LstmParams phrase;
  if (spec.kind == AttentionKind::soft) {
    soft = SoftParams::fetch(ctx, "soft");
  } else if (spec.kind != AttentionKind::none) {
    kqv = KqvParams::fetch(ctx, "attn", spec.kind);
  }
  if (needs_phrase_lstm(spec)) phrase = LstmParams::fetch(ctx, "phrase");

  Tensor hl, hr;
  if (config_.cell == CellKind::child_sum) {
    if (ex.dep_a.size() != static_cast<int>(ex.tokens_a.size()) ||
        ex.dep_b.size() != static_cast<int>(ex.tokens_b.size())) {
      throw StructureError("dependency tree and sentence lengths differ");
    }
    ChildSumParams cs = ChildSumParams::fetch(ctx, "cs");
    auto embed_a = [&xa](int i) { return xa[static_cast<std::size_t>(i)]; };
    auto embed_b = [&xb](int i) { return xb[static_cast<std::size_t>(i)]; };
    hl = encode_dep_tree(ex.dep_a, cs, embed_a,
                         make_attend_fn(spec, qa, soft, kqv, phrase), sink_a)
             .h;
    hr = encode_dep_tree(ex.dep_b, cs, embed_b,
                         make_attend_fn(spec, qb, soft, kqv, phrase), sink_b)
             .h;
  } else {
    if (!ex.const_a || !ex.const_b) {
      throw ArgumentError("binary cell needs constituency trees");
    }
    if (ex.const_a->leaf_count() != static_cast<int>(ex.tokens_a.size()) ||
        ex.const_b->leaf_count() != static_cast<int>(ex.tokens_b.size())) {
      throw StructureError("constituency leaves and sentence lengths differ");
    }
    BinaryParams bp = BinaryParams::fetch(ctx, "bin");
    auto embed_a = [&xa](int i) { return xa[static_cast<std::size_t>(i)]; };
    auto embed_b = [&xb](int i) { return xb[static_cast<std::size_t>(i)]; };
    hl = encode_bin_tree(*ex.const_a, bp, embed_a,
                         make_attend_fn(spec, qa, soft, kqv, phrase), sink_a,
                         config_.attend_forget)
             .h;
    hr = encode_bin_tree(*ex.const_b, bp, embed_b,
                         make_attend_fn(spec, qb, soft, kqv, phrase), sink_b,
                         config_.attend_forget)
             .h;
  }

  if (dropout_rng && config_.dropout > 0.0) {
    hl = ops::mul(hl, dropout_mask(config_.d, config_.dropout, *dropout_rng));
    hr = ops::mul(hr, dropout_mask(config_.d, config_.dropout, *dropout_rng));
  }

  HeadParams head = HeadParams::fetch(ctx, "head");
  Forward out;
  out.p_hat = similarity_probs(hl, hr, head);
  out.y_hat = expected_score(out.p_hat);
  out.loss = kl_loss(sparse_target(ex.gold), out.p_hat);
  return out;
}

EvalReport evaluate(const Model& model, const std::vector<SickExample>& data) {
  if (data.empty()) throw ArgumentError("evaluate: empty dataset");
  const int n = static_cast<int>(data.size());
  std::vector<double> y_hat(static_cast<std::size_t>(n));
  std::vector<double> gold(static_cast<std::size_t>(n));
  std::exception_ptr err;
// Forward passes are independent and untracked (worker threads never hold an
// active tape); per-index slots keep the reduction order fixed.
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      ParamContext ctx(model.store(), nullptr);
      Model::Forward f =
          model.forward(data[static_cast<std::size_t>(i)], ctx, nullptr);
      y_hat[static_cast<std::size_t>(i)] = f.y_hat;
      gold[static_cast<std::size_t>(i)] = data[static_cast<std::size_t>(i)].gold;
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  EvalReport report;
  report.n = n;
  double se = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = y_hat[static_cast<std::size_t>(i)] -
                     gold[static_cast<std::size_t>(i)];
    se += d * d;
  }
  report.mse = se / n;
  try {
    report.pearson = pearson(y_hat, gold);
    report.pearson_defined = true;
  } catch (const UndefinedCorrelationError&) {
    report.pearson = 0.0;
    report.pearson_defined = false;
  }
  return report;
}

namespace {

void fisher_yates(std::vector<int>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

std::map<std::string, Tensor> snapshot_params(const ParamStore& store) {
  std::map<std::string, Tensor> snap;
  for (const auto& [name, entry] : store.entries()) {
    snap.emplace(name, entry.value.clone());
  }
  return snap;
}

}  // namespace

TrainResult train(Model& model, const std::vector<SickExample>& train_set,
                  const std::vector<SickExample>& dev_set,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw ArgumentError("train: empty training set");
  const ModelConfig& cfg = model.config();
  if (cfg.optimizer != "adagrad") {
    throw ConfigError("optimizer '" + cfg.optimizer +
                      "' is accepted by the config but not implemented; use "
                      "adagrad");
  }

  Adagrad opt(cfg.lr, cfg.weight_decay);
  TrainResult result;
  std::map<std::string, Tensor> best;
  double best_mse = std::numeric_limits<double>::infinity();

  const int n = static_cast<int>(train_set.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle",
                                     static_cast<std::uint64_t>(epoch));
    fisher_yates(order, shuffle_rng);

    double loss_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int stop = std::min(start + cfg.batch, n);
      GradMap total;
      for (int k = start; k < stop; ++k) {
        const int idx = order[static_cast<std::size_t>(k)];
        Tape tape;
        TapeScope scope(tape);
        ParamContext ctx(model.store(), &tape);
        // Keyed by the example's dataset index, so the mask a given example
        // sees in a given epoch does not depend on the shuffle.
        Rng drop = Rng::substream(cfg.seed, "dropout",
                                  static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(idx));
        Model::Forward f =
            model.forward(train_set[static_cast<std::size_t>(idx)], ctx, &drop);
        tape.backward(f.loss);
        accumulate_grads(total, ctx.grads(tape));
        loss_sum += f.loss.value();
      }
      scale_grads(total, 1.0 / (stop - start));  // mean, not sum
      clip_gradients(total, cfg.grad_clip);
      opt.step(model.store(), total);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / n;
    if (!dev_set.empty()) {
      EvalReport dev = evaluate(model, dev_set);
      rec.dev_pearson = dev.pearson;
      rec.dev_pearson_defined = dev.pearson_defined;
      rec.dev_mse = dev.mse;
      if (dev.mse < best_mse) {
        best_mse = dev.mse;
        best = snapshot_params(model.store());
        result.best_epoch = epoch;
      }
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  if (!best.empty()) {
    for (auto& [name, value] : best) model.store().get(name) = value.clone();
  }
  return result;
}

}  // namespace treeattn
