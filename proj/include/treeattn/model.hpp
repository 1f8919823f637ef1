#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "treeattn/attention.hpp"
#include "treeattn/cells.hpp"
#include "treeattn/params.hpp"
#include "treeattn/rng.hpp"
#include "treeattn/tensor.hpp"
#include "treeattn/treebank.hpp"

namespace treeattn {

enum class CellKind { child_sum, binary };

std::string to_string(CellKind k);
CellKind cell_kind_from(const std::string& s);

// Everything a run needs beyond the data paths.  Defaults reproduce the
// published similarity setup; toy runs shrink d/embed_dim.
struct ModelConfig {
  CellKind cell = CellKind::child_sum;
  AttentionSpec attention;  // kind none = plain tree encoder

  int d = 150;           // tree / sentence hidden size
  int mlp_hidden = 50;   // similarity head width
  int attn_dim = 150;    // kept distinct in name only; must equal d
  int embed_dim = 300;

  double lr = 0.025;
  int batch = 25;
  double dropout = 0.1;
  double grad_clip = 5.0;
  double weight_decay = 1e-5;
  int epochs = 15;
  std::uint64_t seed = 42;

  // Only adagrad is implemented; "sgd"/"adam" parse but train() rejects them.
  // lr_decay is the per-epoch decay the sgd stub would use.
  std::string optimizer = "adagrad";
  double lr_decay = 0.05;

  bool attend_forget = false;      // binary cell: overrides reach forget gates
  bool train_embeddings = false;   // track embed.table on the tape
};

// Throws ConfigError on out-of-range fields and unsupported combinations
// (attn_dim != d, soft attention with the self query, attend_forget without
// the binary cell, dropout outside [0,1), ...).
void validate(const ModelConfig& cfg);

// Applies one "key=value" setting (the flat config-file / CLI vocabulary:
// cell, attn, query, norm, d, lr, ...).  Unknown keys throw ConfigError.
void apply_config_entry(ModelConfig& cfg, const std::string& key,
                        const std::string& value);

// Flat JSON object with the same keys apply_config_entry accepts.
std::string config_to_json_text(const ModelConfig& cfg);
ModelConfig config_from_json_text(const std::string& text);

// Similarity head weights: gated combination of the element-wise product and
// absolute difference of the two root hiddens, then a 5-way score softmax.
struct HeadParams {
  Tensor Wprod, Wdiff, bh;  // mlp_hidden x d, mlp_hidden x d, 1 x mlp_hidden
  Tensor Wout, bout;        // 5 x mlp_hidden, 1 x 5

  static void create(ParamStore& store, const std::string& prefix, int d,
                     int hidden);
  static HeadParams fetch(ParamContext& ctx, const std::string& prefix);
};

// p-hat over scores 1..5 from two root hiddens.
Tensor similarity_probs(const Tensor& hl, const Tensor& hr,
                        const HeadParams& p);

// Expected score sum_i i * p_hat[i-1]; always in (1, 5).
double expected_score(const Tensor& p_hat);

// Two-hot target: mass floor(y)-y+1 on score floor(y), the rest on the next
// score.  y must lie in [1, 5].
std::vector<double> sparse_target(double y);

// KL(p || p_hat) where p is a constant distribution; 0 * log 0 terms vanish.
// Returns a tracked 1x1 scalar when p_hat is tracked.
Tensor kl_loss(const std::vector<double>& p, const Tensor& p_hat);

// Sample Pearson correlation.  ArgumentError on mismatched/empty input,
// UndefinedCorrelationError when either side has zero variance (n < 2
// included).
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// The full similarity model: parameter store + config + vocabulary.  The
// constructor registers every parameter the config implies (zero-filled);
// call init() for fresh runs or fill tensors from a checkpoint.
class Model {
 public:
  Model(ModelConfig config, Vocabulary vocab);

  // Random weights on named substreams of seed; embeddings stay zero.
  void init(std::uint64_t seed);

  // Copies a vocab-size x embed_dim table into embed.table.
  void set_embeddings(const Tensor& table);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  struct Forward {
    Tensor p_hat;      // 1 x 5
    double y_hat = 0;  // expected score
    Tensor loss;       // 1 x 1 KL against the sparse target
  };

  // One labelled pair through the whole pipeline.  dropout_rng non-null means
  // training mode (inverted dropout on word vectors and root hiddens; mask
  // draws happen in a fixed order, independent of tree shape).  Trace sinks
  // receive per-node records for the two encodings.
  Forward forward(const SickExample& ex, ParamContext& ctx, Rng* dropout_rng,
                  const TraceSink& sink_a = nullptr,
                  const TraceSink& sink_b = nullptr) const;

 private:
  std::vector<Tensor> embed_tokens(const std::vector<std::string>& tokens,
                                   ParamContext& ctx, Rng* dropout_rng) const;

  ModelConfig config_;
  Vocabulary vocab_;
  ParamStore store_;
};

struct EvalReport {
  double pearson = 0.0;
  bool pearson_defined = false;  // false when predictions or golds are flat
  double mse = 0.0;
  int n = 0;
};

// Forward-only scoring.  Examples fan out across threads into per-index
// slots; the reduction is serial, so the report is bit-stable.
EvalReport evaluate(const Model& model, const std::vector<SickExample>& data);

struct EpochRecord {
  int epoch = 0;             // 1-based
  double train_loss = 0.0;   // mean KL over the epoch
  double dev_pearson = 0.0;
  bool dev_pearson_defined = false;
  double dev_mse = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 1-based, by dev MSE; 0 when no dev set was given
};

// Adagrad training with shuffled mini-batches (mean gradient, global norm
// clip).  After the last epoch the store holds the weights of the best
// dev-MSE epoch (or the final weights when dev is empty).  Bit-identical
// across runs with the same config and data.  on_epoch, when set, fires
// after each epoch's dev pass.
using EpochCallback = std::function<void(const EpochRecord&)>;
TrainResult train(Model& model, const std::vector<SickExample>& train_set,
                  const std::vector<SickExample>& dev_set,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace treeattn
