#pragma once

#include <functional>
#include <string>
#include <vector>

#include "treeattn/params.hpp"
#include "treeattn/tensor.hpp"
#include "treeattn/treebank.hpp"

namespace treeattn {

// One node's recurrent state; both are 1xd rows.
struct CellState {
  Tensor h;
  Tensor c;
};

// Child-sum cell weights: one U per gate, shared across children.
struct ChildSumParams {
  Tensor Wi, Ui, bi;
  Tensor Wo, Uo, bo;
  Tensor Wc, Uc, bc;
  Tensor Wf, Uf, bf;

  static void create(ParamStore& store, const std::string& prefix, int d, int e);
  static ChildSumParams fetch(ParamContext& ctx, const std::string& prefix);
};

// Binary cell weights: per-child-position U for i/o/c and a 2x2 block of
// forget cross-matrices Uf_kl (gate of child k, hidden of child l).
struct BinaryParams {
  Tensor Wi, Uil, Uir, bi;
  Tensor Wo, Uol, Uor, bo;
  Tensor Wc, Ucl, Ucr, bc;
  Tensor Wf, Uf_ll, Uf_lr, Uf_rl, Uf_rr, bf;

  static void create(ParamStore& store, const std::string& prefix, int d, int e);
  static BinaryParams fetch(ParamContext& ctx, const std::string& prefix);
};

// Standard sequential LSTM weights (single forget gate).
struct LstmParams {
  Tensor Wi, Ui, bi;
  Tensor Wf, Uf, bf;
  Tensor Wo, Uo, bo;
  Tensor Wc, Uc, bc;

  static void create(ParamStore& store, const std::string& prefix, int d, int e);
  static LstmParams fetch(ParamContext& ctx, const std::string& prefix);
};

// Attention outcome for one node.  `pooled` serves the child-sum cell;
// `left`/`right` serve the binary cell.  `alpha` is the per-child weight
// vector kept for tracing (a matrix-valued attention is reported as its
// row mean, which preserves the one-weight-per-child shape).
struct AttendResult {
  Tensor pooled;
  Tensor left, right;
  std::vector<double> alpha;
};

// Computes attention overrides from the stacked child hiddens (n x d, one row
// per child in surface order).  A default-constructed std::function means
// attention is off.
using AttendFn = std::function<AttendResult(const Tensor& m_k)>;

// Per-node trace record emitted during encoding (consumed by the CLI).
struct NodeTrace {
  int id = 0;
  int parent = -1;
  std::string label;   // dependency relation or phrase tag
  std::string token;   // surface word; empty on internal constituency nodes
  std::vector<int> child_ids;
  std::vector<double> alpha;  // empty when attention is off or node is a leaf
};
using TraceSink = std::function<void(const NodeTrace&)>;

// x may be null (no word input, e.g. internal constituency nodes).
// h_override, when given, replaces the summed child hidden in the i/o/c-tilde
// gates only; per-child forget gates always see raw child hiddens.
CellState child_sum_step(const Tensor* x, const std::vector<CellState>& children,
                         const Tensor* h_override, const ChildSumParams& p);

// Overrides replace the two child hiddens in the i/o/c-tilde gates; with
// attend_forget they are fed to the forget gates as well (the alternative
// reading of the attention hook, off by default).
CellState binary_step(const Tensor* x, const CellState& left,
                      const CellState& right, const Tensor* hl_override,
                      const Tensor* hr_override, const BinaryParams& p,
                      bool attend_forget = false);

CellState lstm_step(const Tensor& x, const CellState* prev, const LstmParams& p);

// Final hidden state of a left-to-right LSTM over the rows of xs.
Tensor lstm_encode(const std::vector<Tensor>& xs, const LstmParams& p);

// Bottom-up dependency encoding with the child-sum cell.  Every node consumes
// embed(token index); attend, when set, runs at every node with >= 1 child.
CellState encode_dep_tree(const DepTree& tree, const ChildSumParams& p,
                          const std::function<Tensor(int)>& embed,
                          const AttendFn& attend = nullptr,
                          const TraceSink& sink = nullptr);

// Bottom-up constituency encoding with the binary cell.  Preterminals consume
// embed(leaf ordinal) in a childless child-sum-style step; internal nodes take
// no word input.
CellState encode_bin_tree(const BinTree& tree, const BinaryParams& p,
                          const std::function<Tensor(int)>& embed,
                          const AttendFn& attend = nullptr,
                          const TraceSink& sink = nullptr,
                          bool attend_forget = false);

}  // namespace treeattn
