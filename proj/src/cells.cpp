#include "treeattn/cells.hpp"

#include "treeattn/errors.hpp"
#include "treeattn/ops.hpp"

namespace treeattn {

namespace {

// Gate pre-activation from the word input alone: x·Wᵀ + b, or just b when the
// node has no word.
Tensor word_pre(const Tensor* x, const Tensor& w, const Tensor& b) {
  return x ? ops::affine(*x, w, b) : b;
}

// Childless cell: only the word input drives the gates and there is nothing
// to forget.
CellState leaf_cell(const Tensor& x, const Tensor& wi, const Tensor& bi,
                    const Tensor& wo, const Tensor& bo, const Tensor& wc,
                    const Tensor& bc) {
  Tensor i = ops::sigmoid(ops::affine(x, wi, bi));
  Tensor o = ops::sigmoid(ops::affine(x, wo, bo));
  Tensor ct = ops::tanh(ops::affine(x, wc, bc));
  Tensor c = ops::mul(i, ct);
  Tensor h = ops::mul(o, ops::tanh(c));
  return {h, c};
}

}  // namespace

void ChildSumParams::create(ParamStore& s, const std::string& prefix, int d,
                            int e) {
  for (const char* g : {"i", "o", "c", "f"}) {
    s.create(prefix + ".W" + g, d, e, true);
    s.create(prefix + ".U" + g, d, d, true);
    s.create(prefix + ".b" + g, 1, d, false);
  }
}

ChildSumParams ChildSumParams::fetch(ParamContext& ctx,
                                     const std::string& prefix) {
  return {ctx[prefix + ".Wi"], ctx[prefix + ".Ui"], ctx[prefix + ".bi"],
          ctx[prefix + ".Wo"], ctx[prefix + ".Uo"], ctx[prefix + ".bo"],
          ctx[prefix + ".Wc"], ctx[prefix + ".Uc"], ctx[prefix + ".bc"],
          ctx[prefix + ".Wf"], ctx[prefix + ".Uf"], ctx[prefix + ".bf"]};
}

void BinaryParams::create(ParamStore& s, const std::string& prefix, int d,
                          int e) {
  for (const char* g : {"i", "o", "c"}) {
    s.create(prefix + ".W" + g, d, e, true);
    s.create(prefix + ".U" + g + "l", d, d, true);
    s.create(prefix + ".U" + g + "r", d, d, true);
    s.create(prefix + ".b" + g, 1, d, false);
  }
  s.create(prefix + ".Wf", d, e, true);
  for (const char* kl : {"ll", "lr", "rl", "rr"}) {
    s.create(prefix + ".Uf_" + std::string(kl), d, d, true);
  }
  s.create(prefix + ".bf", 1, d, false);
}

BinaryParams BinaryParams::fetch(ParamContext& ctx, const std::string& prefix) {
  return {ctx[prefix + ".Wi"],    ctx[prefix + ".Uil"],
          ctx[prefix + ".Uir"],   ctx[prefix + ".bi"],
          ctx[prefix + ".Wo"],    ctx[prefix + ".Uol"],
          ctx[prefix + ".Uor"],   ctx[prefix + ".bo"],
          ctx[prefix + ".Wc"],    ctx[prefix + ".Ucl"],
          ctx[prefix + ".Ucr"],   ctx[prefix + ".bc"],
          ctx[prefix + ".Wf"],    ctx[prefix + ".Uf_ll"],
          ctx[prefix + ".Uf_lr"], ctx[prefix + ".Uf_rl"],
          ctx[prefix + ".Uf_rr"], ctx[prefix + ".bf"]};
}

void LstmParams::create(ParamStore& s, const std::string& prefix, int d,
                        int e) {
  for (const char* g : {"i", "f", "o", "c"}) {
    s.create(prefix + ".W" + g, d, e, true);
    s.create(prefix + ".U" + g, d, d, true);
    s.create(prefix + ".b" + g, 1, d, false);
  }
}

LstmParams LstmParams::fetch(ParamContext& ctx, const std::string& prefix) {
  return {ctx[prefix + ".Wi"], ctx[prefix + ".Ui"], ctx[prefix + ".bi"],
          ctx[prefix + ".Wf"], ctx[prefix + ".Uf"], ctx[prefix + ".bf"],
          ctx[prefix + ".Wo"], ctx[prefix + ".Uo"], ctx[prefix + ".bo"],
          ctx[prefix + ".Wc"], ctx[prefix + ".Uc"], ctx[prefix + ".bc"]};
}

CellState child_sum_step(const Tensor* x, const std::vector<CellState>& children,
                         const Tensor* h_override, const ChildSumParams& p) {
  Tensor h_sum;
  if (!children.empty()) {
    h_sum = children[0].h;
    for (std::size_t k = 1; k < children.size(); ++k) {
      h_sum = ops::add(h_sum, children[k].h);
    }
  }
  const Tensor* h_io = h_override ? h_override
                                  : (children.empty() ? nullptr : &h_sum);

  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    Tensor pre = word_pre(x, w, b);
    return h_io ? ops::add(pre, ops::matmul_nt(*h_io, u)) : pre;
  };
  Tensor i = ops::sigmoid(gate(p.Wi, p.Ui, p.bi));
  Tensor o = ops::sigmoid(gate(p.Wo, p.Uo, p.bo));
  Tensor ct = ops::tanh(gate(p.Wc, p.Uc, p.bc));

  Tensor c = ops::mul(i, ct);
  for (const CellState& ch : children) {
    Tensor pre = word_pre(x, p.Wf, p.bf);
    Tensor f = ops::sigmoid(ops::add(pre, ops::matmul_nt(ch.h, p.Uf)));
    c = ops::add(c, ops::mul(f, ch.c));
  }
  Tensor h = ops::mul(o, ops::tanh(c));
  return {h, c};
}

CellState binary_step(const Tensor* x, const CellState& left,
                      const CellState& right, const Tensor* hl_override,
                      const Tensor* hr_override, const BinaryParams& p,
                      bool attend_forget) {
  const Tensor& hl_io = hl_override ? *hl_override : left.h;
  const Tensor& hr_io = hr_override ? *hr_override : right.h;
  const Tensor& hl_f = attend_forget ? hl_io : left.h;
  const Tensor& hr_f = attend_forget ? hr_io : right.h;

  auto gate = [&](const Tensor& w, const Tensor& ul, const Tensor& ur,
                  const Tensor& b, const Tensor& hl, const Tensor& hr) {
    Tensor pre = word_pre(x, w, b);
    pre = ops::add(pre, ops::matmul_nt(hl, ul));
    return ops::add(pre, ops::matmul_nt(hr, ur));
  };
  Tensor i = ops::sigmoid(gate(p.Wi, p.Uil, p.Uir, p.bi, hl_io, hr_io));
  Tensor o = ops::sigmoid(gate(p.Wo, p.Uol, p.Uor, p.bo, hl_io, hr_io));
  Tensor ct = ops::tanh(gate(p.Wc, p.Ucl, p.Ucr, p.bc, hl_io, hr_io));
  Tensor fl = ops::sigmoid(gate(p.Wf, p.Uf_ll, p.Uf_lr, p.bf, hl_f, hr_f));
  Tensor fr = ops::sigmoid(gate(p.Wf, p.Uf_rl, p.Uf_rr, p.bf, hl_f, hr_f));

  Tensor c = ops::mul(i, ct);
  c = ops::add(c, ops::mul(fl, left.c));
  c = ops::add(c, ops::mul(fr, right.c));
  Tensor h = ops::mul(o, ops::tanh(c));
  return {h, c};
}

CellState lstm_step(const Tensor& x, const CellState* prev, const LstmParams& p) {
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    Tensor pre = ops::affine(x, w, b);
    return prev ? ops::add(pre, ops::matmul_nt(prev->h, u)) : pre;
  };
  Tensor i = ops::sigmoid(gate(p.Wi, p.Ui, p.bi));
  Tensor o = ops::sigmoid(gate(p.Wo, p.Uo, p.bo));
  Tensor ct = ops::tanh(gate(p.Wc, p.Uc, p.bc));
  Tensor c = ops::mul(i, ct);
  if (prev) {
    Tensor f = ops::sigmoid(gate(p.Wf, p.Uf, p.bf));
    c = ops::add(c, ops::mul(f, prev->c));
  }
  Tensor h = ops::mul(o, ops::tanh(c));
  return {h, c};
}

Tensor lstm_encode(const std::vector<Tensor>& xs, const LstmParams& p) {
  if (xs.empty()) throw ArgumentError("lstm_encode: empty sequence");
  CellState state = lstm_step(xs[0], nullptr, p);
  for (std::size_t t = 1; t < xs.size(); ++t) {
    state = lstm_step(xs[t], &state, p);
  }
  return state.h;
}

CellState encode_dep_tree(const DepTree& tree, const ChildSumParams& p,
                          const std::function<Tensor(int)>& embed,
                          const AttendFn& attend, const TraceSink& sink) {
  if (tree.size() == 0 || tree.root < 0) {
    throw StructureError("dependency tree has no root");
  }
  const auto walk = [&](int idx, const auto& self) -> CellState {
    std::vector<CellState> child_states;
    child_states.reserve(tree.children[idx].size());
    for (int c : tree.children[idx]) child_states.push_back(self(c, self));

    Tensor x = embed(idx);
    AttendResult ar;
    const Tensor* override_h = nullptr;
    if (attend && !child_states.empty()) {
      std::vector<Tensor> rows;
      rows.reserve(child_states.size());
      for (const CellState& s : child_states) rows.push_back(s.h);
      ar = attend(ops::concat_rows(rows));
      override_h = &ar.pooled;
    }
    CellState state = child_sum_step(&x, child_states, override_h, p);
    if (sink) {
      sink(NodeTrace{idx, tree.head[idx], tree.relation[idx],
                     tree.surface[idx], tree.children[idx],
                     std::move(ar.alpha)});
    }
    return state;
  };
  return walk(tree.root, walk);
}

CellState encode_bin_tree(const BinTree& tree, const BinaryParams& p,
                          const std::function<Tensor(int)>& embed,
                          const AttendFn& attend, const TraceSink& sink,
                          bool attend_forget) {
  int next_id = 0;
  int next_leaf = 0;
  const auto walk = [&](const BinTree& n, int parent,
                        const auto& self) -> CellState {
    const int id = next_id++;
    if (n.is_preterminal()) {
      Tensor x = embed(next_leaf++);
      CellState state = leaf_cell(x, p.Wi, p.bi, p.Wo, p.bo, p.Wc, p.bc);
      if (sink) sink(NodeTrace{id, parent, n.label, n.leaf, {}, {}});
      return state;
    }
    const int left_id = next_id;
    CellState l = self(*n.left, id, self);
    const int right_id = next_id;
    CellState r = self(*n.right, id, self);

    AttendResult ar;
    const Tensor* ol = nullptr;
    const Tensor* orr = nullptr;
    if (attend) {
      ar = attend(ops::concat_rows({l.h, r.h}));
      ol = &ar.left;
      orr = &ar.right;
    }
    CellState state = binary_step(nullptr, l, r, ol, orr, p, attend_forget);
    if (sink) {
      sink(NodeTrace{id, parent, n.label, "", {left_id, right_id},
                     std::move(ar.alpha)});
    }
    return state;
  };
  return walk(tree, -1, walk);
}

}  // namespace treeattn
