#pragma once

#include <string>
#include <vector>

#include "treeattn/cells.hpp"
#include "treeattn/params.hpp"
#include "treeattn/tensor.hpp"

namespace treeattn {

enum class AttentionKind { none, soft, model1, model2 };
enum class QuerySource { self, own_sentence, other_sentence, phrase };
enum class Normalization { softmax, plain };

struct AttentionSpec {
  AttentionKind kind = AttentionKind::none;
  QuerySource query_source = QuerySource::other_sentence;
  Normalization normalization = Normalization::softmax;
};

std::string to_string(AttentionKind k);
std::string to_string(QuerySource s);
std::string to_string(Normalization n);
AttentionKind attention_kind_from(const std::string& s);
QuerySource query_source_from(const std::string& s);
Normalization normalization_from(const std::string& s);

// Rejects combinations with no defined semantics (soft + self query).
void validate_spec(const AttentionSpec& spec);

// Sentence vectors available to the per-node attention; either may be empty
// when the configured query source never reads it.
struct QueryContext {
  Tensor own_sentence_vec;    // 1xd, sequential LSTM over the sentence being encoded
  Tensor other_sentence_vec;  // 1xd, same encoder over the paired sentence
};

// Soft-attention weights: child transform, query transform, score vector, and
// the output affine map.
struct SoftParams {
  Tensor Wm, Um, w, Wa, ba;

  static void create(ParamStore& store, const std::string& prefix, int d);
  static SoftParams fetch(ParamContext& ctx, const std::string& prefix);
};

// Key/query/value projections.  Model 1 uses Wk/Wq/Wv; model 2 drops the
// value projection and instead owns the output affine map W/b.
struct KqvParams {
  Tensor Wk, Wq, Wv;  // Wv empty for model 2
  Tensor W, b;        // empty for model 1

  static void create(ParamStore& store, const std::string& prefix, int d,
                     AttentionKind kind);
  static KqvParams fetch(ParamContext& ctx, const std::string& prefix,
                         AttentionKind kind);
};

struct Kqv {
  Tensor key;    // n x d
  Tensor query;  // m x d
  Tensor value;  // n x d, empty when with_value is false
};

// key = M_k·Wkᵀ, query = M_q·Wqᵀ, value = M_k·Wvᵀ.
Kqv kqv_project(const Tensor& m_k, const Tensor& m_q, const KqvParams& p,
                bool with_value);

// scores = query·keyᵀ/√d, then row-wise softmax or plain ratio normalization.
// Plain mode inherits the sign-preserving epsilon and the degenerate-
// denominator error from the normalization op.
Tensor align(const Tensor& query, const Tensor& key, Normalization norm);

// Resolves the query rows for a source: self passes M_k through; the sentence
// sources read ctx (ConfigError when the needed vector is missing); phrase
// runs a dedicated LSTM over the rows of M_k in order.
Tensor query_vector(QuerySource source, const Tensor& m_k,
                    const QueryContext& ctx, const LstmParams* phrase);

// The weighted-ratio mechanism over child hiddens given an external sentence
// or phrase vector.  The ratio weights follow the printed form — not a
// softmax — with an epsilon-guarded denominator; spec.normalization does not
// apply here.  alpha rows always come back through result.alpha.
AttendResult soft_attend(const Tensor& m_k, const AttentionSpec& spec,
                         const QueryContext& ctx, const SoftParams& p,
                         const LstmParams* phrase);

// Scaled dot-product attention with a value projection; matrix-valued
// attention (self query) pools by row-sum for the child-sum cell and by
// row-selection for the binary cell, vector-valued attention is shared.
AttendResult model1_attend(const Tensor& m_k, const AttentionSpec& spec,
                           const QueryContext& ctx, const KqvParams& p,
                           const LstmParams* phrase);

// Like model 1 but attends over the raw child hiddens and finishes with a
// tanh affine layer.
AttendResult model2_attend(const Tensor& m_k, const AttentionSpec& spec,
                           const QueryContext& ctx, const KqvParams& p,
                           const LstmParams* phrase);

// Binds a spec and its parameters into the callback the tree encoders take.
// Returns an empty function for kind none.  Tensors are captured by value, so
// the closure stays valid for the whole pass.
AttendFn make_attend_fn(AttentionSpec spec, QueryContext ctx, SoftParams soft,
                        KqvParams kqv, LstmParams phrase);

}  // namespace treeattn
