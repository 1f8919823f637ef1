#include "treeattn/attention.hpp"

#include <cmath>
#include <utility>

#include "treeattn/errors.hpp"
#include "treeattn/ops.hpp"

namespace treeattn {

namespace {

// One weight per child for the trace: a vector alpha is copied, a matrix
// alpha is collapsed to its column means (rows are distributions, so the
// means still sum to 1).
std::vector<double> alpha_trace(const Tensor& alpha) {
  const int rows = alpha.rows(), cols = alpha.cols();
  std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < cols; ++j) {
      out[static_cast<std::size_t>(j)] += alpha.at(r, j);
    }
  }
  for (double& v : out) v /= rows;
  return out;
}

// Shapes the attended rows for both cell kinds.  `h` is m x d: the matrix
// case (m = child count) pools by row-sum / row-selection, the vector case
// is shared across reductions.
AttendResult reduce_to_result(const Tensor& h, const Tensor& alpha) {
  AttendResult r;
  r.alpha = alpha_trace(alpha);
  if (h.rows() > 1) {
    r.pooled = ops::sum_rows(h);
    if (h.rows() == 2) {
      r.left = ops::row(h, 0);
      r.right = ops::row(h, 1);
    }
  } else {
    r.pooled = h;
    r.left = h;
    r.right = h;
  }
  return r;
}

}  // namespace

std::string to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::none: return "none";
    case AttentionKind::soft: return "soft";
    case AttentionKind::model1: return "model1";
    case AttentionKind::model2: return "model2";
  }
  return "?";
}

std::string to_string(QuerySource s) {
  switch (s) {
    case QuerySource::self: return "self";
    case QuerySource::own_sentence: return "own";
    case QuerySource::other_sentence: return "other";
    case QuerySource::phrase: return "phrase";
  }
  return "?";
}

std::string to_string(Normalization n) {
  return n == Normalization::softmax ? "softmax" : "plain";
}

AttentionKind attention_kind_from(const std::string& s) {
  if (s == "none") return AttentionKind::none;
  if (s == "soft") return AttentionKind::soft;
  if (s == "model1") return AttentionKind::model1;
  if (s == "model2") return AttentionKind::model2;
  throw ConfigError("unknown attention kind '" + s +
                    "' (expected none|soft|model1|model2)");
}

QuerySource query_source_from(const std::string& s) {
  if (s == "self") return QuerySource::self;
  if (s == "own" || s == "own_sentence") return QuerySource::own_sentence;
  if (s == "other" || s == "other_sentence") return QuerySource::other_sentence;
  if (s == "phrase") return QuerySource::phrase;
  throw ConfigError("unknown query source '" + s +
                    "' (expected self|own|other|phrase)");
}

Normalization normalization_from(const std::string& s) {
  if (s == "softmax") return Normalization::softmax;
  if (s == "plain") return Normalization::plain;
  throw ConfigError("unknown normalization '" + s +
                    "' (expected softmax|plain)");
}

void validate_spec(const AttentionSpec& spec) {
  if (spec.kind == AttentionKind::soft &&
      spec.query_source == QuerySource::self) {
    throw ConfigError(
        "soft attention needs a vector query source (own|other|phrase)");
  }
}

void SoftParams::create(ParamStore& store, const std::string& prefix, int d) {
  store.create(prefix + ".Wm", d, d, true);
  store.create(prefix + ".Um", d, d, true);
  store.create(prefix + ".w", 1, d, true);
  store.create(prefix + ".Wa", d, d, true);
  store.create(prefix + ".ba", 1, d, false);
}

SoftParams SoftParams::fetch(ParamContext& ctx, const std::string& prefix) {
  return {ctx[prefix + ".Wm"], ctx[prefix + ".Um"], ctx[prefix + ".w"],
          ctx[prefix + ".Wa"], ctx[prefix + ".ba"]};
}

void KqvParams::create(ParamStore& store, const std::string& prefix, int d,
                       AttentionKind kind) {
  store.create(prefix + ".Wk", d, d, true);
  store.create(prefix + ".Wq", d, d, true);
  if (kind == AttentionKind::model1) {
    store.create(prefix + ".Wv", d, d, true);
  } else if (kind == AttentionKind::model2) {
    store.create(prefix + ".W", d, d, true);
    store.create(prefix + ".b", 1, d, false);
  }
}

KqvParams KqvParams::fetch(ParamContext& ctx, const std::string& prefix,
                           AttentionKind kind) {
  KqvParams p;
  p.Wk = ctx[prefix + ".Wk"];
  p.Wq = ctx[prefix + ".Wq"];
  if (kind == AttentionKind::model1) {
    p.Wv = ctx[prefix + ".Wv"];
  } else if (kind == AttentionKind::model2) {
    p.W = ctx[prefix + ".W"];
    p.b = ctx[prefix + ".b"];
  }
  return p;
}

Kqv kqv_project(const Tensor& m_k, const Tensor& m_q, const KqvParams& p,
                bool with_value) {
  Kqv out;
  out.key = ops::matmul_nt(m_k, p.Wk);
  out.query = ops::matmul_nt(m_q, p.Wq);
  if (with_value) out.value = ops::matmul_nt(m_k, p.Wv);
  return out;
}

Tensor align(const Tensor& query, const Tensor& key, Normalization norm) {
  Tensor scores = ops::scale(ops::matmul_nt(query, key),
                             1.0 / std::sqrt(static_cast<double>(key.cols())));
  return norm == Normalization::softmax ? ops::softmax_rows(scores)
                                        : ops::normalize_rows(scores);
}

Tensor query_vector(QuerySource source, const Tensor& m_k,
                    const QueryContext& ctx, const LstmParams* phrase) {
  switch (source) {
    case QuerySource::self:
      return m_k;
    case QuerySource::own_sentence:
      if (ctx.own_sentence_vec.empty()) {
        throw ConfigError("own-sentence query source but no sentence vector");
      }
      return ctx.own_sentence_vec;
    case QuerySource::other_sentence:
      if (ctx.other_sentence_vec.empty()) {
        throw ConfigError("other-sentence query source but no sentence vector");
      }
      return ctx.other_sentence_vec;
    case QuerySource::phrase: {
      if (!phrase) {
        throw ConfigError("phrase query source but no phrase-LSTM parameters");
      }
      std::vector<Tensor> rows;
      rows.reserve(static_cast<std::size_t>(m_k.rows()));
      for (int i = 0; i < m_k.rows(); ++i) rows.push_back(ops::row(m_k, i));
      return lstm_encode(rows, *phrase);
    }
  }
  throw ConfigError("unhandled query source");
}

AttendResult soft_attend(const Tensor& m_k, const AttentionSpec& spec,
                         const QueryContext& ctx, const SoftParams& p,
                         const LstmParams* phrase) {
  validate_spec(spec);
  const Tensor s = query_vector(spec.query_source, m_k, ctx, phrase);
  const Tensor s_term = ops::matmul_nt(s, p.Um);
  std::vector<Tensor> ms;
  ms.reserve(static_cast<std::size_t>(m_k.rows()));
  for (int i = 0; i < m_k.rows(); ++i) {
    Tensor h_i = ops::row(m_k, i);
    ms.push_back(ops::tanh(ops::add(ops::matmul_nt(h_i, p.Wm), s_term)));
  }
  const Tensor m = ops::concat_rows(ms);
  const Tensor scores = ops::matmul_nt(p.w, m);          // 1 x n
  const Tensor alpha = ops::normalize_rows(scores);      // ratio weights
  const Tensor g = ops::matmul(alpha, m_k);
  const Tensor h = ops::tanh(ops::affine(g, p.Wa, p.ba));
  return reduce_to_result(h, alpha);
}

AttendResult model1_attend(const Tensor& m_k, const AttentionSpec& spec,
                           const QueryContext& ctx, const KqvParams& p,
                           const LstmParams* phrase) {
  const Tensor m_q = query_vector(spec.query_source, m_k, ctx, phrase);
  const Kqv kqv = kqv_project(m_k, m_q, p, /*with_value=*/true);
  const Tensor alpha = align(kqv.query, kqv.key, spec.normalization);
  const Tensor h = ops::matmul(alpha, kqv.value);
  return reduce_to_result(h, alpha);
}

AttendResult model2_attend(const Tensor& m_k, const AttentionSpec& spec,
                           const QueryContext& ctx, const KqvParams& p,
                           const LstmParams* phrase) {
  const Tensor m_q = query_vector(spec.query_source, m_k, ctx, phrase);
  const Kqv kqv = kqv_project(m_k, m_q, p, /*with_value=*/false);
  const Tensor alpha = align(kqv.query, kqv.key, spec.normalization);
  const Tensor h_tilde = ops::matmul(alpha, m_k);
  Tensor h_hat;
  if (h_tilde.rows() == 1) {
    h_hat = ops::tanh(ops::affine(h_tilde, p.W, p.b));
  } else {
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(h_tilde.rows()));
    for (int i = 0; i < h_tilde.rows(); ++i) {
      rows.push_back(ops::tanh(ops::affine(ops::row(h_tilde, i), p.W, p.b)));
    }
    h_hat = ops::concat_rows(rows);
  }
  return reduce_to_result(h_hat, alpha);
}

AttendFn make_attend_fn(AttentionSpec spec, QueryContext ctx, SoftParams soft,
                        KqvParams kqv, LstmParams phrase) {
  if (spec.kind == AttentionKind::none) return nullptr;
  validate_spec(spec);
  const bool has_phrase = spec.query_source == QuerySource::phrase;
  return [spec, ctx = std::move(ctx), soft = std::move(soft),
          kqv = std::move(kqv), phrase = std::move(phrase),
          has_phrase](const Tensor& m_k) -> AttendResult {
    const LstmParams* ph = has_phrase ? &phrase : nullptr;
    switch (spec.kind) {
      case AttentionKind::soft:
        return soft_attend(m_k, spec, ctx, soft, ph);
      case AttentionKind::model1:
        return model1_attend(m_k, spec, ctx, kqv, ph);
      case AttentionKind::model2:
        return model2_attend(m_k, spec, ctx, kqv, ph);
      case AttentionKind::none:
        break;
    }
    return {};
  };
}

}  // namespace treeattn
