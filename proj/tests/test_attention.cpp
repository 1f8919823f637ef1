#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "tensor_cast.hpp"
#include "treeattn/attention.hpp"
#include "treeattn/errors.hpp"
#include "treeattn/gradcheck.hpp"
#include "treeattn/ops.hpp"
#include "treeattn/params.hpp"
#include "treeattn/rng.hpp"

using namespace treeattn;
using testutil::random_tensor;
using testutil::to_mat;
using testutil::to_vec;

namespace {

constexpr double kOracleTol = 1e-10;

Tensor identity(int d) {
  Tensor t = Tensor::zeros(d, d);
  for (int i = 0; i < d; ++i) t.set(i, i, 1.0);
  return t;
}

std::vector<oracle::Vec> rows_of(const Tensor& m) {
  std::vector<oracle::Vec> rows;
  for (int i = 0; i < m.rows(); ++i) {
    rows.emplace_back(m.data() + static_cast<std::size_t>(i) * m.cols(),
                      m.data() + static_cast<std::size_t>(i + 1) * m.cols());
  }
  return rows;
}

// Initialized store holding one of everything the mechanisms need.
ParamStore attn_store(int d, std::uint64_t seed) {
  ParamStore s;
  SoftParams::create(s, "soft", d);
  KqvParams::create(s, "m1", d, AttentionKind::model1);
  KqvParams::create(s, "m2", d, AttentionKind::model2);
  LstmParams::create(s, "ph", d, d);
  s.init(seed, 0.7);
  Rng rng(seed + 13);
  for (auto& [name, entry] : s.entries()) {
    if (!entry.random_init) {
      entry.value = random_tensor(entry.value.rows(), entry.value.cols(), rng,
                                  -0.2, 0.2);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("spec validation rejects soft attention with a self query") {
  AttentionSpec bad{AttentionKind::soft, QuerySource::self,
                    Normalization::softmax};
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);
  for (AttentionKind k : {AttentionKind::model1, AttentionKind::model2}) {
    AttentionSpec ok{k, QuerySource::self, Normalization::softmax};
    CHECK_NOTHROW(validate_spec(ok));
  }
  CHECK(attention_kind_from("model1") == AttentionKind::model1);
  CHECK_THROWS_AS((void)attention_kind_from("modelX"), ConfigError);
  CHECK(query_source_from("own_sentence") == QuerySource::own_sentence);
  CHECK(normalization_from("plain") == Normalization::plain);
  CHECK_THROWS_AS((void)normalization_from("ratio"), ConfigError);
}

TEST_CASE("key/query/value projection") {
  const int d = 3;
  Rng rng(31);
  const Tensor m_k = random_tensor(2, d, rng);
  const Tensor m_q = random_tensor(1, d, rng);

  SUBCASE("identity weights pass the inputs through") {
    KqvParams p;
    p.Wk = identity(d);
    p.Wq = identity(d);
    p.Wv = identity(d);
    const Kqv out = kqv_project(m_k, m_q, p, true);
    CHECK(std::memcmp(out.key.data(), m_k.data(),
                      m_k.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(out.query.data(), m_q.data(),
                      m_q.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(out.value.data(), m_k.data(),
                      m_k.size() * sizeof(double)) == 0);
  }
  SUBCASE("random weights match hand multiplication") {
    KqvParams p;
    p.Wk = random_tensor(d, d, rng);
    p.Wq = random_tensor(d, d, rng);
    p.Wv = random_tensor(d, d, rng);
    const Kqv out = kqv_project(m_k, m_q, p, true);
    const auto hs = rows_of(m_k);
    for (int i = 0; i < 2; ++i) {
      const oracle::Vec want = oracle::matvec(to_mat(p.Wk), hs[i]);
      CHECK(testutil::max_rel_diff(ops::row(out.key, i), want) <= kOracleTol);
    }
    const oracle::Vec wq = oracle::matvec(to_mat(p.Wq), to_vec(m_q));
    CHECK(testutil::max_rel_diff(out.query, wq) <= kOracleTol);
  }
  SUBCASE("value projection is omitted on request") {
    KqvParams p;
    p.Wk = identity(d);
    p.Wq = identity(d);
    const Kqv out = kqv_project(m_k, m_q, p, false);
    CHECK(out.value.empty());
  }
  SUBCASE("width mismatch is a dimension error") {
    KqvParams p;
    p.Wk = identity(d);
    p.Wq = identity(d);
    p.Wv = identity(d);
    CHECK_THROWS_AS((void)kqv_project(random_tensor(2, d + 1, rng), m_q, p,
                                      true),
                    DimensionError);
  }
}

TEST_CASE("align: pinned distributions") {
  SUBCASE("two identical key rows split the mass 0.5/0.5") {
    Rng rng(41);
    const Tensor one_key = random_tensor(1, 4, rng);
    const Tensor key = ops::concat_rows({one_key, one_key});
    const Tensor query = random_tensor(1, 4, rng);
    const Tensor alpha = align(query, key, Normalization::softmax);
    CHECK(alpha.at(0, 0) == 0.5);
    CHECK(alpha.at(0, 1) == 0.5);
  }
  SUBCASE("single key: probability 1 in both modes") {
    Rng rng(42);
    const Tensor key = random_tensor(1, 4, rng);
    const Tensor query = random_tensor(1, 4, rng);
    CHECK(align(query, key, Normalization::softmax).value() == 1.0);
    CHECK(align(query, key, Normalization::plain).value() == 1.0);
  }
  SUBCASE("identity-derived scores reproduce the closed form") {
    // query = key = 2^(1/4) * I: scores come out as I after the 1/sqrt(2)
    // scaling, so each softmax row is [e, 1] / (e + 1).
    const double c = std::pow(2.0, 0.25);
    Tensor qk = Tensor::zeros(2, 2);
    qk.set(0, 0, c);
    qk.set(1, 1, c);
    const Tensor alpha = align(qk, qk, Normalization::softmax);
    const double e = std::exp(1.0);
    CHECK(alpha.at(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(alpha.at(0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(alpha.at(0, 0) == doctest::Approx(e / (e + 1)).epsilon(1e-10));
    CHECK(alpha.at(1, 1) == doctest::Approx(e / (e + 1)).epsilon(1e-10));
    CHECK(alpha.at(0, 0) + alpha.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("plain mode divides by the row sum") {
    // scores = [2, 2]/sqrt(1) on d=1 vectors: both entries 0.5.
    const Tensor query(1, 1, {2.0});
    const Tensor key(2, 1, {1.0, 1.0});
    const Tensor alpha = align(query, key, Normalization::plain);
    CHECK(alpha.at(0, 0) == 0.5);
    CHECK(alpha.at(0, 1) == 0.5);
  }
  SUBCASE("plain mode reports a vanishing denominator") {
    const Tensor query(1, 2, {1.0, 0.0});
    const Tensor key(2, 2, {1.0, 0.0, -1.0, 0.0});
    CHECK_THROWS_AS((void)align(query, key, Normalization::plain),
                    DegenerateDenominatorError);
  }
  SUBCASE("softmax rows shrug off per-row constant shifts") {
    Rng rng(43);
    Tensor scores = random_tensor(2, 3, rng);
    const Tensor base = ops::softmax_rows(scores);
    Tensor shifted = scores.clone();
    for (int j = 0; j < 3; ++j) {
      shifted.set(0, j, shifted.at(0, j) + 11.5);
      shifted.set(1, j, shifted.at(1, j) - 3.25);
    }
    const Tensor moved = ops::softmax_rows(shifted);
    for (int r = 0; r < 2; ++r) {
      for (int j = 0; j < 3; ++j) {
        CHECK(moved.at(r, j) == doctest::Approx(base.at(r, j)).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("query resolution per source") {
  const int d = 4;
  ParamStore store = attn_store(d, 55);
  ParamContext pc(store, nullptr);
  const LstmParams phrase = LstmParams::fetch(pc, "ph");

  Rng rng(56);
  const Tensor m_k = random_tensor(3, d, rng);
  QueryContext ctx;
  ctx.own_sentence_vec = random_tensor(1, d, rng);
  ctx.other_sentence_vec = random_tensor(1, d, rng);

  // self: pass-through, same storage.
  const Tensor self_q = query_vector(QuerySource::self, m_k, ctx, nullptr);
  CHECK(self_q.data() == m_k.data());

  CHECK(query_vector(QuerySource::own_sentence, m_k, ctx, nullptr).data() ==
        ctx.own_sentence_vec.data());
  CHECK(query_vector(QuerySource::other_sentence, m_k, ctx, nullptr).data() ==
        ctx.other_sentence_vec.data());

  QueryContext empty;
  CHECK_THROWS_AS(
      (void)query_vector(QuerySource::own_sentence, m_k, empty, nullptr),
      ConfigError);
  CHECK_THROWS_AS(
      (void)query_vector(QuerySource::other_sentence, m_k, empty, nullptr),
      ConfigError);
  CHECK_THROWS_AS(
      (void)query_vector(QuerySource::phrase, m_k, ctx, nullptr), ConfigError);

  // phrase: a dedicated LSTM read over the child rows in order.
  const Tensor pq = query_vector(QuerySource::phrase, m_k, ctx, &phrase);
  std::vector<Tensor> rows;
  for (int i = 0; i < m_k.rows(); ++i) rows.push_back(ops::row(m_k, i));
  const Tensor want = lstm_encode(rows, phrase);
  CHECK(std::memcmp(pq.data(), want.data(), want.size() * sizeof(double)) == 0);
}

TEST_CASE("ratio-weighted attention") {
  const int d = 4;
  ParamStore store = attn_store(d, 65);
  ParamContext pc(store, nullptr);
  const SoftParams p = SoftParams::fetch(pc, "soft");
  AttentionSpec spec{AttentionKind::soft, QuerySource::other_sentence,
                     Normalization::softmax};

  Rng rng(66);
  QueryContext ctx;
  ctx.other_sentence_vec = random_tensor(1, d, rng);

  SUBCASE("single child gets weight 1.0 exactly") {
    const Tensor m_k = random_tensor(1, d, rng);
    const AttendResult r = soft_attend(m_k, spec, ctx, p, nullptr);
    REQUIRE(r.alpha.size() == 1);
    CHECK(r.alpha[0] == 1.0);
  }
  SUBCASE("identical children share the mass uniformly") {
    const Tensor row = random_tensor(1, d, rng);
    const Tensor m_k = ops::concat_rows({row, row, row});
    const AttendResult r = soft_attend(m_k, spec, ctx, p, nullptr);
    REQUIRE(r.alpha.size() == 3);
    CHECK(r.alpha[0] == r.alpha[1]);  // bitwise: same numerator, same denom
    CHECK(r.alpha[1] == r.alpha[2]);
    CHECK(r.alpha[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("weights sum to 1 even when individual entries go negative") {
    // The printed form is a ratio, not a softmax; negative scores are legal.
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor m_k = random_tensor(3, d, rng, -2.0, 2.0);
      AttendResult r;
      try {
        r = soft_attend(m_k, spec, ctx, p, nullptr);
      } catch (const DegenerateDenominatorError&) {
        continue;  // legitimately rejected draw
      }
      double sum = 0.0;
      for (double a : r.alpha) sum += a;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("matches the scripted equations") {
    const Tensor m_k = random_tensor(3, d, rng);
    const AttendResult got = soft_attend(m_k, spec, ctx, p, nullptr);
    const oracle::SoftW w{to_mat(p.Wm), to_mat(p.Um), to_vec(p.w),
                          to_mat(p.Wa), to_vec(p.ba)};
    const oracle::SoftOut want =
        oracle::soft_attention(rows_of(m_k), to_vec(ctx.other_sentence_vec), w);
    REQUIRE(got.alpha.size() == want.alpha.size());
    for (std::size_t i = 0; i < want.alpha.size(); ++i) {
      CHECK(got.alpha[i] == doctest::Approx(want.alpha[i]).epsilon(kOracleTol));
    }
    CHECK(testutil::max_rel_diff(got.pooled, want.h) <= kOracleTol);
  }
  SUBCASE("phrase query routes through the phrase LSTM") {
    AttentionSpec pspec{AttentionKind::soft, QuerySource::phrase,
                        Normalization::softmax};
    const LstmParams phrase = LstmParams::fetch(pc, "ph");
    const Tensor m_k = random_tensor(2, d, rng);
    const AttendResult got = soft_attend(m_k, pspec, ctx, p, &phrase);

    const oracle::LstmW lw{to_mat(phrase.Wi), to_mat(phrase.Ui), to_vec(phrase.bi),
                           to_mat(phrase.Wf), to_mat(phrase.Uf), to_vec(phrase.bf),
                           to_mat(phrase.Wo), to_mat(phrase.Uo), to_vec(phrase.bo),
                           to_mat(phrase.Wc), to_mat(phrase.Uc), to_vec(phrase.bc)};
    const oracle::Vec s = oracle::lstm_encode(rows_of(m_k), lw);
    const oracle::SoftW w{to_mat(p.Wm), to_mat(p.Um), to_vec(p.w),
                          to_mat(p.Wa), to_vec(p.ba)};
    const oracle::SoftOut want = oracle::soft_attention(rows_of(m_k), s, w);
    CHECK(testutil::max_rel_diff(got.pooled, want.h) <= kOracleTol);
  }
}

TEST_CASE("scaled dot-product attention with values") {
  const int d = 4;
  ParamStore store = attn_store(d, 75);
  ParamContext pc(store, nullptr);
  const KqvParams p = KqvParams::fetch(pc, "m1", AttentionKind::model1);
  Rng rng(76);
  QueryContext ctx;
  ctx.own_sentence_vec = random_tensor(1, d, rng);
  ctx.other_sentence_vec = random_tensor(1, d, rng);

  SUBCASE("single child: the override is exactly the value row") {
    const Tensor m_k = random_tensor(1, d, rng);
    for (QuerySource src : {QuerySource::self, QuerySource::own_sentence,
                            QuerySource::other_sentence}) {
      AttentionSpec spec{AttentionKind::model1, src, Normalization::softmax};
      const AttendResult r = model1_attend(m_k, spec, ctx, p, nullptr);
      const Tensor value = ops::matmul_nt(m_k, p.Wv);
      CHECK(std::memcmp(r.pooled.data(), value.data(),
                        value.size() * sizeof(double)) == 0);
      REQUIRE(r.alpha.size() == 1);
      CHECK(r.alpha[0] == 1.0);
    }
  }
  SUBCASE("self query, identical children: overrides average the values") {
    const Tensor row = random_tensor(1, d, rng);
    const Tensor m_k = ops::concat_rows({row, row});
    AttentionSpec spec{AttentionKind::model1, QuerySource::self,
                       Normalization::softmax};
    const AttendResult r = model1_attend(m_k, spec, ctx, p, nullptr);
    const Tensor value = ops::matmul_nt(m_k, p.Wv);
    for (int j = 0; j < d; ++j) {
      const double mean = (value.at(0, j) + value.at(1, j)) / 2.0;
      CHECK(r.left.at(0, j) == doctest::Approx(mean).epsilon(1e-15));
      CHECK(r.right.at(0, j) == doctest::Approx(mean).epsilon(1e-15));
    }
    // alpha trace follows the per-child column means.
    REQUIRE(r.alpha.size() == 2);
    CHECK(r.alpha[0] == 0.5);
    CHECK(r.alpha[1] == 0.5);
  }
  SUBCASE("vector query matches the scripted equations") {
    const Tensor m_k = random_tensor(3, d, rng);
    AttentionSpec spec{AttentionKind::model1, QuerySource::other_sentence,
                       Normalization::softmax};
    const AttendResult got = model1_attend(m_k, spec, ctx, p, nullptr);
    const oracle::KqvW w{to_mat(p.Wk), to_mat(p.Wq), to_mat(p.Wv), {}, {}};
    const oracle::AttnOut want = oracle::model1(
        rows_of(m_k), {to_vec(ctx.other_sentence_vec)}, w, true);
    CHECK(testutil::max_rel_diff(got.pooled, want.h[0]) <= kOracleTol);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(got.alpha[k] ==
            doctest::Approx(want.alpha[0][k]).epsilon(kOracleTol));
    }
    // Vector-valued attention: both binary overrides share the pooled row.
    CHECK(std::memcmp(got.left.data(), got.pooled.data(),
                      got.pooled.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(got.right.data(), got.pooled.data(),
                      got.pooled.size() * sizeof(double)) == 0);
  }
  SUBCASE("self query on two children matches the scripted equations") {
    const Tensor m_k = random_tensor(2, d, rng);
    AttentionSpec spec{AttentionKind::model1, QuerySource::self,
                       Normalization::softmax};
    const AttendResult got = model1_attend(m_k, spec, ctx, p, nullptr);
    const oracle::KqvW w{to_mat(p.Wk), to_mat(p.Wq), to_mat(p.Wv), {}, {}};
    const oracle::AttnOut want =
        oracle::model1(rows_of(m_k), rows_of(m_k), w, true);
    CHECK(testutil::max_rel_diff(got.left, want.h[0]) <= kOracleTol);
    CHECK(testutil::max_rel_diff(got.right, want.h[1]) <= kOracleTol);
    // Child-sum reduction: column sums over the override rows.
    for (int j = 0; j < d; ++j) {
      CHECK(got.pooled.at(0, j) ==
            doctest::Approx(want.h[0][j] + want.h[1][j]).epsilon(1e-12));
    }
    // Matrix alpha collapses to column means for the trace.
    for (int k = 0; k < 2; ++k) {
      const double mean = (want.alpha[0][static_cast<std::size_t>(k)] +
                           want.alpha[1][static_cast<std::size_t>(k)]) /
                          2.0;
      CHECK(got.alpha[static_cast<std::size_t>(k)] ==
            doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("plain normalization variant agrees with the oracle") {
    const Tensor m_k = random_tensor(3, d, rng);
    AttentionSpec spec{AttentionKind::model1, QuerySource::other_sentence,
                       Normalization::plain};
    const AttendResult got = model1_attend(m_k, spec, ctx, p, nullptr);
    const oracle::KqvW w{to_mat(p.Wk), to_mat(p.Wq), to_mat(p.Wv), {}, {}};
    const oracle::AttnOut want = oracle::model1(
        rows_of(m_k), {to_vec(ctx.other_sentence_vec)}, w, false);
    CHECK(testutil::max_rel_diff(got.pooled, want.h[0]) <= kOracleTol);
  }
}

TEST_CASE("value-free attention with the tanh output layer") {
  const int d = 4;
  ParamStore store = attn_store(d, 85);
  ParamContext pc(store, nullptr);
  const KqvParams p = KqvParams::fetch(pc, "m2", AttentionKind::model2);
  Rng rng(86);
  QueryContext ctx;
  ctx.other_sentence_vec = random_tensor(1, d, rng);

  SUBCASE("single child: tanh layer on the child itself") {
    const Tensor m_k = random_tensor(1, d, rng);
    AttentionSpec spec{AttentionKind::model2, QuerySource::other_sentence,
                       Normalization::softmax};
    const AttendResult r = model2_attend(m_k, spec, ctx, p, nullptr);
    const Tensor want = ops::tanh(ops::affine(m_k, p.W, p.b));
    CHECK(testutil::max_rel_diff(r.pooled, to_vec(want)) <= 1e-15);
  }
  SUBCASE("zero output layer collapses everything to zero") {
    KqvParams zp = p;
    zp.W = Tensor::zeros(d, d);
    zp.b = Tensor::zeros(1, d);
    const Tensor m_k = random_tensor(2, d, rng);
    AttentionSpec spec{AttentionKind::model2, QuerySource::other_sentence,
                       Normalization::softmax};
    const AttendResult r = model2_attend(m_k, spec, ctx, zp, nullptr);
    for (int j = 0; j < d; ++j) CHECK(r.pooled.at(0, j) == 0.0);
  }
  SUBCASE("vector query matches the scripted equations") {
    const Tensor m_k = random_tensor(2, d, rng);
    AttentionSpec spec{AttentionKind::model2, QuerySource::other_sentence,
                       Normalization::softmax};
    const AttendResult got = model2_attend(m_k, spec, ctx, p, nullptr);
    const oracle::KqvW w{to_mat(p.Wk), to_mat(p.Wq), {}, to_mat(p.W),
                         to_vec(p.b)};
    const oracle::AttnOut want = oracle::model2(
        rows_of(m_k), {to_vec(ctx.other_sentence_vec)}, w, true);
    CHECK(testutil::max_rel_diff(got.pooled, want.h[0]) <= kOracleTol);
  }
  SUBCASE("self query: per-row tanh then row reductions") {
    const Tensor m_k = random_tensor(2, d, rng);
    AttentionSpec spec{AttentionKind::model2, QuerySource::self,
                       Normalization::softmax};
    const AttendResult got = model2_attend(m_k, spec, ctx, p, nullptr);
    const oracle::KqvW w{to_mat(p.Wk), to_mat(p.Wq), {}, to_mat(p.W),
                         to_vec(p.b)};
    const oracle::AttnOut want =
        oracle::model2(rows_of(m_k), rows_of(m_k), w, true);
    CHECK(testutil::max_rel_diff(got.left, want.h[0]) <= kOracleTol);
    CHECK(testutil::max_rel_diff(got.right, want.h[1]) <= kOracleTol);
    for (int j = 0; j < d; ++j) {
      CHECK(got.pooled.at(0, j) ==
            doctest::Approx(want.h[0][j] + want.h[1][j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("every kind/source combination keeps the width contract") {
  const int d = 5;
  ParamStore store = attn_store(d, 95);
  ParamContext pc(store, nullptr);
  const SoftParams soft = SoftParams::fetch(pc, "soft");
  const KqvParams m1 = KqvParams::fetch(pc, "m1", AttentionKind::model1);
  const KqvParams m2 = KqvParams::fetch(pc, "m2", AttentionKind::model2);
  const LstmParams phrase = LstmParams::fetch(pc, "ph");

  Rng rng(96);
  QueryContext ctx;
  ctx.own_sentence_vec = random_tensor(1, d, rng);
  ctx.other_sentence_vec = random_tensor(1, d, rng);
  const Tensor m_k = random_tensor(2, d, rng);

  auto check_result = [&](const AttendResult& r) {
    CHECK(r.pooled.rows() == 1);
    CHECK(r.pooled.cols() == d);
    CHECK(r.left.rows() == 1);
    CHECK(r.left.cols() == d);
    CHECK(r.right.rows() == 1);
    CHECK(r.right.cols() == d);
    CHECK(r.alpha.size() == 2);
    double sum = 0.0;
    for (double a : r.alpha) sum += a;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  };

  const std::vector<QuerySource> sources = {
      QuerySource::self, QuerySource::own_sentence, QuerySource::other_sentence,
      QuerySource::phrase};
  for (QuerySource src : sources) {
    AttentionSpec s1{AttentionKind::model1, src, Normalization::softmax};
    check_result(model1_attend(m_k, s1, ctx, m1,
                               src == QuerySource::phrase ? &phrase : nullptr));
    AttentionSpec s2{AttentionKind::model2, src, Normalization::softmax};
    check_result(model2_attend(m_k, s2, ctx, m2,
                               src == QuerySource::phrase ? &phrase : nullptr));
  }
  for (QuerySource src : {QuerySource::own_sentence,
                          QuerySource::other_sentence, QuerySource::phrase}) {
    AttentionSpec ss{AttentionKind::soft, src, Normalization::softmax};
    check_result(soft_attend(m_k, ss, ctx, soft,
                             src == QuerySource::phrase ? &phrase : nullptr));
  }
}

TEST_CASE("attention gradients agree with central differences") {
  const int d = 4;
  GradCheckOptions opts;
  opts.tolerance = 1e-4;

  auto run = [&](AttentionKind kind, QuerySource src) {
    ParamStore store = attn_store(d, 200 + static_cast<std::uint64_t>(kind) * 10 +
                                         static_cast<std::uint64_t>(src));
    store.create("hs", 2, d, true);
    store.create("q", 1, d, true);
    Rng rng(7);
    store.get("hs") = random_tensor(2, d, rng, -0.8, 0.8);
    store.get("q") = random_tensor(1, d, rng, -0.8, 0.8);

    const AttentionSpec spec{kind, src, Normalization::softmax};
    GradCheckReport rep = check_gradients(
        store,
        [&](ParamContext& ctx) {
          QueryContext qc;
          qc.own_sentence_vec = ctx["q"];
          qc.other_sentence_vec = ctx["q"];
          const Tensor hs = ctx["hs"];
          const LstmParams phrase = LstmParams::fetch(ctx, "ph");
          AttendResult r;
          switch (kind) {
            case AttentionKind::soft:
              r = soft_attend(hs, spec, qc, SoftParams::fetch(ctx, "soft"),
                              &phrase);
              break;
            case AttentionKind::model1:
              r = model1_attend(hs, spec, qc,
                                KqvParams::fetch(ctx, "m1", kind), &phrase);
              break;
            default:
              r = model2_attend(hs, spec, qc,
                                KqvParams::fetch(ctx, "m2", kind), &phrase);
              break;
          }
          return ops::sum_all(ops::tanh(r.pooled));
        },
        opts);
    INFO(to_string(kind), "/", to_string(src), ": max rel err ",
         rep.max_rel_err, " at ", rep.worst_param);
    CHECK(rep.passed);
  };

  run(AttentionKind::soft, QuerySource::other_sentence);
  run(AttentionKind::soft, QuerySource::phrase);
  run(AttentionKind::model1, QuerySource::self);
  run(AttentionKind::model1, QuerySource::other_sentence);
  run(AttentionKind::model2, QuerySource::other_sentence);
  run(AttentionKind::model2, QuerySource::phrase);
}

TEST_CASE("attend-callback factory") {
  const int d = 3;
  ParamStore store = attn_store(d, 105);
  ParamContext pc(store, nullptr);
  const SoftParams soft = SoftParams::fetch(pc, "soft");
  const KqvParams m2 = KqvParams::fetch(pc, "m2", AttentionKind::model2);
  const LstmParams phrase = LstmParams::fetch(pc, "ph");

  Rng rng(106);
  QueryContext ctx;
  ctx.own_sentence_vec = random_tensor(1, d, rng);
  ctx.other_sentence_vec = random_tensor(1, d, rng);

  AttentionSpec none{AttentionKind::none, QuerySource::other_sentence,
                     Normalization::softmax};
  CHECK(!make_attend_fn(none, ctx, soft, m2, phrase));

  AttentionSpec spec{AttentionKind::model2, QuerySource::other_sentence,
                     Normalization::softmax};
  const AttendFn fn = make_attend_fn(spec, ctx, soft, m2, phrase);
  REQUIRE(static_cast<bool>(fn));
  const Tensor m_k = random_tensor(2, d, rng);
  const AttendResult direct = model2_attend(m_k, spec, ctx, m2, nullptr);
  const AttendResult via = fn(m_k);
  CHECK(std::memcmp(via.pooled.data(), direct.pooled.data(),
                    direct.pooled.size() * sizeof(double)) == 0);

  AttentionSpec bad{AttentionKind::soft, QuerySource::self,
                    Normalization::softmax};
  CHECK_THROWS_AS((void)make_attend_fn(bad, ctx, soft, m2, phrase),
                  ConfigError);
}
