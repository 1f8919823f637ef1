// Timing harness for the two kernel backends.  Every comparison first checks
// that serial and OpenMP produce bitwise-identical outputs — speed means
// nothing if the backends drift apart — then reports wall times and the
// speedup.  A second section times the forward-only evaluator's fan-out
// across threads on a synthetic workload.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "treeattn/kernels.hpp"
#include "treeattn/model.hpp"
#include "treeattn/rng.hpp"
#include "treeattn/tensor.hpp"
#include "treeattn/treebank.hpp"

using namespace treeattn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Repeats fn until it has consumed ~0.3s, returns seconds per call.
template <typename Fn>
double time_call(Fn&& fn) {
  fn();  // warm-up
  int reps = 1;
  for (;;) {
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const double dt = seconds_since(t0);
    if (dt > 0.3) return dt / reps;
    reps *= 4;
  }
}

void bench_matmul(int m, int k, int n, Rng& rng) {
  const std::vector<double> a = random_vec(static_cast<std::size_t>(m) * k, rng);
  const std::vector<double> b = random_vec(static_cast<std::size_t>(k) * n, rng);
  std::vector<double> out_s(static_cast<std::size_t>(m) * n);
  std::vector<double> out_p(out_s.size());

  kernels::serial::matmul(a.data(), b.data(), out_s.data(), m, k, n);
  kernels::omp::matmul(a.data(), b.data(), out_p.data(), m, k, n);
  const bool same =
      std::memcmp(out_s.data(), out_p.data(), out_s.size() * 8) == 0;

  const double ts = time_call([&] {
    kernels::serial::matmul(a.data(), b.data(), out_s.data(), m, k, n);
  });
  const double tp = time_call(
      [&] { kernels::omp::matmul(a.data(), b.data(), out_p.data(), m, k, n); });
  std::printf("matmul %4dx%-4d * %4dx%-4d  serial %8.3f ms  omp %8.3f ms  x%.2f  %s\n",
              m, k, k, n, ts * 1e3, tp * 1e3, ts / tp,
              same ? "bitwise-equal" : "MISMATCH");
}

void bench_map(std::size_t n, Rng& rng) {
  const std::vector<double> a = random_vec(n, rng);
  std::vector<double> out_s(n), out_p(n);
  kernels::serial::vtanh(a.data(), out_s.data(), n);
  kernels::omp::vtanh(a.data(), out_p.data(), n);
  const bool same =
      std::memcmp(out_s.data(), out_p.data(), n * 8) == 0;
  const double ts =
      time_call([&] { kernels::serial::vtanh(a.data(), out_s.data(), n); });
  const double tp =
      time_call([&] { kernels::omp::vtanh(a.data(), out_p.data(), n); });
  std::printf("tanh   n=%-9zu           serial %8.3f ms  omp %8.3f ms  x%.2f  %s\n",
              n, ts * 1e3, tp * 1e3, ts / tp, same ? "bitwise-equal" : "MISMATCH");
}

// A small dependency-side model scored over many copies of one sentence
// pair; thread count is the only variable.
void bench_eval() {
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
  ex.dep_a = deps[0];
  ex.dep_b = deps[1];
  ex.gold = 3.0;

  ModelConfig cfg;
  cfg.cell = CellKind::child_sum;
  cfg.attention.kind = AttentionKind::model2;
  cfg.attention.query_source = QuerySource::other_sentence;
  cfg.d = 64;
  cfg.attn_dim = 64;
  cfg.embed_dim = 64;
  cfg.mlp_hidden = 32;

  std::vector<std::string> tokens = ex.tokens_a;
  tokens.insert(tokens.end(), ex.tokens_b.begin(), ex.tokens_b.end());
  Vocabulary vocab = Vocabulary::build(tokens);
  Model model(cfg, vocab);
  model.init(cfg.seed);
  model.set_embeddings(random_embeddings(vocab, cfg.embed_dim, cfg.seed).table);

  const std::vector<SickExample> data(512, ex);
  const int max_threads = omp_get_max_threads();

  // Per-example trees are tiny, so the per-op kernels never clear their
  // parallel thresholds here; the fan-out over examples is what scales.
  omp_set_num_threads(1);
  EvalReport base{};
  const double t1 = time_call([&] { base = evaluate(model, data); });
  std::printf("eval   n=%zu d=%d            1 thread %8.3f ms\n", data.size(),
              cfg.d, t1 * 1e3);
  if (max_threads > 1) {
    omp_set_num_threads(max_threads);
    EvalReport r{};
    const double t = time_call([&] { r = evaluate(model, data); });
    const bool same = r.mse == base.mse && r.pearson == base.pearson;
    std::printf("eval   n=%zu d=%d        %2d threads %8.3f ms  x%.2f  %s\n",
                data.size(), cfg.d, max_threads, t * 1e3, t1 / t,
                same ? "bitwise-equal" : "MISMATCH");
  } else {
    std::printf("eval   fan-out: only one hardware thread here, skipping\n");
  }
  omp_set_num_threads(max_threads);
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", omp_get_max_threads());
  Rng rng(7);

  bench_matmul(128, 256, 128, rng);
  bench_matmul(256, 512, 256, rng);
  bench_matmul(512, 512, 512, rng);
  bench_map(1u << 16, rng);
  bench_map(1u << 20, rng);
  std::printf("\n");
  bench_eval();
  return 0;
}
