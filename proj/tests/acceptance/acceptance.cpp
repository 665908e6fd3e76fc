// Acceptance run: one PASS/FAIL line per criterion.
//
//   dvp_acceptance            all criteria
//   dvp_acceptance 1 2 5      a subset
//
// Criteria 5-9 share the recovery pipeline; runs are cached so the n = 16
// fit is trained once per process (criterion 9 trains it a second time).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dvp/eval.hpp"
#include "dvp/integrators.hpp"
#include "dvp/io.hpp"
#include "dvp/synth.hpp"
#include "dvp/training.hpp"
#include "oracles.hpp"

using namespace dvp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("C%d %-22s %s  %s\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  return pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

bool gradient_integrity() {
  const auto t0 = Clock::now();
  double ops = 0.0;
  std::string worst_op;
  for (const test::OpCase& c : test::op_cases()) {
    const double e = ad::grad_check(c.fn, c.point).max_rel_error;
    if (e >= ops) {
      ops = e;
      worst_op = c.name;
    }
  }

  std::mt19937_64 rng(7);
  const KernelModel k = KernelModel::neural(rng);
  std::vector<ad::Tensor> point{ad::Tensor("r", {4, 1}, {0.01, 0.05, 0.2, 0.6}),
                                ad::Tensor("d", {4, 1}, {0.1, 0.3, 0.2, 0.05})};
  for (const ad::Tensor& t : k.n2.params()) point.push_back(t);
  auto kernel_fn = [&](ad::Tape&, std::span<const ad::Var> x) {
    BoundKernel bk;
    bk.variant = KernelVariant::kNeural;
    bk.eta = k.eta;
    bk.net = &k.n2;
    bk.n2.assign(x.begin() + 2, x.end());
    return ad::sum(neural_kernel(bk, x[0], x[1]));
  };
  const double kernel = ad::grad_check(kernel_fn, point).max_rel_error;

  // Central differences on a seeded sample of coordinates in every tensor.
  const double window = test::window_loss_grad_check(8).max_rel_error;
  const double secs = seconds_since(t0);
  const bool pass = ops < 1e-4 && kernel < 1e-4 && window < 1e-4 && secs < 60.0;
  return report(1, "gradient integrity", pass,
                fmt("ops %.2e (%s), neural kernel %.2e, window loss %.2e; limit 1e-4; %.1fs (< 60s)", ops,
                    worst_op.c_str(), kernel, window, secs));
}

bool kernel_oracle() {
  const auto t0 = Clock::now();
  const KernelModel k = KernelModel::analytic(KernelVariant::kAnalyticOrder1);
  double worst = 0.0;
  for (double d : {0.05, 0.12}) {
    const Vec2 c{0.5, 0.5};
    const VortexState s{{c}, {0.8}, {d}};
    for (double f = 0.5; f <= 5.0 + 1e-12; f += 0.5) {
      const Vec2 x{c.x + f * d * std::cos(1.1), c.y + f * d * std::sin(1.1)};
      const Vec2 q = test::biot_savart_quadrature(x, c, 0.8, d);
      const Vec2 u = induced_velocity(s, k, x);
      worst = std::max(worst, std::hypot(u.x - q.x, u.y - q.y) / std::hypot(q.x, q.y));
    }
  }
  return report(2, "kernel oracle", worst < 1e-3,
                fmt("max relative error %.2e over r in [0.5d, 5d]; limit 1e-3; %.1fs", worst, seconds_since(t0)));
}

bool divergence_convergence() {
  auto rms = [](const VortexState& s, KernelVariant v, std::size_t n) {
    const GridField div = divergence_field(
        induced_velocity_grid(s, KernelModel::analytic(v), {n, n, DomainMap::letterboxed(n, n)}));
    double acc = 0.0;
    for (double x : div.data()) acc += x * x;
    return std::sqrt(acc / static_cast<double>(div.cell_count()));
  };
  std::vector<VortexState> states{SceneSpec::acceptance().vortices};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto v = test::random_values(24, seed, 0.0, 1.0);
    VortexState s;
    for (std::size_t i = 0; i < 6; ++i) {
      s.positions.push_back({0.15 + 0.7 * v[4 * i], 0.15 + 0.7 * v[4 * i + 1]});
      s.strengths.push_back(2.0 * v[4 * i + 2] - 1.0);
      s.sizes.push_back(0.08 + 0.12 * v[4 * i + 3]);
    }
    states.push_back(s);
  }
  double worst = INFINITY;
  for (const VortexState& s : states)
    for (auto v : {KernelVariant::kAnalyticOrder1, KernelVariant::kAnalyticOrder2})
      worst = std::min(worst, rms(s, v, 64) / rms(s, v, 128));
  return report(3, "divergence-freeness", worst >= 3.5,
                fmt("smallest 64->128 RMSE reduction %.2fx over %zu states x 2 kernels; need >= 3.5x", worst,
                    states.size()));
}

bool advection_order() {
  const std::size_t n = 128;
  const Vec2 c{0.4, 0.25};
  const double dt = 0.02;
  const GridField v = test::constant_velocity(n, c);
  const GridField start = test::gaussian_bump(n, {0.3, 0.35}, 0.1);
  GridField sl = start, bf = start;
  for (int k = 0; k < 20; ++k) {
    sl = semi_lagrangian(sl, v, dt);
    bf = bfecc_advect(bf, v, dt);
  }
  const GridField exact = test::gaussian_bump(n, {0.3 + 20 * dt * c.x, 0.35 + 20 * dt * c.y}, 0.1);
  const double e_sl = test::l2_error(sl, exact), e_bf = test::l2_error(bf, exact);

  // Limiter on rough data and a sheared flow.
  const GridField rough(64, 64, 3, DomainMap::letterboxed(64, 64), test::random_values(64 * 64 * 3, 5, 0.0, 1.0));
  const GridField shear = test::sample_field(64, 2, [](double x, double y) {
    return std::vector{std::sin(7 * y) + 0.3, std::cos(5 * x)};
  });
  bool bounded = true;
  for (const auto& [in, vel] : {std::pair{rough, shear}, std::pair{start, v}}) {
    const GridField out = bfecc_advect(in, vel, 0.03);
    for (std::size_t ch = 0; ch < in.channels(); ++ch) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t k = 0; k < in.cell_count(); ++k) {
        lo = std::min(lo, in.data()[k * in.channels() + ch]);
        hi = std::max(hi, in.data()[k * in.channels() + ch]);
      }
      for (std::size_t k = 0; k < in.cell_count(); ++k) {
        const double o = out.data()[k * in.channels() + ch];
        bounded = bounded && o >= lo && o <= hi;
      }
    }
  }
  return report(4, "advection order", e_bf <= 0.5 * e_sl && bounded,
                fmt("BFECC L2 %.3e vs semi-Lagrangian %.3e (ratio %.3f, need <= 0.5); limiter bounded: %s", e_bf,
                    e_sl, e_bf / e_sl, bounded ? "yes" : "no"));
}

// ---------------------------------------------------------------------------

constexpr std::size_t kObserved = 30;
constexpr std::size_t kPredicted = 60;
constexpr std::size_t kIterations = 5000;

struct RunKey {
  std::size_t n = 16;
  KernelVariant kernel = KernelVariant::kNeural;
  KernelVariant truth = KernelVariant::kAnalyticOrder1;
  TrajectoryMode mode = TrajectoryMode::kFull;
  std::uint64_t seed = 0;
  int repeat = 0;
  auto tie() const { return std::tuple(n, kernel, truth, mode, seed, repeat); }
  bool operator<(const RunKey& o) const { return tie() < o.tie(); }
};

struct RunResult {
  double aepe = 0.0;
  double aepe_zero = 0.0;
  double pred_rmse = 0.0;
  double frozen_rmse = 0.0;
  std::string checkpoint;
  double seconds = 0.0;
};

std::string describe(const RunKey& k) {
  return fmt("n=%zu kernel=%s truth=%s mode=%s seed=%llu", k.n, to_string(k.kernel).c_str(),
             to_string(k.truth).c_str(), to_string(k.mode).c_str(), static_cast<unsigned long long>(k.seed));
}

const RunResult& recovery(const RunKey& key) {
  static std::map<RunKey, RunResult> cache;
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  SceneSpec scene = SceneSpec::acceptance();
  scene.kernel = key.truth;
  const SceneData data = generate(scene);
  const std::vector<GridField> observed(data.frames.begin(), data.frames.begin() + kObserved);

  TrainConfig cfg;
  cfg.n_particles = key.n;
  cfg.iterations = kIterations;
  cfg.dt = scene.dt;
  cfg.kernel = key.kernel;
  cfg.mode = key.mode;
  cfg.seed = key.seed;

  const auto t0 = Clock::now();
  std::fprintf(stderr, "[fit] %s\n", describe(key).c_str());
  TrainOptions opt;
  opt.on_iteration = [&](const LossRecord& r) {
    if ((r.iteration + 1) % 1000 == 0)
      std::fprintf(stderr, "  iteration %zu image %.3e alignment %.3e  %.0fs\n", r.iteration + 1, r.image_loss,
                   r.alignment_loss, seconds_since(t0));
  };
  const Checkpoint ck = train(observed, nullptr, cfg, opt).checkpoint;

  RunResult out;
  for (std::size_t f = 0; f < kObserved; ++f) {
    const GridField& truth = data.velocities[f];
    const GridField u = infer_velocity(ck, static_cast<double>(f) * cfg.dt, truth.geometry());
    out.aepe += aepe(u, truth);
    out.aepe_zero += aepe(GridField(truth.width(), truth.height(), 2, truth.domain()), truth);
  }
  out.aepe /= kObserved;
  out.aepe_zero /= kObserved;

  const GridField& last = data.frames[kObserved - 1];
  const RolloutResult pred = predict(ck, last, kPredicted);
  for (std::size_t k = 1; k <= kPredicted; ++k) {
    out.pred_rmse += field_rmse(pred.frames[k], data.frames[kObserved - 1 + k]);
    out.frozen_rmse += field_rmse(last, data.frames[kObserved - 1 + k]);
  }
  out.pred_rmse /= kPredicted;
  out.frozen_rmse /= kPredicted;
  out.checkpoint = encode_checkpoint(ck, {});
  out.seconds = seconds_since(t0);
  std::fprintf(stderr, "  aepe %.4f (zero %.4f) prediction rmse %.4f (frozen %.4f)  %.0fs\n", out.aepe,
               out.aepe_zero, out.pred_rmse, out.frozen_rmse, out.seconds);
  return cache.emplace(key, std::move(out)).first->second;
}

bool recovery_experiment() {
  const RunResult& r = recovery({});
  const bool a = r.aepe <= 0.08 && r.aepe <= 0.25 * r.aepe_zero;
  const bool b = r.pred_rmse <= 0.5 * r.frozen_rmse;
  return report(5, "recovery", a && b,
                fmt("(a) AEPE %.4f (need <= 0.08), zero-flow %.4f, ratio %.3f (need <= 0.25) %s; "
                    "(b) prediction RMSE %.4f vs frozen %.4f, ratio %.3f (need <= 0.5) %s; fit %.0fs",
                    r.aepe, r.aepe_zero, r.aepe / r.aepe_zero, a ? "ok" : "miss", r.pred_rmse, r.frozen_rmse,
                    r.pred_rmse / r.frozen_rmse, b ? "ok" : "miss", r.seconds));
}

bool pruning_robustness() {
  const double base = recovery({}).pred_rmse;
  RunKey k9, k64;
  k9.n = 9;
  k64.n = 64;
  const double r9 = recovery(k9).pred_rmse, r64 = recovery(k64).pred_rmse;
  const bool pass = r9 <= 2.0 * base && r64 <= 2.0 * base;
  return report(6, "pruning robustness", pass,
                fmt("prediction RMSE n=9 %.4f, n=64 %.4f vs n=16 %.4f (need <= 2x: %.4f)", r9, r64, base,
                    2.0 * base));
}

bool kernel_ablation() {
  RunKey learned, fixed;
  learned.truth = fixed.truth = KernelVariant::kAnalyticOrder2;
  fixed.kernel = KernelVariant::kAnalyticOrder1;
  const double a = recovery(learned).pred_rmse, b = recovery(fixed).pred_rmse;
  return report(7, "kernel ablation", a <= b,
                fmt("order-2 truth: learned kernel prediction RMSE %.4f vs fixed order-1 %.4f", a, b));
}

bool trajectory_ablation() {
  const double full = recovery({}).pred_rmse;
  std::vector<double> init;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    RunKey k;
    k.mode = TrajectoryMode::kInitialOnly;
    k.seed = seed;
    init.push_back(recovery(k).pred_rmse);
  }
  std::vector<double> sorted = init;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[1];
  return report(8, "trajectory ablation", median >= full,
                fmt("initial-only prediction RMSE median %.4f (seeds %.4f %.4f %.4f) vs full trajectory %.4f",
                    median, init[0], init[1], init[2], full));
}

bool determinism() {
  const std::string& a = recovery({}).checkpoint;
  RunKey again;
  again.repeat = 1;
  const std::string& b = recovery(again).checkpoint;
  return report(9, "determinism", a == b,
                fmt("checkpoints of two seed-0 runs: %zu and %zu bytes, %s", a.size(), b.size(),
                    a == b ? "identical" : "different"));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<bool()>>> criteria{
      {1, gradient_integrity}, {2, kernel_oracle},      {3, divergence_convergence},
      {4, advection_order},    {5, recovery_experiment}, {6, pruning_robustness},
      {7, kernel_ablation},    {8, trajectory_ablation}, {9, determinism}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > 9) {
      std::fprintf(stderr, "usage: %s [criterion 1-9]...\n", argv[0]);
      return 2;
    }
    wanted.insert(id);
  }
  int failed = 0;
  for (const auto& [id, run] : criteria)
    if (wanted.empty() || wanted.contains(id)) failed += run() ? 0 : 1;
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
