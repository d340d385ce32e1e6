// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "polyrad/alternate.hpp"
#include "polyrad/bounds.hpp"
#include "polyrad/cli/commands.hpp"
#include "polyrad/rademacher.hpp"
#include "polyrad/verify.hpp"

using namespace polyrad;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double time_limit;  // seconds
  std::function<Outcome()> run;
};

const std::vector<double> kGrid{1.0, 1.5, 2.0, 3.0, std::numeric_limits<double>::infinity()};

ClassSpec canonical(std::vector<std::size_t> dims, int k, Exponent q, double radius) {
  ClassSpec s;
  s.dims = std::move(dims);
  s.degree = k;
  s.q = q;
  s.p = q.dual();
  s.input_radius = radius;
  s.budgets = canonical_budgets(s.depth(), k, radius);
  return s;
}

std::string suite_detail(const SuiteResult& s) {
  std::ostringstream ss;
  ss << s.checks << " checks, " << s.failures << " violations";
  if (!s.first_failure.empty()) ss << " (first: " << s.first_failure << ")";
  return ss.str();
}

Outcome norm_oracle() {
  Rng rng(derive_seed(2024, 1));
  std::size_t checks = 0;
  std::size_t bad = 0;
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Matrix w = random_matrix(rng, 6, 6);
    const auto rows = oracle::rows_of(w);
    for (double q : kGrid) {
      for (double p : kGrid) {
        ++checks;
        const double got = matrix_norm_qp(w, Exponent(q), Exponent(p));
        const double want = oracle::norm_qp(rows, q, p);
        if (std::isinf(p) || std::isinf(q)) {
          if (got != want) ++bad;
        } else {
          const double rel = std::abs(got - want) / want;
          worst = std::max(worst, rel);
          if (rel > 1e-12) ++bad;
        }
      }
    }
  }
  std::ostringstream ss;
  ss << checks << " norms, " << bad << " mismatches, worst finite relative error " << worst;
  return {bad == 0, ss.str()};
}

Outcome rank1_identity() {
  Rng rng(derive_seed(2024, 2));
  std::size_t checks = 0;
  std::size_t bad = 0;
  for (int t = 0; t < 500; ++t) {
    const Matrix w = random_matrix(rng, 6, 6);
    for (double q : kGrid) {
      for (double p : kGrid) {
        const auto a = rank1_approx(w, Exponent(q), Exponent(p));
        const double direct = oracle::norm_qp(oracle::rows_of(w - a.approx), q, p);
        const double closed = rank1_residual_closed_form(w, Exponent(q), Exponent(p));
        checks += 2;
        if (std::abs(direct - closed) > 1e-9 * std::max(direct, closed)) ++bad;
        if (oracle::norm_qp(oracle::rows_of(a.approx), q, p) > oracle::norm_qp(oracle::rows_of(w), q, p)) ++bad;
      }
    }
  }
  VerifyConfig cfg;
  cfg.matrices = 500;
  const auto suite = verify_rank1_identity(cfg);
  std::ostringstream ss;
  ss << checks << " oracle checks, " << bad << " violations; library suite " << suite_detail(suite);
  return {bad == 0 && suite.passed(), ss.str()};
}

Outcome perturbation_chain_criterion() {
  const auto s = verify_perturbation_chain(VerifyConfig{});
  return {s.passed(), suite_detail(s)};
}

Outcome feasibility_criterion() {
  const auto s = verify_feasibility(VerifyConfig{});
  return {s.passed(), suite_detail(s)};
}

Outcome gradient_criterion() {
  const auto s = verify_gradients(VerifyConfig{});
  return {s.passed(), suite_detail(s)};
}

// d = 1, q = p = 2, m = 20, n = 3, M = 1. The canonical class needs
// M(1) <= 1/(2B), so inputs live in the ball of radius 1/2.
Outcome optimizer_closed_form() {
  const auto spec = canonical({3, 1}, 2, Exponent(2.0), 0.5);
  const auto xs = sample_inputs(20, 3, spec.p, 0.5, derive_seed(2024, 6));
  OptimizerConfig opt;
  opt.seed = 6;
  const auto r = estimate(spec, xs, 50, opt);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.draws; ++i) {
    const double want = oracle::one_layer_sup(xs, draw_signs(opt.seed, i, xs.size()), 1.0, 2.0);
    worst = std::max(worst, std::abs(r.per_draw_sup[i] - want) / want);
  }
  std::ostringstream ss;
  ss << r.draws << " draws, worst relative error " << worst;
  return {worst <= 1e-6, ss.str()};
}

struct TinyInstance {
  ClassSpec spec;
  std::vector<Vector> xs;
  std::vector<double> eps;
};

// Twenty classes with at most three weights: scalar chains of depth 1-3,
// one-layer maps with L1 / L_inf rows, and a 1x2 layer feeding a scalar one.
std::vector<TinyInstance> tiny_instances() {
  std::vector<TinyInstance> out;
  std::uint64_t seed = 700;
  auto add = [&](ClassSpec spec, std::size_t m) {
    ++seed;
    TinyInstance t;
    t.xs = sample_inputs(InputSampler{m, spec.dims.front(), spec.p, spec.input_radius, 0.3}, derive_seed(seed, 1));
    t.eps = rademacher_signs(m, derive_seed(seed, 2));
    t.spec = std::move(spec);
    out.push_back(std::move(t));
  };
  for (std::size_t d : {1, 2, 3}) {
    for (int k : {2, 3}) add(canonical(std::vector<std::size_t>(d + 1, 1), k, Exponent(2.0), 1.0), 3 + d);
  }
  for (std::size_t n : {2, 3}) {
    for (Exponent q : {Exponent(1.0), Exponent::infinity()}) {
      add(canonical({n, 1}, 2, q, 1.0), 4);
      add(canonical({n, 1}, 2, q, 1.0), 5);
    }
  }
  for (int k : {2, 3}) {
    for (Exponent q : {Exponent(1.0), Exponent::infinity()}) {
      add(canonical({2, 1, 1}, k, q, 1.0), 4);
      if (out.size() < 20) add(canonical({2, 1, 1}, k, q, 1.0), 5);
    }
  }
  out.resize(20, out.back());
  return out;
}

Outcome optimizer_grid() {
  std::size_t below = 0;
  std::size_t far = 0;
  double worst = 0.0;
  const auto instances = tiny_instances();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& t = instances[i];
    const auto grid = brute_force_sup(t.spec, t.eps, t.xs, 201);
    OptimizerConfig opt;
    opt.seed = derive_seed(2024, 70 + i);
    const auto ascent = maximize_objective(t.spec, t.xs, t.eps, opt);
    if (ascent.best < grid.value - grid.cell_bound) ++below;
    const double diff = std::abs(ascent.best - grid.value);
    worst = std::max(worst, diff);
    if (diff > 1e-3) ++far;
  }
  std::ostringstream ss;
  ss << instances.size() << " instances, " << below << " below grid - cell bound, " << far
     << " farther than 1e-3, worst |ascent - grid| " << worst;
  return {below == 0 && far == 0 && instances.size() == 20, ss.str()};
}

Outcome bound_sandwich() {
  std::size_t rows = 0;
  std::size_t bad = 0;
  double tightest = std::numeric_limits<double>::infinity();
  for (const char* exps : {R"("q": 2, "p": 2)", R"("q": 1, "p": "inf")"}) {
    const std::string text = std::string(R"({"dims": [3, 3, 1], "B": 1.0, "draws": 30, "seed": 8, )") + exps +
                             R"(, "sweep_d": [1, 2, 4], "sweep_k": [2, 3], "sweep_m": [10, 40, 160],
                                 "sweep_estimate": true})";
    const auto cfg = cli::parse_run_config_text(text);
    for (const auto& r : cli::run_sweep(cfg)) {
      ++rows;
      const double lower = *r.estimate_mean - 3.0 * *r.estimate_stderr;
      tightest = std::min(tightest, r.depth_dependent - lower);
      if (lower > r.depth_dependent) ++bad;
    }
  }
  std::ostringstream ss;
  ss << rows << " configs, " << bad << " violations, smallest slack " << tightest;
  return {bad == 0 && rows == 36, ss.str()};
}

Outcome crossover() {
  const std::size_t m = 20;
  const double mprod = 2.0;
  const double gamma = 1.0;
  std::string depths;
  for (int d = 1; d <= 64; ++d) depths += (d > 1 ? "," : "") + std::to_string(d);
  const auto cfg = cli::parse_run_config_text(R"({"sweep_d": [)" + depths + R"(], "sweep_k": [2], "sweep_m": [20],
                                                  "sweep_Mprod": 2.0, "sweep_Gamma": 1.0})");
  const auto rows = cli::run_sweep(cfg);
  const auto problems = cli::check_sweep(rows, cfg);

  std::size_t min_mismatch = 0;
  std::size_t crossing = 0;
  for (const auto& r : rows) {
    // c = B = gamma_loss = 1, so the bound is Mprod * min(branches).
    const double want = mprod * std::min(r.log_branch, r.sqrt_branch);
    if (std::abs(r.depth_independent - want) > 1e-15 * want) ++min_mismatch;
    if (crossing == 0 && r.log_branch <= r.sqrt_branch) crossing = r.d;
  }
  std::size_t moved_after = 0;
  for (const auto& r : rows) {
    if (crossing != 0 && r.d >= crossing && r.depth_independent != rows[crossing - 1].depth_independent) {
      ++moved_after;
    }
  }
  // Branches meet where sqrt(d/m) = logbar(m)^(3/4) sqrt(logbar(M/Gamma)) / m^(1/4).
  const double t1 = std::pow(logbar(static_cast<double>(m)), 0.75) * std::sqrt(logbar(mprod / gamma)) /
                    std::pow(static_cast<double>(m), 0.25);
  const double analytic = static_cast<double>(m) * t1 * t1;
  const bool near = crossing != 0 && std::abs(static_cast<double>(crossing) - analytic) <= 1.0;
  std::ostringstream ss;
  ss << "crossover row d=" << crossing << ", analytic d*=" << analytic << ", " << min_mismatch
     << " rows off the branch min, " << moved_after << " changes after crossover, " << problems.size()
     << " post-hoc sweep problems";
  return {near && min_mismatch == 0 && moved_after == 0 && problems.empty(), ss.str()};
}

Outcome decomposition() {
  VerifyConfig cfg;
  cfg.seed = 10;
  std::size_t checks = 0;
  std::size_t bad = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto c = random_net_case(cfg, i);
    const auto xs = sample_inputs(InputSampler{1000, c.net.input_dim(), c.spec.p, 1.0, 0.5}, derive_seed(10, i));
    for (std::size_t r = 1; r <= c.net.depth(); ++r) {
      const PolyNet alt = build_alternative_net(c.net, r, c.spec.q);
      const auto dec = decompose_at(c.net, r, c.spec.q);
      // Scale floor: the propagated output radius of the alternative net.
      const double floor = propagate_norm_bound(alt, 1.0, c.spec.q, c.spec.p).back();
      for (const auto& x : xs) {
        const double a = forward(alt, x)[0];
        const double b = dec(x)[0];
        const double scale = std::max(std::abs(a), floor);
        ++checks;
        if (scale == 0.0) {
          if (a != b) ++bad;
          continue;
        }
        const double rel = std::abs(a - b) / scale;
        worst = std::max(worst, rel);
        if (rel > 1e-9) ++bad;
      }
    }
  }
  std::ostringstream ss;
  ss << checks << " evaluations, " << bad << " violations, worst relative difference " << worst;
  return {bad == 0, ss.str()};
}

Outcome end_to_end() {
  const std::string cli = POLYRAD_CLI;
  const int ok = std::system((cli + " verify > /dev/null 2>&1").c_str());
  const int broken = std::system((cli + " verify --break-rank1 > /dev/null 2>&1").c_str());
  const int ok_code = WEXITSTATUS(ok);
  const int broken_code = WEXITSTATUS(broken);
  std::ostringstream ss;
  ss << "default verify exit " << ok_code << ", --break-rank1 exit " << broken_code;
  return {ok_code == 0 && broken_code == 3, ss.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "norm oracle equivalence", 1.0, norm_oracle},
      {2, "rank-1 residual identity", 2.0, rank1_identity},
      {3, "perturbation chain", 60.0, perturbation_chain_criterion},
      {4, "feasibility / Lipschitz certificate", 60.0, feasibility_criterion},
      {5, "gradient exactness", 5.0, gradient_criterion},
      {6, "optimizer vs closed form", 10.0, optimizer_closed_form},
      {7, "optimizer vs grid", 30.0, optimizer_grid},
      {8, "bound sandwich", 600.0, bound_sandwich},
      {9, "crossover behavior", 1.0, crossover},
      {10, "decomposition exactness", 10.0, decomposition},
      {11, "end-to-end verify gate", 120.0, end_to_end},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  bool all = true;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.time_limit;
    const bool pass = o.ok && in_time;
    all = all && pass;
    std::printf("%s [%d] %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                o.detail.c_str(), secs, c.time_limit, in_time ? "" : " TIME LIMIT EXCEEDED");
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
