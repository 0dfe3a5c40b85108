// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 1 2 6`.

#include "opbil/dataset_io.hpp"
#include "opbil/experiment.hpp"
#include "opbil/fusion.hpp"
#include "opbil/late_fusion.hpp"
#include "opbil/metrics.hpp"
#include "opbil/sim.hpp"
#include "opbil/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace opbil;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, const std::string& title, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

Tensor naive_fuse(const Tensor& x, const Tensor& z) {
  const Index U = x.dim(0), V = x.dim(1), N = x.dim(2), T = z.dim(0), M = z.dim(1);
  Tensor out({U, V, T, N * M});
  for (Index u = 0; u < U; ++u)
    for (Index v = 0; v < V; ++v)
      for (Index t = 0; t < T; ++t)
        for (Index i = 0; i < N; ++i)
          for (Index j = 0; j < M; ++j) out(u, v, t, i * M + j) = x(u, v, i) * z(t, j);
  return out;
}

// Training protocol shared by criteria 7-10.
const int kEpochs = TrainConfig{}.epochs;
constexpr std::uint64_t kSeeds[] = {7, 17, 27};

CompareConfig protocol(std::uint64_t seed, std::vector<Variant> variants) {
  CompareConfig cc;
  cc.base.seed = seed;
  cc.train.seed = seed;
  cc.train.epochs = kEpochs;
  cc.variants = std::move(variants);
  cc.log = [](const std::string& line) { std::fprintf(stderr, "  %s\n", line.c_str()); };
  return cc;
}

SimulatedDataset protocol_data(std::uint64_t seed) {
  FieldConfig f;
  f.seed = seed;
  return simulate_dataset(f, 2000, 500);
}

struct SeedRuns {
  std::uint64_t seed = 0;
  CompareResult result;
};

std::map<std::uint64_t, SeedRuns> ordering_runs;
std::map<std::uint64_t, SimulatedDataset> datasets;

const SimulatedDataset& data_for(std::uint64_t seed) {
  auto it = datasets.find(seed);
  if (it == datasets.end()) it = datasets.emplace(seed, protocol_data(seed)).first;
  return it->second;
}

const CompareResult& ordering_run(std::uint64_t seed) {
  auto it = ordering_runs.find(seed);
  if (it != ordering_runs.end()) return it->second.result;
  std::fprintf(stderr, "seed %llu\n", static_cast<unsigned long long>(seed));
  CompareResult r = compare(data_for(seed),
                            protocol(seed, {Variant::SeismicOnly, Variant::VisualOnly,
                                            Variant::OpBilinear, Variant::OrderlessBilinear,
                                            Variant::ConcatFc}));
  return ordering_runs.emplace(seed, SeedRuns{seed, std::move(r)}).first->second.result;
}

double f1_of(const CompareResult& r, std::string_view name) { return r.find(name)->metrics.f1; }

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where = "-";
  bool all = true;
  for (Variant v : kAllVariants) {
    const VariantCheck c = gradcheck_variant(v, 1, 3);
    for (const ParameterCheck& p : c.parameters) {
      all = all && p.result.passed(1e-4);
      if (p.result.max_rel_error >= worst) {
        worst = p.result.max_rel_error;
        where = std::string(to_string(v)) + " " + p.parameter;
      }
    }
  }
  const double secs = seconds_since(t0);
  verdict(1, "gradient correctness", all && secs < 120.0,
          fmt("7 variants x 3 samples, max rel err %.2e at %s (< 1e-4), %.1f s (< 120 s)", worst,
              where.c_str(), secs));
}

void criterion_fusion_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<Index> dim(1, 8);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Tensor x = random_tensor({dim(rng), dim(rng), dim(rng)}, rng, -2.0, 2.0);
    const Tensor z = random_tensor({dim(rng), dim(rng)}, rng, -2.0, 2.0);
    worst = std::max(worst, max_abs_diff(op_bilinear_fuse(x, z), naive_fuse(x, z)));
  }
  verdict(2, "fusion oracle", worst < 1e-12, fmt("100 shapes, max abs diff %.2e (< 1e-12)", worst));
}

void criterion_orderless() {
  std::mt19937_64 rng(2025);
  std::uniform_int_distribution<Index> dim(1, 7);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Tensor x = random_tensor({dim(rng), dim(rng), dim(rng)}, rng, -1.0, 1.0);
    const Tensor z = random_tensor({dim(rng), dim(rng)}, rng, -1.0, 1.0);
    const Tensor fused = naive_fuse(x, z);
    const Index depth = fused.dim(3);
    Tensor summed({depth});
    for (Index k = 0; k < fused.size(); ++k) summed[k % depth] += fused[k];
    worst = std::max(worst, max_abs_diff(orderless_bilinear_pool(x, z), summed));
  }
  verdict(3, "orderless identity", worst < 1e-10, fmt("100 cases, max abs diff %.2e (< 1e-10)", worst));
}

void criterion_factorization() {
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<Index> dim(1, 9);
  double worst = 0.0;
  bool preconditions = true;
  for (int c = 0; c < 100; ++c) {
    const Index nr = dim(rng), mr = dim(rng), n = dim(rng), m = dim(rng);
    const Tensor xr = random_tensor({nr}, rng, 0.05, 1.0), zr = random_tensor({mr}, rng, 0.05, 1.0);
    const Tensor wx = random_tensor({n, nr}, rng, 0.0, 1.0), wz = random_tensor({m, mr}, rng, 0.0, 1.0);
    const FactorizationCheck check = factorization_identity_check(xr, zr, wx, wz);
    preconditions = preconditions && check.precondition_met;
    worst = std::max(worst, check.max_deviation);

    // Independent form: fuse the reduced vectors, compare with (wx (x) wz)(x' (x) z').
    const Tensor x = sparse_reduce(xr.reshaped({1, 1, nr}), wx);
    const Tensor z = sparse_reduce(zr.reshaped({1, mr}), wz);
    const Tensor fused = op_bilinear_fuse(x, z);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < m; ++j) {
        double kron = 0.0;
        for (Index k = 0; k < nr; ++k)
          for (Index l = 0; l < mr; ++l) kron += wx(i, k) * wz(j, l) * (xr[k] * zr[l]);
        worst = std::max(worst, std::abs(fused[i * m + j] - kron));
      }
  }
  verdict(4, "factorization identity", preconditions && worst < 1e-10,
          fmt("100 positive-regime cases, max deviation %.2e (< 1e-10)", worst));
}

// Brute-force counts at threshold t with the given comparison.
Metrics brute_metrics(const std::vector<double>& s, const std::vector<std::uint8_t>& y, double t,
                      bool inclusive) {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool pred = inclusive ? s[i] >= t : s[i] > t;
    if (pred && y[i]) ++tp;
    if (pred && !y[i]) ++fp;
    if (!pred && y[i]) ++fn;
    if (!pred && !y[i]) ++tn;
  }
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  m.recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

void criterion_metrics() {
  std::vector<std::pair<std::vector<double>, std::vector<std::uint8_t>>> cases;
  cases.push_back({{0.95, 0.9, 0.8, 0.8, 0.7, 0.6, 0.55, 0.4, 0.3, 0.1},
                   {1, 1, 0, 1, 1, 0, 0, 1, 0, 0}});
  cases.push_back({{0.5, 0.5, 0.5, 0.2, 0.9, 0.1, 0.7, 0.3, 0.6, 0.4, 0.8, 0.05},
                   {1, 0, 1, 0, 1, 0, 0, 0, 1, 1, 0, 0}});
  std::mt19937_64 rng(55);
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = 10 + std::size_t(c % 11);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng() % 8) / 8.0;  // ties on purpose
      y[i] = std::uint8_t(rng() % 2);
    }
    cases.emplace_back(s, y);
  }

  bool exact = true;
  for (const auto& [s, y] : cases) {
    for (double t : {0.0, 0.3, 0.5, 0.8}) {
      const Metrics got = score_metrics(s, y, t);
      const Metrics want = brute_metrics(s, y, t, false);
      exact = exact && got.tp == want.tp && got.fp == want.fp && got.fn == want.fn &&
              got.tn == want.tn && got.precision == want.precision && got.recall == want.recall &&
              got.f1 == want.f1;
    }
    std::vector<double> distinct(s);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const PRCurve curve = pr_curve(s, y);
    exact = exact && curve.size() == distinct.size();
    for (std::size_t k = 0; exact && k < distinct.size(); ++k) {
      const Metrics want = brute_metrics(s, y, distinct[k], true);
      exact = curve[k].threshold == distinct[k] && curve[k].precision == want.precision &&
              curve[k].recall == want.recall;
    }
  }
  const double table = f1_score(0.96, 0.97);
  const bool consistent = std::abs(table - 0.965) < 5e-4;
  verdict(5, "metrics correctness", exact && consistent,
          fmt("%zu hand-built cases %s brute force; F1(0.96, 0.97) = %.5f (reported 0.965)",
              cases.size(), exact ? "match" : "DIFFER from", table));
}

void criterion_dempster_shafer() {
  // m_v = (0.52, 0.13, 0.35), m_s = (0.765, 0.085, 0.15), K = 0.14365,
  // BetP = (0.74355 + 0.0525 / 2) / 0.85635 = 5132 / 5709.
  const double oracle = 5132.0 / 5709.0;
  const double got = dempster_shafer_fuse(0.8, 0.35, 0.9, 0.15);
  const double ignorant = dempster_shafer_fuse(0.3, 1.0, 0.9, 1.0);
  verdict(6, "Dempster-Shafer oracle", std::abs(got - oracle) < 1e-9 && ignorant == 0.5,
          fmt("fused %.12f vs %.12f (diff %.1e < 1e-9); total ignorance %.17g", got, oracle,
              std::abs(got - oracle), ignorant));
}

void criterion_ordering() {
  const auto t0 = Clock::now();
  int holds = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const CompareResult& r = ordering_run(seed);
    const double op = f1_of(r, "op-bilinear"), vis = f1_of(r, "visual-only"),
                 sei = f1_of(r, "seismic-only"), ord = f1_of(r, "orderless-bilinear"),
                 cat = f1_of(r, "concat-fc");
    const bool ok = op >= vis && op >= sei && op >= ord && op >= cat && vis >= 0.70 && sei >= 0.70;
    holds += ok;
    detail += fmt("seed %llu %s op %.3f vis %.3f seis %.3f orderless %.3f concat %.3f; ",
                  static_cast<unsigned long long>(seed), ok ? "ok" : "no", op, vis, sei, ord, cat);
  }
  const double secs = seconds_since(t0);
  verdict(7, "ordering on synthetic data", holds >= 2 && secs < 900.0,
          detail + fmt("holds for %d/3 seeds (need 2), %.0f s (< 900 s)", holds, secs));
}

void criterion_init() {
  const CompareResult& pre = ordering_run(7);
  CompareConfig cc = protocol(7, {Variant::OpBilinear});
  cc.init = InitMode::Random;
  const CompareResult random = compare(data_for(7), cc);
  const double a = f1_of(pre, "op-bilinear"), b = f1_of(random, "op-bilinear");
  verdict(8, "pretrained init", a >= b - 0.02,
          fmt("pretrained %.3f vs random %.3f (need >= random - 0.02)", a, b));
}

void criterion_sparsity() {
  const CompareResult& with = ordering_run(7);
  CompareConfig cc = protocol(7, {Variant::OpBilinear});
  cc.train.l1 = 0.0;
  const CompareResult without = compare(data_for(7), cc);
  const double a = with.find("op-bilinear")->sparsity, b = without.find("op-bilinear")->sparsity;
  verdict(9, "sparsity effect", a > b,
          fmt("|w| < 1e-3 fraction %.4f at l1 = 1e-3 vs %.4f at l1 = 0", a, b));
}

void criterion_bands() {
  int holds = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const CompareResult& r = ordering_run(seed);
    const auto& s = r.find("seismic-only")->bands.rows;
    const auto& o = r.find("op-bilinear")->bands.rows;
    const bool monotone = s[0].recall >= s[1].recall && s[1].recall >= s[2].recall;
    const double seis_drop = s[0].recall - s[2].recall, op_drop = o[0].recall - o[2].recall;
    const bool ok = monotone && op_drop <= seis_drop;
    holds += ok;
    detail += fmt("seed %llu %s seismic %.2f/%.2f/%.2f op %.2f/%.2f/%.2f; ",
                  static_cast<unsigned long long>(seed), ok ? "ok" : "no", s[0].recall, s[1].recall,
                  s[2].recall, o[0].recall, o[1].recall, o[2].recall);
  }
  verdict(10, "distance bands", holds >= 2, detail + fmt("holds for %d/3 seeds (need 2)", holds));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void criterion_dataset() {
  const FieldConfig config = [] {
    FieldConfig f;
    f.seed = 7;
    return f;
  }();
  const SimulatedDataset& d = data_for(7);

  const std::set<std::uint16_t> train_ids(d.train_sensors.begin(), d.train_sensors.end());
  bool disjoint = true;
  for (std::uint16_t s : d.test_sensors) disjoint = disjoint && !train_ids.count(s);
  for (const SampleWindow& w : d.test) disjoint = disjoint && !train_ids.count(w.sensor_id);
  for (const SampleWindow& w : d.train) disjoint = disjoint && train_ids.count(w.sensor_id);

  bool labels = true;
  for (const auto* split : {&d.train, &d.test})
    for (const SampleWindow& w : *split) labels = labels && w.label == (w.distance < 15.0f);

  bool windows = true;
  for (double duration : {1.0, 1.5, 8.0, 10.25, 60.0, 61.0}) {
    const auto expect = std::size_t(std::floor((duration - 1.0) / 0.5)) + 1;
    const auto starts = window_starts(duration, config);
    windows = windows && starts.size() == expect;
    for (std::size_t k = 0; k < starts.size(); ++k) windows = windows && starts[k] == 0.5 * double(k);
  }

  const fs::path a = fs::temp_directory_path() / "opbil_acceptance_a";
  const fs::path b = fs::temp_directory_path() / "opbil_acceptance_b";
  fs::remove_all(a);
  fs::remove_all(b);
  write_dataset(a, d, config);
  const LoadedDataset back = read_dataset(a);
  write_dataset(b, back.data, back.config);
  bool round_trip = back.data.train == d.train && back.data.test == d.test;
  for (const char* f : {"manifest.json", "train.bin", "test.bin"})
    round_trip = round_trip && slurp(a / f) == slurp(b / f);
  fs::remove_all(a);
  fs::remove_all(b);

  verdict(11, "dataset protocol", disjoint && labels && windows && round_trip,
          fmt("disjoint sensors %s, label rule %s, window counts %s, byte-exact round trip %s",
              disjoint ? "yes" : "NO", labels ? "yes" : "NO", windows ? "yes" : "NO",
              round_trip ? "yes" : "NO"));
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto on = [&](int id) { return wanted.empty() || wanted.count(id); };

  using Fn = void (*)();
  const std::pair<int, Fn> criteria[] = {
      {1, criterion_gradients},  {2, criterion_fusion_oracle}, {3, criterion_orderless},
      {4, criterion_factorization}, {5, criterion_metrics},  {6, criterion_dempster_shafer},
      {7, criterion_ordering},   {10, criterion_bands},        {8, criterion_init},
      {9, criterion_sparsity},   {11, criterion_dataset},
  };
  for (const auto& [id, fn] : criteria)
    if (on(id)) {
      try {
        fn();
      } catch (const std::exception& e) {
        verdict(id, "criterion", false, std::string("threw: ") + e.what());
      }
    }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
