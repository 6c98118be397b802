// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// when any criterion fails. The training criteria take several minutes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

#include "fainr/analysis/analysis.hpp"
#include "fainr/autodiff/fd_check.hpp"
#include "fainr/data/synthetic.hpp"
#include "fainr/metrics/metrics.hpp"
#include "fainr/model/baseline.hpp"
#include "fainr/train/trainer.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include "CLI11.hpp"

using namespace fainr;
using ad::Tensor;
using model::FaInrModel;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what) {
  std::printf("%s %d %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor<double> coords_in_cube(int n, std::mt19937_64& rng) { return test::random_tensor<double>(n, 3, rng); }
Tensor<double> unit_params(std::mt19937_64& rng) { return test::random_tensor<double>(1, 2, rng, 0.0, 1.0); }

void gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  FaInrModel<double> m(test::toy_config(2, 8, 2));
  test::randomize(m.parameters(), 101);
  std::mt19937_64 rng(102);
  train::Batch<double> batch;
  batch.coords = coords_in_cube(16, rng);
  batch.params = test::random_tensor<double>(2, 2, rng, 0, 1);
  batch.member.assign(16, 0);
  std::fill(batch.member.begin() + 7, batch.member.end(), 1);
  batch.targets = test::random_tensor<double>(16, 1, rng, 0, 1);
  ad::ScalarGraph<double> f = [&](ad::Tape<double>& t, const std::vector<ad::Var<double>>& b) {
    return train::batch_loss(static_cast<const model::Surrogate<double>&>(m), t, b, batch);
  };
  const auto r = ad::fd_check(f, m.parameters(), 1e-3);
  const double secs = seconds_since(t0);
  // Same comparison with a smaller step: separates finite-difference truncation
  // error from a wrong tape gradient. Informational only.
  const auto fine = ad::fd_check(f, m.parameters(), 1e-4);
  report(1, r.max_rel_error < 1e-5 && secs < 60 && r.checked == m.parameters().scalar_count(),
         fmt("full-loss gradient check, %zu scalars, eps 1e-3: max rel err %.2e (< 1e-5) at %s[%ld] in %.1f s "
             "(< 60 s); eps 1e-4 gives %.2e",
             r.checked, r.max_rel_error, r.worst_parameter.c_str(), r.worst_index, secs, fine.max_rel_error));
}

void routing_oracle() {
  std::mt19937_64 rng(201);
  FaInrModel<double> dense(test::toy_config(3, 8, 3));
  FaInrModel<double> top2(test::toy_config(3, 8, 2));
  test::randomize(dense.parameters(), 202);
  test::randomize(top2.parameters(), 203);
  double worst_dense = 0, worst_top2 = 0;
  for (int q = 0; q < 1000; ++q) {
    const auto x = coords_in_cube(1, rng);
    const auto p = unit_params(rng);
    const auto phi = dense.gate(x);
    const double ref = test::mixture_reference(dense, x, p, {0, 1, 2}, {phi(0, 0), phi(0, 1), phi(0, 2)});
    worst_dense = std::max(worst_dense, std::abs(dense.forward(x, p).value - ref));

    const auto g = top2.gate(x);
    int a = 0;
    for (int e = 1; e < 3; ++e)
      if (g(0, e) > g(0, a)) a = e;
    int b = a == 0 ? 1 : 0;
    for (int e = 0; e < 3; ++e)
      if (e != a && g(0, e) > g(0, b)) b = e;
    const double s = g(0, a) + g(0, b);
    const double ref2 = test::mixture_reference(top2, x, p, {a, b}, {g(0, a) / s, g(0, b) / s});
    worst_top2 = std::max(worst_top2, std::abs(top2.forward(x, p).value - ref2));
  }
  report(2, worst_dense < 1e-6 && worst_top2 < 1e-6,
         fmt("routing vs brute force over 1000 queries: dense max err %.2e, top-2 max err %.2e (< 1e-6)",
             worst_dense, worst_top2));
}

void structural_invariants() {
  const int instances = 100;
  std::mt19937_64 rng(301);
  auto cfg = test::toy_config(3, 8, 2);
  double perm_err = 0, partition_err = 0;
  bool identity = true, independent = true;
  for (int inst = 0; inst < instances; ++inst) {
    FaInrModel<double> m(cfg);
    test::randomize(m.parameters(), 1000 + inst);
    FaInrModel<double> permuted(cfg, m.parameters());
    std::vector<int> perm(cfg.memory_slots);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int e = 0; e < cfg.experts; ++e)
      for (auto idx : {permuted.expert(e).keys, permuted.expert(e).values})
        for (int r = 0; r < cfg.memory_slots; ++r)
          permuted.parameters().value(idx).row(r) = m.parameters().value(idx).row(perm[r]);
    const auto x = coords_in_cube(8, rng);
    const auto p = unit_params(rng);
    const auto y = m.forward_batch(x, p), yp = permuted.forward_batch(x, p);
    perm_err = std::max(perm_err, ((y - yp).cwiseAbs().array() / y.cwiseAbs().array().max(1e-12)).maxCoeff());

    const auto phi = m.gate(x);
    partition_err = std::max(partition_err, (phi.rowwise().sum().array() - 1.0).abs().maxCoeff());

    model::ForwardDiagnostics<double> d1, d2;
    m.forward_batch(x, p, &d1);
    m.forward_batch(x, unit_params(rng), &d2);
    independent = independent && d1.gate_probs == d2.gate_probs;
    for (int b = 0; b < 8; ++b)
      independent = independent && d1.decisions[b].selected == d2.decisions[b].selected &&
                    d1.decisions[b].weights == d2.decisions[b].weights;

    auto fresh_cfg = cfg;
    fresh_cfg.seed = 5000 + inst;
    FaInrModel<double> fresh(fresh_cfg);  // adapter output layer starts at zero
    for (int e = 0; e < cfg.experts; ++e)
      identity = identity && fresh.condition_values(e, p) == fresh.parameters().value(fresh.expert(e).values);
  }
  report(3, perm_err < 1e-6 && identity && partition_err < 1e-6 && independent,
         fmt("invariants over %d instances each: permutation rel err %.2e (< 1e-6), adapter identity %s, "
             "partition of unity err %.2e (< 1e-6), routing independent of p %s",
             instances, perm_err, identity ? "exact" : "broken", partition_err,
             independent ? "exact" : "broken"));
}

void metric_references() {
  const double p20 = metrics::psnr_from_mse(0.01, 1.0);
  std::vector<float> gt{0, 10}, pred{1, 10};
  const double md = metrics::max_diff(gt, pred);
  metrics::Slice a(32, 24);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 24; ++j) a(i, j) = std::sin(0.37 * i) * std::cos(0.21 * j);
  const double s = metrics::ssim(a, a);
  const auto path = analysis::lattice_graph({3});
  const double lap = analysis::laplacian_energy(path, std::vector<double>{-1, 0, 1});
  const double flat = analysis::laplacian_energy(analysis::lattice_graph({4, 4}), std::vector<double>(16, 2.5));
  report(4, std::abs(p20 - 20) < 1e-6 && md == 0.1 && std::abs(s - 1) < 1e-6 && lap == 1.0 && flat == 0.0,
         fmt("metric references: PSNR %.9f dB, MD %.17g, SSIM(a,a) %.9f, path-3 energy %.17g, constant energy %g",
             p20, md, s, lap, flat));
}

struct Experiment {
  data::SyntheticSpec spec;
  data::NormalizedEnsemble data;
};

Experiment make_experiment() {
  Experiment ex;
  ex.spec = data::make_synthetic_spec({32, 32, 32}, 2, 6, 7);
  std::vector<std::string> splits(25, "train");
  for (int j = 20; j < 25; ++j) splits[j] = "test";
  const auto ds = data::make_ensemble(ex.spec, data::sample_parameters(ex.spec, 25, 11), splits);
  ex.data = data::normalize(ds);
  return ex;
}

double mean_test_psnr(const model::Surrogate<float>& m, const data::NormalizedEnsemble& d) {
  double sum = 0;
  for (auto j : d.test_members) sum += metrics::psnr(d.values[j], train::predict_member(m, d, j), 1.0);
  return sum / static_cast<double>(d.test_members.size());
}

struct Trained {
  double test_psnr = 0;
  double seconds = 0;
  train::KeyUtilization keys;
};

Trained fit(model::Surrogate<float>& m, const data::NormalizedEnsemble& d, const train::TrainConfig& tc,
            const train::SampleDomain& domain, const char* label) {
  std::printf("  training %s (%zu parameters, %ld steps)\n", label, m.parameters().scalar_count(), tc.steps);
  std::fflush(stdout);
  const auto r = train::train(m, d, tc, domain);
  Trained t;
  t.seconds = r.elapsed_s;
  t.keys = r.keys;
  t.test_psnr = mean_test_psnr(m, d);
  std::printf("  %s: test PSNR %.2f dB after %.0f s\n", label, t.test_psnr, t.seconds);
  std::fflush(stdout);
  return t;
}

double subset_psnr(const std::vector<float>& gt, const std::vector<float>& pred,
                   const std::vector<std::size_t>& idx) {
  std::vector<float> g, p;
  for (auto i : idx) {
    g.push_back(gt[i]);
    p.push_back(pred[i]);
  }
  return metrics::psnr(g, p, 1.0);
}

// Largest gap between the generator's swept sensitivity and the closed form.
double synthetic_sensitivity_error(const Experiment& ex) {
  analysis::SyntheticSource src(ex.spec);
  const auto coords = data::synthetic_coords(ex.spec);
  const std::size_t n = ex.spec.size();
  const auto curves = analysis::global_sensitivity(src, n, 8);
  double worst = 0;
  for (const auto& c : curves) {
    for (std::size_t k = 0; k < c.sweep.size(); ++k) {
      std::vector<double> p;
      for (const auto& [lo, hi] : ex.spec.param_ranges) p.push_back(0.5 * (lo + hi));
      p[c.param] = c.sweep[k];
      double ref = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x[3] = {coords[i * 3], coords[i * 3 + 1], coords[i * 3 + 2]};
        const double y = data::synthetic_value(ex.spec, x, p.data());
        ref += (y > 0 ? 1.0 : -1.0) * data::synthetic_gradient(ex.spec, x, p.data())[c.param];
      }
      worst = std::max(worst, std::abs(c.sensitivity[k] - std::abs(ref / static_cast<double>(n))));
    }
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"End-to-end acceptance checks"};
  long steps = 8000;
  double lr = 2e-3;
  int batch = 2048;
  app.add_option("--steps", steps, "Optimizer steps per training run");
  app.add_option("--lr", lr, "Initial learning rate");
  app.add_option("--batch", batch, "Queries per step");
  CLI11_PARSE(app, argc, argv);

  gradient_check();
  routing_oracle();
  structural_invariants();
  metric_references();

  const auto ex = make_experiment();
  train::TrainConfig tc;
  tc.steps = steps;
  tc.learning_rate = lr;
  tc.batch_size = batch;
  tc.validation_interval = steps;
  const auto domain = train::training_domain(ex.data);

  model::ModelConfig fa_cfg;
  fa_cfg.experts = 4;
  fa_cfg.memory_slots = 64;
  fa_cfg.top_k = 2;
  FaInrModel<float> fa(fa_cfg);
  const auto fa_run = fit(fa, ex.data, tc, domain, "FA-INR E=4 M=64");

  model::MlpBaselineConfig bc;
  bc.body = {model::matched_width(3, 2, 4, fa.parameters().scalar_count()), 4};
  model::CoordinateMlp<float> mlp(bc);
  const auto mlp_run = fit(mlp, ex.data, tc, domain, "coordinate MLP");
  report(5, fa_run.test_psnr >= 35 && fa_run.test_psnr - mlp_run.test_psnr >= 2 && fa_run.seconds <= 1800,
         fmt("synthetic 32^3: FA-INR test PSNR %.2f dB (>= 35), MLP with %zu vs %zu parameters %.2f dB "
             "(gap %.2f >= 2), training %.0f s (<= 1800 s), %ld steps",
             fa_run.test_psnr, mlp.parameters().scalar_count(), fa.parameters().scalar_count(),
             mlp_run.test_psnr, fa_run.test_psnr - mlp_run.test_psnr, fa_run.seconds, steps));

  model::ModelConfig single_cfg = fa_cfg;
  single_cfg.experts = 1;
  single_cfg.memory_slots = 256;
  single_cfg.top_k = 1;
  FaInrModel<float> single(single_cfg);
  const auto single_run = fit(single, ex.data, tc, domain, "single bank E=1 M=256");
  report(6, fa_run.test_psnr > single_run.test_psnr,
         fmt("expert count: E=4/M=64 %.2f dB > E=1/M=256 %.2f dB", fa_run.test_psnr, single_run.test_psnr));

  const auto split = data::spatial_split(ex.data.coords.rows(), 0.7, 17);
  FaInrModel<float> holdout(fa_cfg);
  fit(holdout, ex.data, tc, {ex.data.train_members, split.train}, "FA-INR on 70% of coordinates");
  double seen = 0, unseen = 0;
  for (auto j : ex.data.train_members) {
    const auto pred = train::predict_member(holdout, ex.data, j);
    seen += subset_psnr(ex.data.values[j], pred, split.train);
    unseen += subset_psnr(ex.data.values[j], pred, split.test);
  }
  seen /= static_cast<double>(ex.data.train_members.size());
  unseen /= static_cast<double>(ex.data.train_members.size());
  report(7, std::abs(seen - unseen) <= 2,
         fmt("spatial holdout on training members: trained coords %.2f dB, unseen coords %.2f dB (gap %.2f <= 2)",
             seen, unseen, seen - unseen));

  const double synth_err = synthetic_sensitivity_error(ex);
  const auto fa64 = fa.cast<double>();
  analysis::ModelSource<double> src(fa64, ex.data.stats, ex.data.coords.cast<double>());
  double worst_disc = 0;
  std::size_t points = 0;
  for (const auto& c : analysis::global_sensitivity(src, ex.data.coords.rows(), 16)) {
    worst_disc = std::max(worst_disc, c.max_rel_discrepancy);
    points += c.sweep.size();
  }
  const auto map = analysis::expert_map(fa, ex.data.coords);
  for (int e = 0; e < fa_cfg.experts; ++e) {
    if (map.members_of(e).empty()) continue;
    for (int s = 0; s < 2; ++s) {
      std::vector<double> base;
      for (const auto& [lo, hi] : ex.data.stats.param) base.push_back(0.5 * (lo + hi));
      const auto c = analysis::sensitivity_sweep(src, analysis::expert_region(map, e), s,
                                                 ex.data.stats.param[s], 8, base);
      worst_disc = std::max(worst_disc, c.max_rel_discrepancy);
      points += c.sweep.size();
    }
  }
  report(8, synth_err < 1e-6 && worst_disc < 1e-3,
         fmt("sensitivity: synthetic vs analytic max abs err %.2e (< 1e-6); trained model tape vs central "
             "difference max rel %.2e (< 1e-3) over %zu sweep points",
             synth_err, worst_disc, points));

  report(9, fa_run.keys.mean_normalized_entropy() > single_run.keys.mean_normalized_entropy(),
         fmt("key utilization: mean per-expert normalized entropy E=4/M=64 %.4f vs single bank E=1/M=256 %.4f "
             "(raw nats %.3f of max %.3f vs %.3f of max %.3f)",
             fa_run.keys.mean_normalized_entropy(), single_run.keys.mean_normalized_entropy(),
             fa_run.keys.mean_entropy(), std::log(64.0), single_run.keys.mean_entropy(), std::log(256.0)));

  std::printf("%d of 9 criteria failed\n", failures);
  return failures ? 1 : 0;
}
