#include "doctest.h"

#include <cmath>
#include <random>

#include "fainr/error.hpp"
#include "fainr/metrics/metrics.hpp"

using namespace fainr;
using namespace fainr::metrics;

namespace {

Slice wave_slice(double noise) {
  Slice s(24, 20);
  for (int i = 0; i < 24; ++i)
    for (int j = 0; j < 20; ++j)
      s(i, j) = 0.5 + 0.4 * std::sin(0.3 * i) * std::cos(0.2 * j) + noise * std::cos(0.7 * i + 0.4 * j);
  return s;
}

}  // namespace

TEST_CASE("psnr of a unit-range field with mse 0.01 is 20 dB") {
  CHECK(std::abs(psnr_from_mse(0.01, 1.0) - 20.0) < 1e-6);
  std::vector<float> gt{0, 1, 0, 1}, pred{0.1f, 0.9f, -0.1f, 1.1f};
  CHECK(std::abs(psnr(gt, pred, 1.0) - 20.0) < 1e-5);  // 0.1f is not exactly 0.1
  // Offsets of 0.5 are exact in binary: 10 log10(64 / 0.25).
  std::vector<float> g8{0, 8, 0, 8}, p8{0.5f, 7.5f, -0.5f, 8.5f};
  CHECK(psnr(g8, p8, 8.0) == doctest::Approx(10 * std::log10(256.0)).epsilon(1e-15));
  CHECK(mse(g8, p8) == 0.25);
  CHECK(psnr(gt, gt, 1.0) == kInfinitePsnr);
}

TEST_CASE("psnr agrees with a two-pass long double reference on random data") {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> gt(10000), pred(10000);
  for (int i = 0; i < 10000; ++i) {
    gt[i] = n(rng);
    pred[i] = gt[i] + 0.01f * n(rng);
  }
  long double s = 0;
  for (int i = 0; i < 10000; ++i) s += (static_cast<long double>(pred[i]) - gt[i]) * (static_cast<long double>(pred[i]) - gt[i]);
  const double ref = 10.0 * std::log10(9.0 / static_cast<double>(s / 10000));
  CHECK(std::abs(psnr(gt, pred, 3.0) - ref) < 1e-9);
}

TEST_CASE("max difference is relative to the ground-truth range") {
  std::vector<float> gt{0, 0.5f, 1}, pred{0.1f, 0.5f, 1};
  CHECK(max_diff(gt, pred) == doctest::Approx(0.1).epsilon(1e-6));
  std::vector<float> g2{0, 10}, p2{1, 10};
  CHECK(max_diff(g2, p2) == doctest::Approx(0.1));
  std::vector<float> flat{2, 2};
  CHECK_THROWS_AS(max_diff(flat, p2), ContractError);
}

TEST_CASE("ssim of a slice with itself is one") {
  const auto s = wave_slice(0.0);
  CHECK(std::abs(ssim(s, s) - 1.0) < 1e-6);
  const Slice c = Slice::Constant(16, 16, 0.3);
  CHECK(std::abs(ssim(c, c) - 1.0) < 1e-6);
}

TEST_CASE("ssim matches the Gaussian-window reference implementation") {
  // structural_similarity(gt, pred, gaussian_weights=True, sigma=1.5,
  // use_sample_covariance=False, data_range=1) from scikit-image 0.25.
  CHECK(ssim(wave_slice(0.0), wave_slice(0.05)) == doctest::Approx(0.9435889252017772).epsilon(1e-9));
  Slice cb(24, 20), inv(24, 20);
  for (int i = 0; i < 24; ++i)
    for (int j = 0; j < 20; ++j) {
      cb(i, j) = (i + j) % 2;
      inv(i, j) = 1 - cb(i, j);
    }
  const double v = ssim(cb, inv);
  CHECK(v < 0);
  CHECK(v == doctest::Approx(-0.9964064683569567).epsilon(1e-9));
}

TEST_CASE("ssim rejects slices smaller than the window") {
  Slice small = Slice::Zero(10, 30);
  CHECK_THROWS_AS(ssim(small, small), ContractError);
}

TEST_CASE("slices of a C-ordered volume") {
  const std::vector<int> dims{2, 3, 4};
  std::vector<float> vol(24);
  for (int i = 0; i < 24; ++i) vol[i] = static_cast<float>(i);
  const auto s0 = extract_slice(vol, dims, 0, 1);
  CHECK(s0.rows() == 3);
  CHECK(s0.cols() == 4);
  CHECK(s0(2, 3) == 23);
  const auto s1 = extract_slice(vol, dims, 1, 2);
  CHECK(s1(1, 0) == 20);
  const auto s2 = extract_slice(vol, dims, 2, 1);
  CHECK(s2.rows() == 2);
  CHECK(s2(1, 2) == 21);
  CHECK_THROWS_AS(extract_slice(vol, dims, 2, 4), ContractError);
}

TEST_CASE("per-expert psnr equals psnr over the assigned subset") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<float> gt(300), pred(300);
  std::vector<int> assign(300);
  for (int i = 0; i < 300; ++i) {
    gt[i] = u(rng);
    pred[i] = gt[i] + 0.02f * (u(rng) - 0.5f) * static_cast<float>(1 + i % 3);
    assign[i] = i % 3;
  }
  const auto scores = per_expert_psnr(assign, 4, gt, pred, 1.0);
  REQUIRE(scores.size() == 4);
  for (int e = 0; e < 3; ++e) {
    std::vector<float> g, p;
    for (int i = e; i < 300; i += 3) {
      g.push_back(gt[i]);
      p.push_back(pred[i]);
    }
    CHECK(scores[e].count == 100);
    CHECK(*scores[e].psnr == doctest::Approx(psnr(g, p, 1.0)).epsilon(1e-12));
  }
  CHECK(scores[3].count == 0);
  CHECK_FALSE(scores[3].psnr.has_value());
}

TEST_CASE("metric report aggregates and serializes") {
  MetricReport r;
  r.members = {{"a", "train", 40, 0.01, 0.99}, {"b", "test", 30, 0.02, std::nullopt},
               {"c", "test", kInfinitePsnr, 0.0, 1.0}};
  r.experts = {{0, 10, 35.0, 0.5}, {1, 0, std::nullopt, std::nullopt}};
  CHECK(r.mean_psnr("test") == 30);
  CHECK(r.mean_psnr() == 35);
  CHECK(r.mean_md("test") == doctest::Approx(0.01));
  CHECK(*r.mean_ssim("test") == 1.0);
  const auto j = r.to_json();
  CHECK(j["members"][2]["psnr_db"] == "inf");
  CHECK(r.members_csv().rfind("member,split,psnr_db,md,ssim\n", 0) == 0);
  CHECK(r.experts_csv().find("\n1,0,,") != std::string::npos);
}

TEST_CASE("member scores skip ssim when the lattice is too small") {
  std::vector<float> gt(8 * 8 * 8, 0.5f), pred(gt);
  pred[3] = 0.6f;
  gt[0] = 0.0f;
  pred[0] = 0.0f;
  const auto s = score_member("m", "test", gt, pred, {8, 8, 8});
  CHECK_FALSE(s.ssim.has_value());
  const double d = double(0.6f) - double(0.5f);
  CHECK(s.psnr == doctest::Approx(10 * std::log10(512.0 / (d * d))).epsilon(1e-12));
  CHECK(s.md == doctest::Approx(d / 0.5).epsilon(1e-12));
}
