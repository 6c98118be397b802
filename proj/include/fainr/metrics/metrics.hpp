#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace fainr::metrics {

// Reported when the two fields are identical.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

double mse(std::span<const float> gt, std::span<const float> pred);
// 10 log10(range^2 / MSE).
double psnr_from_mse(double mse, double range);
double psnr(std::span<const float> gt, std::span<const float> pred, double range);
// max |pred - gt| over the ground-truth range.
double max_diff(std::span<const float> gt, std::span<const float> pred);

using Slice = Eigen::MatrixXd;

// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, dynamic range 1)
// averaged over every window that fits inside the slice.
double ssim(const Slice& gt, const Slice& pred);

// Axis-aligned slice of a C-ordered volume with extents `dims` (2 or 3 axes).
Slice extract_slice(std::span<const float> volume, const std::vector<int>& dims, int axis, int index);
// Mean SSIM over the middle slice along each axis; a 2D field is its own slice.
double volume_ssim(std::span<const float> gt, std::span<const float> pred, const std::vector<int>& dims);

struct ExpertScore {
  int expert = 0;
  std::size_t count = 0;
  std::optional<double> psnr;  // empty when no coordinate is assigned
};

// PSNR restricted to the coordinates whose Top-1 expert is e, for e in [0, experts).
std::vector<ExpertScore> per_expert_psnr(std::span<const int> assignment, int experts,
                                         std::span<const float> gt, std::span<const float> pred,
                                         double range);

struct MemberScore {
  std::string id;
  std::string split;
  double psnr = 0;
  double md = 0;
  std::optional<double> ssim;  // lattices only
};

struct ExpertRow {
  int expert = 0;
  std::size_t count = 0;
  std::optional<double> psnr;
  std::optional<double> frequency;
};

struct MetricReport {
  std::vector<MemberScore> members;
  std::vector<ExpertRow> experts;

  // Means over members carrying `split` ("" = all); infinite PSNRs are skipped.
  double mean_psnr(const std::string& split = "") const;
  double mean_md(const std::string& split = "") const;
  std::optional<double> mean_ssim(const std::string& split = "") const;

  std::string members_csv() const;
  std::string experts_csv() const;
  nlohmann::json to_json() const;
};

// Fields are in normalized units, so the PSNR range is 1.
MemberScore score_member(const std::string& id, const std::string& split,
                         std::span<const float> gt, std::span<const float> pred,
                         const std::vector<int>& lattice);

}  // namespace fainr::metrics
