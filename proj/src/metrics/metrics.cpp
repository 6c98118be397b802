#include "fainr/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fainr/error.hpp"

namespace fainr::metrics {

namespace {

void require_pair(std::span<const float> gt, std::span<const float> pred) {
  FAINR_REQUIRE(gt.size() == pred.size(), ContractError,
                "metric: field sizes differ (" + std::to_string(gt.size()) + " vs " +
                    std::to_string(pred.size()) + ")");
  FAINR_REQUIRE(!gt.empty(), ContractError, "metric: empty field");
}

Eigen::VectorXd gaussian_window() {
  Eigen::VectorXd w(11);
  for (int i = 0; i < 11; ++i) w(i) = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
  return w / w.sum();
}

// Separable correlation keeping only positions where the window fits.
Slice filter_valid(const Slice& a, const Eigen::VectorXd& w) {
  const Eigen::Index k = w.size();
  const Eigen::Index h = a.rows() - k + 1, wd = a.cols() - k + 1;
  Slice rows(h, a.cols());
  for (Eigen::Index i = 0; i < h; ++i) rows.row(i) = w.transpose() * a.middleRows(i, k);
  Slice out(h, wd);
  for (Eigen::Index j = 0; j < wd; ++j) out.col(j) = rows.middleCols(j, k) * w;
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return "inf";
  return *v;
}

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}

}  // namespace

double mse(std::span<const float> gt, std::span<const float> pred) {
  require_pair(gt, pred);
  double s = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - gt[i];
    s += d * d;
  }
  return s / static_cast<double>(gt.size());
}

double psnr_from_mse(double m, double range) {
  return m == 0.0 ? kInfinitePsnr : 10.0 * std::log10(range * range / m);
}

double psnr(std::span<const float> gt, std::span<const float> pred, double range) {
  FAINR_REQUIRE(range > 0, ContractError, "psnr: range must be positive");
  return psnr_from_mse(mse(gt, pred), range);
}

double max_diff(std::span<const float> gt, std::span<const float> pred) {
  require_pair(gt, pred);
  const auto [lo, hi] = std::minmax_element(gt.begin(), gt.end());
  const double range = static_cast<double>(*hi) - *lo;
  FAINR_REQUIRE(range > 0, ContractError, "max_diff: ground truth is constant");
  double worst = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(pred[i]) - gt[i]));
  return worst / range;
}

double ssim(const Slice& gt, const Slice& pred) {
  FAINR_REQUIRE(gt.rows() == pred.rows() && gt.cols() == pred.cols(), ContractError,
                "ssim: slice shapes differ");
  FAINR_REQUIRE(gt.rows() >= 11 && gt.cols() >= 11, ContractError,
                "ssim: slices must be at least 11x11, got " + std::to_string(gt.rows()) + "x" +
                    std::to_string(gt.cols()));
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Eigen::VectorXd w = gaussian_window();
  const Slice mx = filter_valid(gt, w), my = filter_valid(pred, w);
  const Slice sxx = filter_valid(gt.cwiseProduct(gt), w) - mx.cwiseProduct(mx);
  const Slice syy = filter_valid(pred.cwiseProduct(pred), w) - my.cwiseProduct(my);
  const Slice sxy = filter_valid(gt.cwiseProduct(pred), w) - mx.cwiseProduct(my);
  const auto num = (2 * mx.array() * my.array() + c1) * (2 * sxy.array() + c2);
  const auto den = (mx.array().square() + my.array().square() + c1) * (sxx.array() + syy.array() + c2);
  return (num / den).mean();
}

Slice extract_slice(std::span<const float> volume, const std::vector<int>& dims, int axis, int index) {
  FAINR_REQUIRE(dims.size() == 2 || dims.size() == 3, ContractError,
                "slice: volume must have 2 or 3 axes");
  std::size_t n = 1;
  for (int e : dims) n *= static_cast<std::size_t>(e);
  FAINR_REQUIRE(volume.size() == n, ContractError, "slice: volume size does not match extents");
  if (dims.size() == 2) {
    Slice s(dims[0], dims[1]);
    for (int i = 0; i < dims[0]; ++i)
      for (int j = 0; j < dims[1]; ++j) s(i, j) = volume[static_cast<std::size_t>(i) * dims[1] + j];
    return s;
  }
  FAINR_REQUIRE(axis >= 0 && axis < 3, ContractError, "slice: axis must be 0, 1 or 2");
  FAINR_REQUIRE(index >= 0 && index < dims[static_cast<std::size_t>(axis)], ContractError,
                "slice: index out of range for axis " + std::to_string(axis));
  const int a = axis == 0 ? 1 : 0, b = axis == 2 ? 1 : 2;
  Slice s(dims[static_cast<std::size_t>(a)], dims[static_cast<std::size_t>(b)]);
  int ijk[3];
  ijk[axis] = index;
  for (int u = 0; u < s.rows(); ++u)
    for (int v = 0; v < s.cols(); ++v) {
      ijk[a] = u;
      ijk[b] = v;
      const std::size_t flat =
          (static_cast<std::size_t>(ijk[0]) * dims[1] + ijk[1]) * dims[2] + ijk[2];
      s(u, v) = volume[flat];
    }
  return s;
}

double volume_ssim(std::span<const float> gt, std::span<const float> pred, const std::vector<int>& dims) {
  require_pair(gt, pred);
  if (dims.size() == 2) return ssim(extract_slice(gt, dims, 0, 0), extract_slice(pred, dims, 0, 0));
  double total = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const int mid = dims[static_cast<std::size_t>(axis)] / 2;
    total += ssim(extract_slice(gt, dims, axis, mid), extract_slice(pred, dims, axis, mid));
  }
  return total / 3.0;
}

std::vector<ExpertScore> per_expert_psnr(std::span<const int> assignment, int experts,
                                         std::span<const float> gt, std::span<const float> pred,
                                         double range) {
  require_pair(gt, pred);
  FAINR_REQUIRE(assignment.size() == gt.size(), ContractError,
                "per_expert_psnr: assignment size differs from field size");
  FAINR_REQUIRE(range > 0, ContractError, "per_expert_psnr: range must be positive");
  std::vector<double> se(static_cast<std::size_t>(experts), 0.0);
  std::vector<ExpertScore> out(static_cast<std::size_t>(experts));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int e = assignment[i];
    FAINR_REQUIRE(e >= 0 && e < experts, ContractError, "per_expert_psnr: expert index out of range");
    const double d = static_cast<double>(pred[i]) - gt[i];
    se[static_cast<std::size_t>(e)] += d * d;
    ++out[static_cast<std::size_t>(e)].count;
  }
  for (int e = 0; e < experts; ++e) {
    auto& row = out[static_cast<std::size_t>(e)];
    row.expert = e;
    if (row.count > 0)
      row.psnr = psnr_from_mse(se[static_cast<std::size_t>(e)] / static_cast<double>(row.count), range);
  }
  return out;
}

double MetricReport::mean_psnr(const std::string& split) const {
  double s = 0;
  int n = 0;
  for (const auto& m : members)
    if ((split.empty() || m.split == split) && std::isfinite(m.psnr)) {
      s += m.psnr;
      ++n;
    }
  return n ? s / n : kInfinitePsnr;
}

double MetricReport::mean_md(const std::string& split) const {
  double s = 0;
  int n = 0;
  for (const auto& m : members)
    if (split.empty() || m.split == split) {
      s += m.md;
      ++n;
    }
  return n ? s / n : 0.0;
}

std::optional<double> MetricReport::mean_ssim(const std::string& split) const {
  double s = 0;
  int n = 0;
  for (const auto& m : members)
    if ((split.empty() || m.split == split) && m.ssim) {
      s += *m.ssim;
      ++n;
    }
  if (!n) return std::nullopt;
  return s / n;
}

std::string MetricReport::members_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "member,split,psnr_db,md,ssim\n";
  for (const auto& m : members)
    os << m.id << ',' << m.split << ',' << m.psnr << ',' << m.md << ',' << csv_value(m.ssim) << '\n';
  return os.str();
}

std::string MetricReport::experts_csv() const {
  std::ostringstream os;
  os << "expert,count,psnr_db,frequency\n";
  for (const auto& e : experts)
    os << e.expert << ',' << e.count << ',' << csv_value(e.psnr) << ',' << csv_value(e.frequency)
       << '\n';
  return os.str();
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["members"] = nlohmann::json::array();
  for (const auto& m : members)
    j["members"].push_back({{"id", m.id},
                            {"split", m.split},
                            {"psnr_db", optional_json(m.psnr)},
                            {"md", m.md},
                            {"ssim", optional_json(m.ssim)}});
  nlohmann::json summary;
  for (const std::string split : {"train", "test"}) {
    bool any = std::any_of(members.begin(), members.end(),
                           [&](const MemberScore& m) { return m.split == split; });
    if (!any) continue;
    summary[split] = {{"psnr_db", optional_json(mean_psnr(split))},
                      {"md", mean_md(split)},
                      {"ssim", optional_json(mean_ssim(split))}};
  }
  j["summary"] = summary;
  j["experts"] = nlohmann::json::array();
  for (const auto& e : experts)
    j["experts"].push_back({{"expert", e.expert},
                            {"count", e.count},
                            {"psnr_db", optional_json(e.psnr)},
                            {"frequency", optional_json(e.frequency)}});
  return j;
}

MemberScore score_member(const std::string& id, const std::string& split,
                         std::span<const float> gt, std::span<const float> pred,
                         const std::vector<int>& lattice) {
  MemberScore s;
  s.id = id;
  s.split = split;
  s.psnr = psnr(gt, pred, 1.0);
  s.md = max_diff(gt, pred);
  bool sliceable = lattice.size() == 2 || lattice.size() == 3;
  for (int e : lattice) sliceable = sliceable && e >= 11;
  if (sliceable) s.ssim = volume_ssim(gt, pred, lattice);
  return s;
}

}  // namespace fainr::metrics
