#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fainr/analysis/analysis.hpp"
#include "fainr/data/dataset.hpp"
#include "fainr/model/fa_inr.hpp"

namespace httplib {
class Server;
}

namespace fainr::service {

struct ServiceOptions {
  int step_cap = 64;               // largest accepted sensitivity sweep
  std::string cors_origin = "*";
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

using Query = std::map<std::string, std::string>;

// Read-only view of one trained model over one dataset. Every payload is in
// physical units; the normalization stats stay inside.
class Explorer {
 public:
  // `dataset` supplies coordinates and metadata; members carry ground truth
  // and may be absent.
  Explorer(model::FaInrModel<float> model, data::EnsembleDataset dataset,
           data::NormalizationStats stats, ServiceOptions options = {});
  Explorer(const Explorer&) = delete;
  Explorer& operator=(const Explorer&) = delete;

  Reply info() const;
  Reply predict(const std::string& body, bool binary) const;
  Reply slice(const Query& q) const;
  Reply expert_map(const Query& q) const;
  Reply sensitivity(const std::string& body) const;
  Reply experts_summary(const Query& q) const;

  // Routes a request to the handlers above; unknown paths give 404.
  Reply handle(const std::string& method, const std::string& path, const Query& q,
               const std::string& body) const;

  void mount(httplib::Server& server) const;

  const analysis::ExpertMap& map() const { return map_; }
  const data::NormalizationStats& stats() const { return stats_; }

 private:
  std::vector<double> parse_params(const nlohmann::json& value, const std::string& field) const;
  std::vector<double> query_params(const Query& q) const;
  std::vector<std::size_t> slice_indices(const Query& q, std::vector<int>& shape) const;
  std::vector<float> predict_indices(const std::vector<std::size_t>& idx,
                                     const std::vector<double>& p) const;

  model::FaInrModel<float> model_;
  model::FaInrModel<double> model64_;
  data::EnsembleDataset dataset_;
  data::NormalizationStats stats_;
  data::NormalizedEnsemble normalized_;
  ServiceOptions options_;
  analysis::ExpertMap map_;
  analysis::Graph graph_;
  std::unique_ptr<analysis::ModelSource<double>> source_;
  ad::Tensor<double> coords64_;
};

// Failure reported to clients as {code, message, field}.
struct ApiError : std::runtime_error {
  ApiError(int status, std::string code, const std::string& message, std::string field = "")
      : std::runtime_error(message), status(status), code(std::move(code)), field(std::move(field)) {}
  int status;
  std::string code;
  std::string field;
};

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);
std::string encode_floats(const std::vector<float>& values);
std::vector<float> decode_floats(const std::string& text);

}  // namespace fainr::service
