#include <httplib.h>

#include <json.hpp>

#include "saml/base64.hpp"
#include "saml/error.hpp"
#include "saml/promptseg.hpp"

namespace saml::promptseg {

using json = nlohmann::json;

struct ExternalModelAdapter::Impl {
  explicit Impl(const ExternalAdapterConfig& cfg) : client(cfg.endpoint) {
    client.set_connection_timeout(cfg.timeout_s, 0);
    client.set_read_timeout(cfg.timeout_s, 0);
    client.set_write_timeout(cfg.timeout_s, 0);
  }
  httplib::Client client;
};

ExternalModelAdapter::ExternalModelAdapter(ExternalAdapterConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint.empty()) {
    throw InputError("external segmenter requires an endpoint URL");
  }
  if (cfg_.threshold < 0.0 || cfg_.threshold > 1.0) {
    throw InputError("segmenter threshold must be in [0,1]");
  }
  impl_ = std::make_unique<Impl>(cfg_);
}

ExternalModelAdapter::~ExternalModelAdapter() = default;

SegmentResult ExternalModelAdapter::segment(const data::Patch& patch,
                                            const boxgen::BoxPrompt& box) {
  const int h = patch.image.height(), w = patch.image.width();

  json req;
  req["model"] = cfg_.model_id;
  req["patch_id"] = patch.patch_id;
  req["height"] = h;
  req["width"] = w;
  req["image_b64"] =
      base64::encode(reinterpret_cast<const uint8_t*>(patch.image.data().data()),
                     patch.image.size() * 3);
  req["box"] = {{"r_min", box.r_min}, {"c_min", box.c_min}, {"r_max", box.r_max},
                {"c_max", box.c_max}};
  req["cell_class"] = data::to_string(box.cell_class);

  auto res = impl_->client.Post("/segment", req.dump(), "application/json");
  if (!res) {
    throw BackendUnavailableError("segmenter unavailable at " + cfg_.endpoint + ": " +
                                      httplib::to_string(res.error()),
                                  {box.instance_id});
  }
  if (res->status >= 500) {
    throw BackendUnavailableError("segmenter error " + std::to_string(res->status) + " at " +
                                      cfg_.endpoint,
                                  {box.instance_id});
  }
  if (res->status != 200) {
    throw ContractViolationError("segmenter rejected request with status " +
                                 std::to_string(res->status) + ": " + res->body);
  }

  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::exception& e) {
    throw ContractViolationError(std::string("segmenter returned invalid JSON: ") + e.what());
  }
  if (!reply.contains("mask_b64") || !reply["mask_b64"].is_string()) {
    throw ContractViolationError("segmenter reply missing mask_b64");
  }

  std::vector<uint8_t> soft = base64::decode(reply["mask_b64"].get<std::string>());
  if (soft.size() != size_t(h) * size_t(w)) {
    throw ContractViolationError("segmenter returned " + std::to_string(soft.size()) +
                                 " mask bytes for a " + std::to_string(h) + "x" +
                                 std::to_string(w) + " patch");
  }

  SegmentResult out;
  out.instance_id = box.instance_id;
  out.mask = Mask(h, w);
  const double cut = cfg_.threshold * 255.0;
  for (size_t i = 0; i < soft.size(); ++i) out.mask[i] = double(soft[i]) >= cut ? 1 : 0;

  if (reply.contains("confidence")) {
    if (!reply["confidence"].is_number()) {
      throw ContractViolationError("segmenter confidence is not a number");
    }
    const double c = reply["confidence"].get<double>();
    if (c < 0.0 || c > 1.0) {
      throw ContractViolationError("segmenter confidence outside [0,1]");
    }
    out.confidence = c;
  } else {
    out.confidence = 1.0;
  }
  return out;
}

}  // namespace saml::promptseg
