#include "picsift/api.hpp"

#include <cctype>
#include <cstdio>

namespace picsift {

namespace {

template <class T>
std::optional<T> optional_field(const nlohmann::json& body, const char* name,
                                bool (nlohmann::json::*check)() const noexcept) {
  const auto it = body.find(name);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!((*it).*check)()) {
    throw Error(Errc::invalid_argument, std::string("field '") + name + "' has the wrong type");
  }
  return it->get<T>();
}

}  // namespace

SearchRequest parse_search_request(const nlohmann::json& body) {
  if (!body.is_object()) throw Error(Errc::invalid_argument, "request body must be a JSON object");
  SearchRequest req;
  req.prompt = optional_field<std::string>(body, "prompt", &nlohmann::json::is_string).value_or("");
  req.threshold = optional_field<double>(body, "threshold", &nlohmann::json::is_number);
  if (const auto k = optional_field<long long>(body, "k", &nlohmann::json::is_number_integer)) {
    if (*k < 1) throw Error(Errc::invalid_argument, "k must be a positive integer");
    req.k = static_cast<std::size_t>(*k);
  }
  req.model = optional_field<std::string>(body, "model", &nlohmann::json::is_string);
  if (const auto it = body.find("seed"); it != body.end() && !it->is_null()) {
    if (it->is_number_unsigned()) {
      req.seed = it->get<std::uint64_t>();
    } else if (it->is_number_integer() && it->get<long long>() >= 0) {
      req.seed = static_cast<std::uint64_t>(it->get<long long>());
    } else {
      throw Error(Errc::invalid_argument, "field 'seed' must be a non-negative integer");
    }
  }
  return req;
}

nlohmann::ordered_json search_response_json(const SearchOutcome& outcome,
                                            const std::string& model_id) {
  nlohmann::ordered_json j;
  j["model"] = model_id;
  auto items = nlohmann::ordered_json::array();
  int rank = 0;
  for (const auto& it : outcome.results.items) {
    items.push_back({{"rank", ++rank},
                     {"path", it.relative_path},
                     {"score", it.score},
                     {"thumbnail", thumbnail_url(it.relative_path, 256)}});
  }
  j["items"] = std::move(items);
  if (const auto& p = outcome.results.provenance) {
    j["provenance"] = {{"source", p->source_path},
                       {"bbox", {p->bbox.x_min, p->bbox.y_min, p->bbox.x_max, p->bbox.y_max}},
                       {"detector_score", p->detector_score},
                       {"prompt", p->prompt},
                       {"seed", p->seed},
                       {"attempts", p->attempts},
                       {"thumbnail", thumbnail_url(p->source_path, 512)}};
  } else {
    j["provenance"] = nullptr;
  }
  j["timing_ms"] = {{"detect", outcome.timings.detect_ms},
                    {"extract", outcome.timings.extract_ms},
                    {"rank", outcome.timings.rank_ms}};
  return j;
}

std::string thumbnail_url(const std::string& relative_path, int size) {
  std::string out = "/api/image?path=";
  for (unsigned char c : relative_path) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == '/') {
      out += static_cast<char>(c);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  return out + "&size=" + std::to_string(size);
}

std::string api_error_code(Errc code) {
  switch (code) {
    case Errc::prompt_not_found: return "PROMPT_NOT_FOUND";
    case Errc::stale_index:
    case Errc::revision_mismatch:
    case Errc::model_mismatch: return "STALE_INDEX";
    case Errc::unknown_model:
    case Errc::model_file_missing: return "MODEL_MISSING";
    case Errc::bad_path:
    case Errc::root_not_found:
    case Errc::root_not_a_directory: return "BAD_PATH";
    case Errc::empty_prompt: return "EMPTY_PROMPT";
    case Errc::empty_catalog: return "EMPTY_CATALOG";
    case Errc::invalid_argument: return "INVALID_ARGUMENT";
    case Errc::decode_error: return "DECODE_ERROR";
    default: return "INTERNAL";
  }
}

int http_status(Errc code) {
  switch (code) {
    case Errc::prompt_not_found:
    case Errc::empty_catalog: return 422;
    case Errc::stale_index:
    case Errc::revision_mismatch:
    case Errc::model_mismatch: return 409;
    case Errc::unknown_model:
    case Errc::model_file_missing: return 404;
    case Errc::bad_path:
    case Errc::root_not_found:
    case Errc::root_not_a_directory:
    case Errc::empty_prompt:
    case Errc::invalid_argument: return 400;
    case Errc::decode_error: return 415;
    default: return 500;
  }
}

nlohmann::ordered_json error_json(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

}  // namespace picsift
