#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "picsift/error.hpp"
#include "picsift/query.hpp"

namespace picsift {

struct SearchRequest {
  std::string prompt;
  std::optional<double> threshold;
  std::optional<std::size_t> k;
  std::optional<std::string> model;
  std::optional<std::uint64_t> seed;
};

/// Throws Error(invalid_argument) for wrong field types.
SearchRequest parse_search_request(const nlohmann::json& body);

/// The SearchResponse document shared by `picsift search --json` and
/// POST /api/search.
nlohmann::ordered_json search_response_json(const SearchOutcome& outcome,
                                            const std::string& model_id);

/// "/api/image?path=<escaped>&size=<n>"
std::string thumbnail_url(const std::string& relative_path, int size);

/// Machine-readable code used in error payloads (e.g. "PROMPT_NOT_FOUND").
std::string api_error_code(Errc code);
int http_status(Errc code);
nlohmann::ordered_json error_json(const std::string& code,
                                  const std::string& message);

}  // namespace picsift
