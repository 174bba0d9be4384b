#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace picsift {

enum class Errc {
  root_not_found,
  root_not_a_directory,
  decode_error,
  root_mismatch,
  model_file_missing,
  graph_signature_mismatch,
  role_mismatch,
  inference_failure,
  empty_prompt,
  degenerate_box,
  dimension_mismatch,
  zero_vector,
  revision_mismatch,
  checksum_mismatch,
  schema_unsupported,
  index_inconsistent,
  model_mismatch,
  prompt_not_found,
  empty_catalog,
  stale_index,
  empty_results,
  bad_path,
  unknown_model,
  invalid_argument,
  invalid_manifest,
  io_error,
};

std::string_view to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (CLI exit codes, HTTP error payloads) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace picsift
