#include "picsift/error.hpp"

namespace picsift {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::root_not_found: return "root not found";
    case Errc::root_not_a_directory: return "root is not a directory";
    case Errc::decode_error: return "decode error";
    case Errc::root_mismatch: return "catalog root mismatch";
    case Errc::model_file_missing: return "model file missing";
    case Errc::graph_signature_mismatch: return "graph signature mismatch";
    case Errc::role_mismatch: return "model role mismatch";
    case Errc::inference_failure: return "inference failure";
    case Errc::empty_prompt: return "empty prompt";
    case Errc::degenerate_box: return "degenerate box";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::zero_vector: return "zero vector";
    case Errc::revision_mismatch: return "model revision mismatch";
    case Errc::checksum_mismatch: return "checksum mismatch";
    case Errc::schema_unsupported: return "schema unsupported";
    case Errc::index_inconsistent: return "index inconsistent";
    case Errc::model_mismatch: return "model mismatch";
    case Errc::prompt_not_found: return "prompt not found";
    case Errc::empty_catalog: return "empty catalog";
    case Errc::stale_index: return "stale index";
    case Errc::empty_results: return "empty results";
    case Errc::bad_path: return "bad path";
    case Errc::unknown_model: return "unknown model";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::invalid_manifest: return "invalid manifest";
    case Errc::io_error: return "i/o error";
  }
  return "unknown error";
}

}  // namespace picsift
