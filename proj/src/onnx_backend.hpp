#pragma once

#include <memory>

#include "picsift/inference.hpp"

namespace picsift {

/// Graph with one image input and a single output of feature_dim values.
std::shared_ptr<ExtractorEngine> open_onnx_extractor(const ModelDescriptor& d);

/// Graph with inputs `pixel_values` (1,3,H,W) and `query_embeds` (1,1,D) and
/// outputs `logits` (1,N,1) and `pred_boxes` (1,N,4, normalized cx,cy,w,h).
/// Prompt embeddings come from the `queries` table named in the manifest.
std::shared_ptr<DetectorEngine> open_onnx_detector(const ModelDescriptor& d);

}  // namespace picsift
