#include "onnx_backend.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "picsift/error.hpp"
#include "picsift/stub_backend.hpp"
#include "text_util.hpp"

namespace picsift {
namespace {

cv::Mat to_blob(const Tensor& t) {
  const int dims[4] = {1, t.channels, t.height, t.width};
  cv::Mat blob(4, dims, CV_32F);
  std::copy(t.data.begin(), t.data.end(), blob.ptr<float>());
  return blob;
}

cv::dnn::Net read_net(const ModelDescriptor& d) {
  try {
    auto net = cv::dnn::readNetFromONNX(d.file_path.string());
    if (net.empty()) {
      throw Error(Errc::graph_signature_mismatch, d.model_id + ": empty graph");
    }
    net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    return net;
  } catch (const cv::Exception& e) {
    throw Error(Errc::graph_signature_mismatch,
                d.model_id + ": cannot import graph: " + e.what());
  }
}

Tensor zeros(const PreprocessSpec& spec) {
  Tensor t;
  t.channels = 3;
  t.height = spec.target_height;
  t.width = spec.target_width;
  t.data.assign(static_cast<std::size_t>(3) * t.height * t.width, 0.0f);
  return t;
}

class OnnxExtractor final : public ExtractorEngine {
 public:
  OnnxExtractor(cv::dnn::Net net, int dim) : net_(std::move(net)), dim_(dim) {}

  int output_dim() const override { return dim_; }

  std::vector<float> forward(const Tensor& input) override {
    net_.setInput(to_blob(input));
    cv::Mat out = net_.forward();
    const auto* p = out.ptr<float>();
    return std::vector<float>(p, p + out.total());
  }

 private:
  cv::dnn::Net net_;
  int dim_;
};

class OnnxDetector final : public DetectorEngine {
 public:
  OnnxDetector(cv::dnn::Net net, std::map<std::string, std::vector<float>> queries,
               std::size_t query_dim, std::string model_id)
      : net_(std::move(net)), queries_(std::move(queries)),
        query_dim_(query_dim), model_id_(std::move(model_id)) {}

  std::vector<Detection> forward(const DecodedImage&, const Tensor& input,
                                 const ResizeGeometry& geometry,
                                 std::string_view prompt) override {
    const auto it = queries_.find(normalize_prompt(prompt));
    if (it == queries_.end()) {
      throw Error(Errc::inference_failure,
                  model_id_ + ": no query embedding for prompt '" + std::string(prompt) + "'");
    }
    const auto [logits, boxes] = run(input, it->second);
    std::vector<Detection> out;
    const std::size_t n = boxes.total() / 4;
    const auto* lp = logits.ptr<float>();
    const auto* bp = boxes.ptr<float>();
    for (std::size_t i = 0; i < n; ++i) {
      const double cx = bp[4 * i] * input.width, cy = bp[4 * i + 1] * input.height;
      const double w = bp[4 * i + 2] * input.width, h = bp[4 * i + 3] * input.height;
      Detection d;
      d.bbox = {geometry.to_source_x(cx - w / 2), geometry.to_source_y(cy - h / 2),
                geometry.to_source_x(cx + w / 2), geometry.to_source_y(cy + h / 2)};
      d.score = 1.0 / (1.0 + std::exp(-static_cast<double>(lp[i])));
      out.push_back(d);
    }
    return out;
  }

  std::pair<cv::Mat, cv::Mat> run(const Tensor& input, const std::vector<float>& query) {
    const int qdims[3] = {1, 1, static_cast<int>(query.size())};
    cv::Mat q(3, qdims, CV_32F);
    std::copy(query.begin(), query.end(), q.ptr<float>());
    net_.setInput(to_blob(input), "pixel_values");
    net_.setInput(q, "query_embeds");
    std::vector<cv::Mat> outs;
    net_.forward(outs, std::vector<cv::String>{"logits", "pred_boxes"});
    if (outs.size() != 2 || outs[1].total() % 4 != 0 ||
        outs[0].total() != outs[1].total() / 4) {
      throw Error(Errc::graph_signature_mismatch,
                  model_id_ + ": expected logits (1,N,1) and pred_boxes (1,N,4)");
    }
    return {outs[0].clone(), outs[1].clone()};
  }

  std::size_t query_dim() const { return query_dim_; }

 private:
  cv::dnn::Net net_;
  std::map<std::string, std::vector<float>> queries_;
  std::size_t query_dim_;
  std::string model_id_;
};

std::map<std::string, std::vector<float>> read_query_table(const std::string& path,
                                                           std::size_t& dim) {
  std::map<std::string, std::vector<float>> table;
  dim = 0;
  for (const auto& [cols, line] : detail::parse_tsv(detail::read_text_file(path))) {
    if (cols.size() != 2) {
      throw Error(Errc::invalid_manifest,
                  path + ":" + std::to_string(line) + ": expected prompt<TAB>values");
    }
    std::vector<float> v;
    std::string values = cols[1];
    std::replace(values.begin(), values.end(), ',', ' ');
    for (const auto& tok : detail::split(values, ' ')) {
      if (detail::trim(tok).empty()) continue;
      const auto x = detail::parse_double(tok);
      if (!x) {
        throw Error(Errc::invalid_manifest,
                    path + ":" + std::to_string(line) + ": bad number '" + tok + "'");
      }
      v.push_back(static_cast<float>(*x));
    }
    if (v.empty() || (dim != 0 && v.size() != dim)) {
      throw Error(Errc::invalid_manifest,
                  path + ":" + std::to_string(line) + ": inconsistent embedding size");
    }
    dim = v.size();
    table[normalize_prompt(cols[0])] = std::move(v);
  }
  if (table.empty()) throw Error(Errc::invalid_manifest, path + ": no query embeddings");
  return table;
}

}  // namespace

std::shared_ptr<ExtractorEngine> open_onnx_extractor(const ModelDescriptor& d) {
  auto net = read_net(d);
  const int dim = *d.feature_dim;
  try {
    if (net.getUnconnectedOutLayersNames().size() != 1) {
      throw Error(Errc::graph_signature_mismatch,
                  d.model_id + ": extractor graph must have exactly one output");
    }
    auto engine = std::make_shared<OnnxExtractor>(std::move(net), dim);
    const auto probe = engine->forward(zeros(d.preprocess));
    if (static_cast<int>(probe.size()) != dim) {
      throw Error(Errc::graph_signature_mismatch,
                  d.model_id + ": graph output has " + std::to_string(probe.size()) +
                      " values, manifest declares feature_dim " + std::to_string(dim));
    }
    return engine;
  } catch (const cv::Exception& e) {
    throw Error(Errc::graph_signature_mismatch,
                d.model_id + ": graph does not run as an extractor: " + e.what());
  }
}

std::shared_ptr<DetectorEngine> open_onnx_detector(const ModelDescriptor& d) {
  const auto q = d.options.find("queries");
  if (q == d.options.end()) {
    throw Error(Errc::invalid_manifest, d.model_id + ": detector needs a 'queries' table");
  }
  std::size_t qdim = 0;
  auto table = read_query_table(q->second, qdim);
  auto net = read_net(d);
  try {
    auto engine = std::make_shared<OnnxDetector>(std::move(net), std::move(table), qdim,
                                                 d.model_id);
    engine->run(zeros(d.preprocess), std::vector<float>(qdim, 0.0f));
    return engine;
  } catch (const cv::Exception& e) {
    throw Error(Errc::graph_signature_mismatch,
                d.model_id + ": graph does not run as a detector: " + e.what());
  }
}

}  // namespace picsift
