#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcl/tensor.hpp"

namespace fcl {

/// One affine layer: weight is [out x in], bias is [out].
struct Layer {
  Tensor weight;
  Tensor bias;

  [[nodiscard]] std::size_t in() const noexcept { return weight.cols(); }
  [[nodiscard]] std::size_t out() const noexcept { return weight.rows(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Encoder f, projection head g and the optional classifier head used in fine-tuning.
///
/// The same type carries gradients and optimizer buffers, which then mirror the
/// parameter layout one tensor for one tensor.
struct ModelParams {
  std::vector<Layer> encoder;
  std::vector<Layer> projection;
  std::optional<Layer> classifier;

  [[nodiscard]] std::size_t input_dim() const;
  [[nodiscard]] std::size_t embedding_dim() const;
  [[nodiscard]] std::size_t parameter_count() const;

  /// Every weight and bias tensor in storage order: encoder, projection, classifier.
  [[nodiscard]] std::vector<Tensor*> tensors();
  [[nodiscard]] std::vector<const Tensor*> tensors() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Layer widths of the MLP encoder and projection head.
struct Architecture {
  std::size_t input_dim = 256;
  std::vector<std::size_t> encoder_widths{128, 128};
  std::size_t projection_hidden = 128;
  std::size_t feature_dim = 32;

  void validate() const;
};

/// He-uniform weights, biases uniform in +-1/sqrt(fan_in). Deterministic in `seed`.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);
Layer init_layer(std::size_t in, std::size_t out, std::uint64_t seed);

/// Zero tensors with the layout of `params`.
ModelParams zeros_like(const ModelParams& params);
[[nodiscard]] bool same_architecture(const ModelParams& a, const ModelParams& b);
/// Throws ValidationError naming the first mismatching tensor.
void require_same_architecture(const ModelParams& a, const ModelParams& b, const std::string& context);
/// Checks the chaining of layer widths inside and across the heads.
void validate_params(const ModelParams& params);

enum class Mode { encode, project, classify };

/// Activations recorded by forward() for the matching backward() call.
struct Stash {
  Mode mode = Mode::encode;
  Tensor input;
  std::vector<Tensor> inputs;          // input of each layer in the chain
  std::vector<Tensor> pre_activation;  // affine output of each layer
  std::vector<bool> relu;              // whether the layer is followed by ReLU
  Tensor unnormalized;                 // project mode: head output before L2 normalization
  std::vector<double> row_norms;       // project mode
};

struct ForwardResult {
  Tensor output;
  Stash stash;
};

/// Affine + ReLU chain. The encoder applies ReLU after every layer; each head
/// applies it after every layer except its last. Project mode L2-normalizes rows.
ForwardResult forward(const ModelParams& params, const Tensor& batch, Mode mode);

/// Output only, no stash retained.
Tensor infer(const ModelParams& params, const Tensor& batch, Mode mode);

/// Reverse-mode gradients of sum(output_grad * output) with respect to every
/// parameter. Tensors not on the forward path come back as zeros.
ModelParams backward(const ModelParams& params, const Stash& stash, const Tensor& output_grad);

/// Row-wise unit L2 normalization. Throws ValidationError on an all-zero row.
Tensor l2_normalize(const Tensor& v);

/// Mean softmax cross-entropy over rows of `logits` and its gradient with respect to the logits.
struct CrossEntropy {
  double loss = 0.0;
  Tensor grad;
};
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

/// Hash of the ReLU on/off pattern and the smallest |pre-activation| among ReLU
/// units; used by grad_check to detect probes that straddle a kink.
struct KinkInfo {
  std::uint64_t pattern = 0;
  double margin = 0.0;
};
KinkInfo kink_info(const Stash& stash);

}  // namespace fcl
