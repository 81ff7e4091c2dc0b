#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qprune/autodiff.hpp"
#include "qprune/quantizer.hpp"
#include "qprune/tensor.hpp"

namespace qprune {

// Conv(3x3, pad 1) -> ReLU -> MaxPool(2) repeated per entry of conv_channels,
// then a dense classifier.
struct Architecture {
  std::size_t in_channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<std::size_t> conv_channels{16, 32};
  std::size_t classes = 4;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  std::size_t pool = 2;

  std::size_t flattened_features() const;
  std::string describe() const;
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  bool penalized = false;  // weights are quantized and penalized, biases are not
};

class Model {
 public:
  Model() = default;
  Model(Architecture arch, std::vector<Parameter> params);

  // He-normal weights, zero biases.
  static Model initialize(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  const std::vector<std::size_t>& penalized_indices() const noexcept { return penalized_; }

  std::vector<Tensor> penalized_weights() const;
  std::vector<std::string> penalized_names() const;

 private:
  Architecture arch_;
  std::vector<Parameter> params_;
  std::vector<std::size_t> penalized_;
};

// Records the graph for `images` using the given parameter values, which must
// line up with Model::parameters(). `param_vars` receives one Var per parameter.
Var build_forward(Graph& graph, const Architecture& arch, std::span<const Tensor> params, const Tensor& images,
                  std::vector<Var>* param_vars = nullptr);

// Class predictions by argmax (lowest index wins ties).
std::vector<int> predict(const Architecture& arch, std::span<const Tensor> params, const Tensor& images);

// u = Proj_Q(w) for every penalized parameter; other parameters pass through.
struct QuantizedModel {
  std::vector<QuantizedLayer> layers;  // one per penalized parameter, in order
  std::vector<Tensor> params;          // full parameter list with u substituted
};

// Updates spec.per_layer_scale with the scales chosen.
QuantizedModel project_all(const Model& model, QuantSpec& spec);
// Projection with the scales stored in `spec` held fixed.
QuantizedModel project_all_fixed(const Model& model, const QuantSpec& spec);

}  // namespace qprune
