#include "qprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "qprune/errors.hpp"

namespace qprune {

std::size_t Architecture::flattened_features() const {
  std::size_t h = height, w = width;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    h = (h + 2 * padding - kernel) + 1;
    w = (w + 2 * padding - kernel) + 1;
    h /= pool;
    w /= pool;
  }
  const std::size_t c = conv_channels.empty() ? in_channels : conv_channels.back();
  return c * h * w;
}

std::string Architecture::describe() const {
  std::ostringstream os;
  os << "convnet";
  for (auto c : conv_channels) os << '-' << c;
  os << "-fc" << classes;
  return os.str();
}

void Architecture::validate() const {
  if (in_channels == 0 || height == 0 || width == 0 || classes < 2 || kernel == 0 || pool == 0) {
    throw ConfigError("invalid architecture " + describe());
  }
  std::size_t h = height, w = width;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    if (conv_channels[i] == 0) throw ConfigError("conv layer with zero channels");
    if (h + 2 * padding < kernel || w + 2 * padding < kernel) throw ConfigError("image too small for " + describe());
    h = (h + 2 * padding - kernel) + 1;
    w = (w + 2 * padding - kernel) + 1;
    if (h < pool || w < pool) throw ConfigError("image too small for " + describe());
    h /= pool;
    w /= pool;
  }
}

Model::Model(Architecture arch, std::vector<Parameter> params) : arch_(std::move(arch)), params_(std::move(params)) {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].penalized) penalized_.push_back(i);
}

Model Model::initialize(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Parameter> params;
  auto he = [&](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.values()) v = sd * normal(rng);
    return t;
  };
  std::size_t cin = arch.in_channels;
  for (std::size_t i = 0; i < arch.conv_channels.size(); ++i) {
    const std::size_t cout = arch.conv_channels[i];
    const std::string prefix = "conv" + std::to_string(i + 1);
    params.push_back({prefix + ".weight", he({cout, cin, arch.kernel, arch.kernel}, cin * arch.kernel * arch.kernel), true});
    params.push_back({prefix + ".bias", Tensor(Shape{cout}, 0.0), false});
    cin = cout;
  }
  const std::size_t features = arch.flattened_features();
  params.push_back({"fc.weight", he({arch.classes, features}, features), true});
  params.push_back({"fc.bias", Tensor(Shape{arch.classes}, 0.0), false});
  return Model(arch, std::move(params));
}

std::vector<Tensor> Model::penalized_weights() const {
  std::vector<Tensor> out;
  for (auto i : penalized_) out.push_back(params_[i].value);
  return out;
}

std::vector<std::string> Model::penalized_names() const {
  std::vector<std::string> out;
  for (auto i : penalized_) out.push_back(params_[i].name);
  return out;
}

Var build_forward(Graph& graph, const Architecture& arch, std::span<const Tensor> params, const Tensor& images,
                  std::vector<Var>* param_vars) {
  const std::size_t expected = 2 * arch.conv_channels.size() + 2;
  if (params.size() != expected) {
    throw ShapeError("model expects " + std::to_string(expected) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  std::vector<Var> vars;
  Var x = graph.constant(images, "input");
  std::size_t p = 0;
  for (std::size_t i = 0; i < arch.conv_channels.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i + 1);
    Var w = graph.parameter(params[p++], prefix + ".weight");
    Var b = graph.parameter(params[p++], prefix + ".bias");
    vars.push_back(w);
    vars.push_back(b);
    x = graph.conv2d(x, w, &b, 1, arch.padding, prefix);
    x = graph.relu(x, prefix + ".relu");
    x = graph.max_pool2d(x, arch.pool, prefix + ".pool");
  }
  x = graph.flatten(x, "flatten");
  Var w = graph.parameter(params[p++], "fc.weight");
  Var b = graph.parameter(params[p++], "fc.bias");
  vars.push_back(w);
  vars.push_back(b);
  Var logits = graph.dense(x, w, &b, "fc");
  if (param_vars) *param_vars = std::move(vars);
  return logits;
}

std::vector<int> predict(const Architecture& arch, std::span<const Tensor> params, const Tensor& images) {
  Graph g;
  const Tensor& logits = g.value(build_forward(g, arch, params, images));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    const double* row = logits.data().data() + b * k;
    out[b] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

QuantizedModel project_all(const Model& model, QuantSpec& spec) {
  QuantizedModel q;
  for (const auto& p : model.parameters()) {
    if (!p.penalized) {
      q.params.push_back(p.value);
      continue;
    }
    std::optional<double> prev;
    if (auto it = spec.per_layer_scale.find(p.name); it != spec.per_layer_scale.end()) prev = it->second;
    QuantizedLayer layer = project_layer(p.value, spec, prev);
    spec.per_layer_scale[p.name] = layer.scale;
    q.params.push_back(layer.dequantize());
    q.layers.push_back(std::move(layer));
  }
  return q;
}

QuantizedModel project_all_fixed(const Model& model, const QuantSpec& spec) {
  QuantizedModel q;
  for (const auto& p : model.parameters()) {
    if (!p.penalized) {
      q.params.push_back(p.value);
      continue;
    }
    QuantizedLayer layer = project_fixed_scale(p.value, spec.per_layer_scale.at(p.name), spec.max_level());
    q.params.push_back(layer.dequantize());
    q.layers.push_back(std::move(layer));
  }
  return q;
}

}  // namespace qprune
