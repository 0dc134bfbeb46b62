// Copyright 2026 The gaussreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/*
 * Feature-extractor MLP followed by a regressor head. The final layer has
 * width 2D: the first D columns are the means, the last D columns pass
 * through softplus (plus a floor) to become standard deviations.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gaussreg/error.hpp"
#include "gaussreg/gauss_head.hpp"
#include "gaussreg/rng.hpp"
#include "gaussreg/tensor.hpp"

namespace gaussreg {

enum class Activation { tanh, relu };

inline std::string_view activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "' (expected tanh or relu)");
}

struct LayerSpec {
  std::size_t width = 50;
  Activation activation = Activation::tanh;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::size_t input_dim = 1;
  std::vector<LayerSpec> hidden_layers{{50, Activation::tanh}};
  /// Hidden widths of the regressor head, before the 2D-wide output layer.
  std::vector<std::size_t> head_hidden{50};
  Activation head_activation = Activation::tanh;
  std::size_t output_dim = 1;
  double sigma_floor = 1e-6;
  std::uint64_t seed = 0;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

  void validate() const {
    if (input_dim == 0) throw std::invalid_argument("NetworkSpec: input_dim must be positive");
    if (output_dim == 0) throw std::invalid_argument("NetworkSpec: output_dim must be positive");
    for (const auto& l : hidden_layers) {
      if (l.width == 0) throw std::invalid_argument("NetworkSpec: hidden layer width must be positive");
    }
    for (auto w : head_hidden) {
      if (w == 0) throw std::invalid_argument("NetworkSpec: head layer width must be positive");
    }
    if (!(sigma_floor > 0.0) || !std::isfinite(sigma_floor)) {
      throw std::invalid_argument("NetworkSpec: sigma_floor must be positive");
    }
  }

  /// (fan_in, fan_out) of every dense layer, input to output.
  std::vector<std::pair<std::size_t, std::size_t>> layer_dims() const {
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    std::size_t in = input_dim;
    for (const auto& l : hidden_layers) {
      dims.emplace_back(in, l.width);
      in = l.width;
    }
    for (auto w : head_hidden) {
      dims.emplace_back(in, w);
      in = w;
    }
    dims.emplace_back(in, 2 * output_dim);
    return dims;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto [in, out] : layer_dims()) n += in * out + out;
    return n;
  }
};

inline void to_json(nlohmann::json& j, const NetworkSpec& s) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : s.hidden_layers) {
    layers.push_back({{"width", l.width}, {"activation", activation_name(l.activation)}});
  }
  j = nlohmann::json{{"input_dim", s.input_dim},
                     {"hidden_layers", layers},
                     {"head_hidden", s.head_hidden},
                     {"head_activation", activation_name(s.head_activation)},
                     {"output_dim", s.output_dim},
                     {"sigma_floor", s.sigma_floor},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, NetworkSpec& s) {
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden_layers.clear();
  for (const auto& l : j.at("hidden_layers")) {
    s.hidden_layers.push_back({l.at("width").get<std::size_t>(), parse_activation(l.at("activation").get<std::string>())});
  }
  s.head_hidden = j.at("head_hidden").get<std::vector<std::size_t>>();
  s.head_activation = parse_activation(j.at("head_activation").get<std::string>());
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.sigma_floor = j.at("sigma_floor").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
}

/// Graph handles produced by one forward pass.
struct ForwardPass {
  Var mu;
  Var sigma;
  /// One leaf per network parameter, in Network::parameters() order.
  std::vector<Var> params;
};

class Network {
 public:
  /// Scaled-uniform weights U(-a, a), a = sqrt(6 / (fan_in + fan_out)); zero
  /// biases except the sigma half of the output bias, which starts at
  /// softplus^-1(1).
  static Network init(const NetworkSpec& spec) {
    spec.validate();
    Network net(spec);
    Rng rng(spec.seed, Stream::init);
    const auto dims = spec.layer_dims();
    for (auto [in, out] : dims) {
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      std::vector<double> w(in * out);
      for (auto& v : w) v = rng.uniform(-bound, bound);
      net.params_.push_back(Tensor::matrix(in, out, std::move(w)));
      net.params_.push_back(Tensor::zeros(Shape{out}));
    }
    Tensor& out_bias = net.params_.back();
    const double unit = softplus_inverse(1.0);
    for (std::size_t d = 0; d < spec.output_dim; ++d) out_bias[spec.output_dim + d] = unit;
    return net;
  }

  /// Adopts externally supplied parameters; shapes must match the spec.
  static Network from_parameters(const NetworkSpec& spec, std::vector<Tensor> params) {
    spec.validate();
    Network net(spec);
    const auto dims = spec.layer_dims();
    if (params.size() != 2 * dims.size()) {
      throw DimensionError(detail::concat("Network: expected ", 2 * dims.size(), " parameter tensors, got ", params.size()));
    }
    for (std::size_t l = 0; l < dims.size(); ++l) {
      const Shape w{dims[l].first, dims[l].second};
      const Shape b{dims[l].second};
      if (params[2 * l].shape() != w || params[2 * l + 1].shape() != b) {
        throw DimensionError(detail::concat("Network: layer ", l, " expects weight ", shape_str(w), " and bias ",
                                            shape_str(b), ", got ", shape_str(params[2 * l].shape()), " and ",
                                            shape_str(params[2 * l + 1].shape())));
      }
    }
    net.params_ = std::move(params);
    return net;
  }

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  /// Records the forward computation on g. x is N x input_dim.
  ForwardPass forward(Graph& g, Var x, bool track_gradients = true) const {
    const Tensor& xv = g.value(x);
    if (xv.rank() != 2 || xv.cols() != spec_.input_dim) {
      throw DimensionError(detail::concat("Network::forward: expected input width ", spec_.input_dim, ", got shape ",
                                          shape_str(xv.shape())));
    }
    ForwardPass pass;
    pass.params.reserve(params_.size());
    for (const auto& p : params_) pass.params.push_back(g.input(p, track_gradients));

    const std::size_t n_trunk = spec_.hidden_layers.size();
    const std::size_t n_layers = params_.size() / 2;
    Var h = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
      h = g.add_row(g.matmul(h, pass.params[2 * l]), pass.params[2 * l + 1]);
      if (l + 1 == n_layers) break;
      const Activation act = l < n_trunk ? spec_.hidden_layers[l].activation : spec_.head_activation;
      h = act == Activation::tanh ? g.tanh(h) : g.relu(h);
    }
    const std::size_t d = spec_.output_dim;
    pass.mu = g.slice_cols(h, 0, d);
    pass.sigma = g.shift(g.softplus(g.slice_cols(h, d, d)), spec_.sigma_floor);
    return pass;
  }

  /// Inference in the units the network was trained in.
  GaussianBatch predict(const Tensor& x) const {
    Graph g;
    const Var xv = g.input(x);
    const auto pass = forward(g, xv, false);
    return {g.value(pass.mu), g.value(pass.sigma)};
  }

  friend bool operator==(const Network& a, const Network& b) { return a.spec_ == b.spec_ && a.params_ == b.params_; }

 private:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) {}

  NetworkSpec spec_;
  std::vector<Tensor> params_;
};

inline constexpr std::string_view kModelHeader = "GAUSSREG-MODEL v1";

/// JSON body of a model file: spec plus flat parameter arrays.
inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : net.parameters()) params.push_back({{"shape", p.shape()}, {"data", p.values()}});
  return {{"spec", net.spec()}, {"parameters", params}};
}

inline Network network_from_json(const nlohmann::json& doc) {
  try {
    const auto spec = doc.at("spec").get<NetworkSpec>();
    std::vector<Tensor> params;
    for (const auto& p : doc.at("parameters")) {
      params.emplace_back(p.at("shape").get<Shape>(), p.at("data").get<std::vector<double>>());
    }
    return Network::from_parameters(spec, std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("model file: inconsistent shapes: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model file: invalid spec: ") + e.what());
  }
}

/// Header line followed by one JSON document.
inline std::string serialize_model(const nlohmann::json& body) { return std::string(kModelHeader) + "\n" + body.dump(1) + "\n"; }

inline nlohmann::json parse_model(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("model file: empty");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != kModelHeader) {
    if (header.rfind("GAUSSREG-MODEL", 0) == 0) {
      throw FormatError("model file: unsupported version '" + header + "', expected '" + std::string(kModelHeader) + "'");
    }
    throw FormatError("model file: bad magic header, expected '" + std::string(kModelHeader) + "'");
  }
  std::stringstream rest;
  rest << in.rdbuf();
  try {
    return nlohmann::json::parse(rest.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("model file: truncated or malformed body: ") + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline void save(const Network& net, const std::string& path) { write_text_file(path, serialize_model(network_to_json(net))); }

inline Network load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  return network_from_json(parse_model(in));
}

}  // namespace gaussreg
