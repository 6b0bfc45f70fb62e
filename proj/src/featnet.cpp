#include "pqlab/featnet.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pqlab/io_util.hpp"

namespace pqlab {

namespace {

constexpr std::uint16_t kWeightsVersion = 1;

void check_net(const FeatureNet& net, const char* op) {
  if (net.layers.empty()) {
    throw std::invalid_argument(std::string(op) + ": net has no layers");
  }
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& layer = net.layers[li];
    if (layer.in < 1 || layer.out < 1 ||
        layer.weights.size() !=
            static_cast<std::size_t>(layer.in) * layer.out ||
        layer.bias.size() != static_cast<std::size_t>(layer.out)) {
      throw std::invalid_argument(std::string(op) + ": malformed layer " +
                                  std::to_string(li));
    }
    if (li > 0 && net.layers[li - 1].out != layer.in) {
      throw std::invalid_argument(std::string(op) + ": layer " +
                                  std::to_string(li) + " input dim " +
                                  std::to_string(layer.in) +
                                  " does not chain with previous output " +
                                  std::to_string(net.layers[li - 1].out));
    }
  }
}

void check_cache(const FeatureNet& net, const ForwardCache& cache,
                 const char* op) {
  if (cache.pre_acts.size() != net.layers.size() ||
      cache.acts.size() != net.layers.size() ||
      static_cast<int>(cache.input.size()) != net.input_dim()) {
    throw std::invalid_argument(std::string(op) +
                                ": stale cache (shape does not match net)");
  }
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (cache.pre_acts[li].size() !=
            static_cast<std::size_t>(net.layers[li].out) ||
        cache.acts[li].size() != static_cast<std::size_t>(net.layers[li].out)) {
      throw std::invalid_argument(std::string(op) + ": stale cache at layer " +
                                  std::to_string(li));
    }
  }
}

// Gradient through v / max(||v||, eps).
Vec backprop_l2_norm(const Vec& v, const Vec& upstream) {
  const double r = l2_norm(v);
  Vec out(v.size());
  if (r >= kNormEps) {
    const double inv = 1.0 / r;
    double proj = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) proj += upstream[i] * v[i] * inv;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out[i] = (upstream[i] - proj * v[i] * inv) * inv;
    }
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = upstream[i] / kNormEps;
  }
  return out;
}

// Shared reverse pass; fills param grads when params != nullptr and returns
// the input gradient.
Vec backward_impl(const FeatureNet& net, const ForwardCache& cache,
                  const Vec& upstream, ParamGrads* params) {
  check_net(net, "backward");
  check_cache(net, cache, "backward");
  if (upstream.size() != static_cast<std::size_t>(net.output_dim())) {
    throw std::invalid_argument("backward: upstream dim mismatch");
  }

  Vec g = net.output_norm ? backprop_l2_norm(cache.acts.back(), upstream)
                          : upstream;

  if (params != nullptr) {
    params->resize(net.layers.size());
  }
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& layer = net.layers[li];
    // Through the activation.
    if (layer.activation == Activation::kRelu) {
      for (int o = 0; o < layer.out; ++o) {
        if (cache.pre_acts[li][o] <= 0.0) g[o] = 0.0;
      }
    }
    const Vec& in_act = li == 0 ? cache.input : cache.acts[li - 1];
    if (params != nullptr) {
      LayerGrads& lg = (*params)[li];
      lg.weights.assign(layer.weights.size(), 0.0);
      lg.bias.assign(layer.bias.size(), 0.0);
      for (int o = 0; o < layer.out; ++o) {
        lg.bias[o] = g[o];
        for (int i = 0; i < layer.in; ++i) {
          lg.weights[static_cast<std::size_t>(o) * layer.in + i] =
              g[o] * in_act[i];
        }
      }
    }
    Vec g_prev(layer.in, 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double go = g[o];
      const double* w = layer.weights.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) g_prev[i] += go * w[i];
    }
    g = std::move(g_prev);
  }
  return g;
}

}  // namespace

FeatureNet make_mlp(int input_dim, const std::vector<int>& hidden_dims,
                    int feature_dim, bool output_norm, std::uint64_t seed) {
  if (input_dim < 1 || feature_dim < 1) {
    throw std::invalid_argument("make_mlp: dims must be positive");
  }
  FeatureNet net;
  net.output_norm = output_norm;
  std::vector<int> dims;
  dims.push_back(input_dim);
  for (int h : hidden_dims) dims.push_back(h);
  dims.push_back(feature_dim);

  Rng rng(seed);
  for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
    Layer layer;
    layer.in = dims[li];
    layer.out = dims[li + 1];
    layer.activation =
        li + 2 < dims.size() ? Activation::kRelu : Activation::kNone;
    layer.weights.resize(static_cast<std::size_t>(layer.in) * layer.out);
    layer.bias.assign(layer.out, 0.0);
    const double bound = std::sqrt(6.0 / (layer.in + layer.out));
    Rng layer_rng = rng.child(li);
    for (double& w : layer.weights) w = layer_rng.uniform(-bound, bound);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Vec forward(const FeatureNet& net, const Vec& input, ForwardCache* cache) {
  check_net(net, "forward");
  if (static_cast<int>(input.size()) != net.input_dim()) {
    throw std::invalid_argument("forward: input dim " +
                                std::to_string(input.size()) +
                                " does not match net input " +
                                std::to_string(net.input_dim()));
  }
  if (cache != nullptr) {
    cache->input = input;
    cache->pre_acts.clear();
    cache->acts.clear();
  }

  Vec x = input;
  for (const Layer& layer : net.layers) {
    Vec pre(layer.out);
    for (int o = 0; o < layer.out; ++o) {
      double acc = layer.bias[o];
      const double* w =
          layer.weights.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) acc += w[i] * x[i];
      pre[o] = acc;
    }
    Vec act = pre;
    if (layer.activation == Activation::kRelu) {
      for (double& v : act) v = v > 0.0 ? v : 0.0;
    }
    if (cache != nullptr) {
      cache->pre_acts.push_back(pre);
      cache->acts.push_back(act);
    }
    x = std::move(act);
  }
  if (net.output_norm) x = l2_normalize(x);
  if (cache != nullptr) cache->feature = x;
  return x;
}

Vec backward_input(const FeatureNet& net, const ForwardCache& cache,
                   const Vec& upstream) {
  return backward_impl(net, cache, upstream, nullptr);
}

ParamGrads backward_params(const FeatureNet& net, const ForwardCache& cache,
                           const Vec& upstream) {
  ParamGrads grads;
  backward_impl(net, cache, upstream, &grads);
  return grads;
}

void save_weights(const FeatureNet& net, const std::string& path) {
  check_net(net, "save_weights");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_weights: cannot open " + path);
  io::write_magic(os, "FNET");
  io::write_u16(os, kWeightsVersion);
  io::write_u16(os, static_cast<std::uint16_t>(net.layers.size()));
  for (const Layer& layer : net.layers) {
    io::write_u32(os, static_cast<std::uint32_t>(layer.out));
    io::write_u32(os, static_cast<std::uint32_t>(layer.in));
    io::write_u8(os, static_cast<std::uint8_t>(layer.activation));
    for (double w : layer.weights) io::write_f32(os, static_cast<float>(w));
    for (double b : layer.bias) io::write_f32(os, static_cast<float>(b));
  }
  io::write_u8(os, net.output_norm ? 1 : 0);
  if (!os) throw std::runtime_error("save_weights: write failed for " + path);
}

FeatureNet load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_weights: cannot open " + path);
  const std::string what = "load_weights(" + path + ")";
  io::expect_magic(is, "FNET", what);
  const std::uint16_t version = io::read_u16(is, what);
  if (version != kWeightsVersion) {
    throw std::runtime_error(what + ": unsupported version " +
                             std::to_string(version));
  }
  const std::uint16_t n_layers = io::read_u16(is, what);
  if (n_layers == 0) {
    throw std::runtime_error(what + ": zero layers");
  }
  FeatureNet net;
  for (std::uint16_t li = 0; li < n_layers; ++li) {
    const std::string layer_what = what + " layer " + std::to_string(li);
    Layer layer;
    layer.out = static_cast<int>(io::read_u32(is, layer_what));
    layer.in = static_cast<int>(io::read_u32(is, layer_what));
    const std::uint8_t act = io::read_u8(is, layer_what);
    if (act > 1) {
      throw std::runtime_error(layer_what + ": unknown activation code " +
                               std::to_string(act));
    }
    layer.activation = static_cast<Activation>(act);
    if (layer.in < 1 || layer.out < 1 || layer.in > (1 << 20) ||
        layer.out > (1 << 20)) {
      throw std::runtime_error(layer_what + ": implausible dims " +
                               std::to_string(layer.out) + "x" +
                               std::to_string(layer.in));
    }
    if (li > 0 && net.layers.back().out != layer.in) {
      throw std::runtime_error(layer_what + ": input dim " +
                               std::to_string(layer.in) +
                               " does not chain with previous output " +
                               std::to_string(net.layers.back().out));
    }
    layer.weights.resize(static_cast<std::size_t>(layer.in) * layer.out);
    for (double& w : layer.weights) w = io::read_f32(is, layer_what);
    layer.bias.resize(layer.out);
    for (double& b : layer.bias) b = io::read_f32(is, layer_what);
    net.layers.push_back(std::move(layer));
  }
  net.output_norm = io::read_u8(is, what) != 0;
  return net;
}

}  // namespace pqlab
