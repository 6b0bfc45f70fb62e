#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pqlab/numkit.hpp"

namespace pqlab {

enum class Activation : std::uint8_t { kNone = 0, kRelu = 1 };

struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out
  Activation activation = Activation::kNone;
};

// Small MLP feature extractor with optional whole-vector L2 normalization of
// the output.
struct FeatureNet {
  std::vector<Layer> layers;
  bool output_norm = true;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out; }
};

// Per-layer pre-activations and activations from one forward pass.
struct ForwardCache {
  Vec input;
  std::vector<Vec> pre_acts;
  std::vector<Vec> acts;
  Vec feature;  // final output (after normalization when enabled)
};

struct LayerGrads {
  std::vector<double> weights;
  std::vector<double> bias;
};
using ParamGrads = std::vector<LayerGrads>;

// Hidden layers relu, final layer linear; weights uniform in
// +-sqrt(6 / (fan_in + fan_out)), biases zero.
FeatureNet make_mlp(int input_dim, const std::vector<int>& hidden_dims,
                    int feature_dim, bool output_norm, std::uint64_t seed);

Vec forward(const FeatureNet& net, const Vec& input,
            ForwardCache* cache = nullptr);

// Exact reverse-mode gradients. ReLU subgradient at 0 is 0. The cache must
// come from a forward pass of the same net.
Vec backward_input(const FeatureNet& net, const ForwardCache& cache,
                   const Vec& upstream);
ParamGrads backward_params(const FeatureNet& net, const ForwardCache& cache,
                           const Vec& upstream);

// Weights file: magic "FNET", u16 version, u16 layer count, per layer
// u32 out, u32 in, u8 activation, row-major f32 weights, f32 bias; trailing
// u8 output_norm flag. All little-endian.
void save_weights(const FeatureNet& net, const std::string& path);
FeatureNet load_weights(const std::string& path);

}  // namespace pqlab
