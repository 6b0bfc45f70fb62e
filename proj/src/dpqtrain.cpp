#include "pqlab/dpqtrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pqlab/parallel.hpp"

namespace pqlab {

namespace {

bool share_label(const std::vector<std::uint32_t>& a,
                 const std::vector<std::uint32_t>& b) {
  for (std::uint32_t la : a) {
    for (std::uint32_t lb : b) {
      if (la == lb) return true;
    }
  }
  return false;
}

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

struct TripletGrads {
  ParamGrads net;
  std::vector<Vec> centroids;
  double loss = 0.0;
  double margin = 0.0;
};

void add_params(ParamGrads& acc, const ParamGrads& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t li = 0; li < acc.size(); ++li) {
    for (std::size_t i = 0; i < acc[li].weights.size(); ++i) {
      acc[li].weights[i] += g[li].weights[i];
    }
    for (std::size_t i = 0; i < acc[li].bias.size(); ++i) {
      acc[li].bias[i] += g[li].bias[i];
    }
  }
}

void add_centroids(std::vector<Vec>& acc, const std::vector<Vec>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) {
    for (std::size_t d = 0; d < acc[i].size(); ++d) acc[i][d] += g[i][d];
  }
}

// Upstream dL/dprobs for input_gradient given dL/ds (per-subspace slices of
// `upstream_s`): G_mk = <c_mk, dL/ds_m>.
std::vector<double> probs_upstream(const Codebook& cb, const Vec& upstream_s) {
  std::vector<double> up(static_cast<std::size_t>(cb.m) * cb.k, 0.0);
  for (int mi = 0; mi < cb.m; ++mi) {
    const std::size_t off = static_cast<std::size_t>(mi) * cb.sub_dim;
    for (int ki = 0; ki < cb.k; ++ki) {
      const Vec& c = cb.centroid(mi, ki);
      double acc = 0.0;
      for (int d = 0; d < cb.sub_dim; ++d) acc += c[d] * upstream_s[off + d];
      up[static_cast<std::size_t>(mi) * cb.k + ki] = acc;
    }
  }
  return up;
}

TripletGrads triplet_step(const LabeledDataset& data, const FeatureNet& net,
                          const Codebook& cb, const SoftPqConfig& soft,
                          const Triplet& t) {
  ForwardCache cache_a, cache_p, cache_n;
  const Vec x = forward(net, data.vectors[t.anchor_id], &cache_a);
  const Vec z_p = forward(net, data.vectors[t.positive_id], &cache_p);
  const Vec z_n = forward(net, data.vectors[t.negative_id], &cache_n);
  const Vec s_p = soft_quantize(z_p, cb, soft);
  const Vec s_n = soft_quantize(z_n, cb, soft);

  const double margin = inner_product(x, s_n) - inner_product(x, s_p);
  const double sig = logistic(margin);
  // Descend J = sigma(margin); dJ/dmargin = sigma * (1 - sigma).
  const double w = sig * (1.0 - sig);

  TripletGrads out;
  out.loss = sig;
  out.margin = margin;

  // Anchor path: dmargin/dx = s_n - s_p.
  Vec up_anchor(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    up_anchor[i] = w * (s_n[i] - s_p[i]);
  }
  out.net = backward_params(net, cache_a, up_anchor);

  // Positive / negative paths: dmargin/ds_p = -x, dmargin/ds_n = +x.
  Vec up_sp(x.size()), up_sn(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    up_sp[i] = -w * x[i];
    up_sn[i] = w * x[i];
  }
  out.centroids = centroid_gradient(z_p, cb, soft, up_sp);
  add_centroids(out.centroids, centroid_gradient(z_n, cb, soft, up_sn));

  const Vec dz_p = input_gradient(z_p, cb, soft, probs_upstream(cb, up_sp));
  const Vec dz_n = input_gradient(z_n, cb, soft, probs_upstream(cb, up_sn));
  add_params(out.net, backward_params(net, cache_p, dz_p));
  add_params(out.net, backward_params(net, cache_n, dz_n));
  return out;
}

}  // namespace

double asymmetric_triplet_loss(const Vec& x_anchor, const Vec& s_pos,
                               const Vec& s_neg) {
  if (x_anchor.size() != s_pos.size() || x_anchor.size() != s_neg.size()) {
    throw std::invalid_argument("asymmetric_triplet_loss: dimension mismatch");
  }
  const double margin =
      inner_product(x_anchor, s_neg) - inner_product(x_anchor, s_pos);
  return 1.0 / (1.0 + std::exp(margin));
}

namespace {

// Candidate structure shared by the public sampler and the training loop so
// the per-batch sampling cost does not repeat the O(n^2) label scan.
struct TripletPool {
  std::vector<std::vector<std::uint32_t>> positives;
  std::vector<std::uint32_t> eligible;
  const std::vector<std::vector<std::uint32_t>>* labels = nullptr;

  explicit TripletPool(const std::vector<std::vector<std::uint32_t>>& ls)
      : labels(&ls) {
    const std::size_t n = ls.size();
    positives.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t negs = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        if (share_label(ls[i], ls[j])) {
          positives[i].push_back(static_cast<std::uint32_t>(j));
        } else {
          ++negs;
        }
      }
      if (!positives[i].empty() && negs > 0) {
        eligible.push_back(static_cast<std::uint32_t>(i));
      }
    }
    if (eligible.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!positives[i].empty()) {
          throw std::invalid_argument(
              "sample_triplets: infeasible label structure: class " +
              std::to_string(ls[i].empty() ? 0 : ls[i][0]) +
              " shares a label with every record, no valid negative exists");
        }
      }
      throw std::invalid_argument(
          "sample_triplets: infeasible label structure: no two records "
          "share a label");
    }
  }

  std::vector<Triplet> sample(int count, Rng& rng) const {
    const std::size_t n = labels->size();
    std::vector<Triplet> out;
    out.reserve(count);
    for (int c = 0; c < count; ++c) {
      Triplet t;
      t.anchor_id = eligible[rng.uniform_index(eligible.size())];
      const auto& pos = positives[t.anchor_id];
      t.positive_id = pos[rng.uniform_index(pos.size())];
      while (true) {
        const std::uint32_t j =
            static_cast<std::uint32_t>(rng.uniform_index(n));
        if (j != t.anchor_id && !share_label((*labels)[t.anchor_id],
                                             (*labels)[j])) {
          t.negative_id = j;
          break;
        }
      }
      out.push_back(t);
    }
    return out;
  }
};

}  // namespace

std::vector<Triplet> sample_triplets(
    const std::vector<std::vector<std::uint32_t>>& labels, int count,
    Rng& rng) {
  if (count < 0) {
    throw std::invalid_argument("sample_triplets: negative count");
  }
  return TripletPool(labels).sample(count, rng);
}

TrainResult train(const LabeledDataset& dataset, FeatureNet net,
                  Codebook codebook, const TrainConfig& config) {
  if (dataset.size() == 0) {
    throw std::invalid_argument("train: empty dataset");
  }
  if (net.output_dim() != codebook.dim()) {
    throw std::invalid_argument("train: net output dim " +
                                std::to_string(net.output_dim()) +
                                " does not match codebook dim " +
                                std::to_string(codebook.dim()));
  }
  if (config.batch_size < 1 || config.epochs < 0) {
    throw std::invalid_argument("train: invalid epochs/batch_size");
  }
  if (config.lr_net < 0.0 || config.lr_codebook < 0.0) {
    throw std::invalid_argument("train: negative learning rate");
  }

  const SoftPqConfig soft{config.alpha, true};
  Rng rng(config.seed);

  TrainResult result;
  const std::size_t n_batches =
      std::max<std::size_t>(1, dataset.size() / config.batch_size);
  const TripletPool pool(dataset.labels);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    double epoch_margin = 0.0;
    std::size_t epoch_triplets = 0;

    for (std::size_t batch = 0; batch < n_batches; ++batch) {
      const std::vector<Triplet> triplets =
          pool.sample(config.batch_size, rng);

      // Per-triplet passes are independent; the reduction below runs in
      // triplet order so results do not depend on the thread count.
      std::vector<TripletGrads> grads(triplets.size());
      parallel_for(triplets.size(), config.threads, [&](std::size_t i) {
        grads[i] = triplet_step(dataset, net, codebook, soft, triplets[i]);
      });

      ParamGrads net_acc;
      std::vector<Vec> centroid_acc(codebook.centroids.size(),
                                    Vec(codebook.sub_dim, 0.0));
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i].loss)) {
          throw std::runtime_error("train: non-finite loss in epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch));
        }
        batch_loss += grads[i].loss;
        epoch_margin += grads[i].margin;
        add_params(net_acc, grads[i].net);
        add_centroids(centroid_acc, grads[i].centroids);
      }
      epoch_loss += batch_loss;
      epoch_triplets += triplets.size();

      const double inv = 1.0 / static_cast<double>(triplets.size());
      if (config.lr_net > 0.0) {
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
          Layer& layer = net.layers[li];
          for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            layer.weights[i] -= config.lr_net * inv * net_acc[li].weights[i];
          }
          for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] -= config.lr_net * inv * net_acc[li].bias[i];
          }
        }
      }
      if (config.lr_codebook > 0.0) {
        for (std::size_t ci = 0; ci < codebook.centroids.size(); ++ci) {
          Vec& c = codebook.centroids[ci];
          for (std::size_t d = 0; d < c.size(); ++d) {
            c[d] -= config.lr_codebook * inv * centroid_acc[ci][d];
          }
          c = l2_normalize(c);
        }
      }
    }

    result.loss_history.push_back(epoch_loss / epoch_triplets);
    result.margin_history.push_back(epoch_margin / epoch_triplets);
  }

  result.net = std::move(net);
  result.codebook = std::move(codebook);
  return result;
}

}  // namespace pqlab
