#include "bpunch/chain_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bpunch/autodiff.hpp"
#include "bpunch/error.hpp"

namespace bpunch {

ChainNet::ChainNet(const ModelGraph& model) : input_(model.input_shape()) {
  std::string prev(kInputId);
  for (std::size_t idx : model.topo_order()) {
    const LayerSpec& l = model.layers()[idx];
    if (!l.has_weights()) throw ShapeError("trainable models support conv and fc layers only, got '" + l.id + "'");
    if (l.inputs.size() != 1 || l.inputs.front() != prev)
      throw ShapeError("trainable models must be a chain; '" + l.id + "' does not follow '" + prev + "'");
    layers_.push_back({l, std::vector<double>(l.weight_count(), 0.0), std::vector<double>(l.filters, 0.0)});
    prev = l.id;
  }
  if (layers_.empty()) throw ShapeError("trainable model has no layers");
  model.infer_shapes();  // shape consistency
}

std::size_t ChainNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

void ChainNet::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.spec.gemm_cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : l.weights) w = dist(rng);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

void ChainNet::set_weights(const WeightMap& weights) {
  for (auto& l : layers_) {
    const auto it = weights.find(l.spec.id);
    if (it == weights.end()) throw ShapeError("no weights for layer '" + l.spec.id + "'");
    if (it->second.dims != dims_of(l.spec)) throw ShapeError("weight dims for '" + l.spec.id + "' do not match");
    std::copy(it->second.values.begin(), it->second.values.end(), l.weights.begin());
    if (!it->second.bias.empty()) {
      if (it->second.bias.size() != l.bias.size()) throw ShapeError("bias size for '" + l.spec.id + "' does not match");
      std::copy(it->second.bias.begin(), it->second.bias.end(), l.bias.begin());
    }
  }
}

WeightMap ChainNet::weights() const {
  WeightMap out;
  for (const auto& l : layers_) {
    std::vector<float> v(l.weights.begin(), l.weights.end());
    WeightTensor t(l.spec.id, dims_of(l.spec), std::move(v));
    t.bias.assign(l.bias.begin(), l.bias.end());
    out.emplace(l.spec.id, std::move(t));
  }
  return out;
}

ChainNet::Gradients ChainNet::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.weights.emplace_back(l.weights.size(), 0.0);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

double ChainNet::loss(const Dataset& data, std::span<const std::size_t> samples, Gradients* grads) const {
  if (data.shape != input_) throw ShapeError("dataset shape does not match the model input");
  const std::size_t batch = samples.size();
  ad::Tensor x({batch, input_.c, input_.h, input_.w});
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto img = data.image(samples[i]);
    std::copy(img.begin(), img.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * input_.size()));
    labels[i] = data.labels[samples[i]];
  }

  ad::Tape tape;
  ad::Var h = tape.leaf(std::move(x), false);
  std::vector<ad::Var> wv, bv;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const auto& s = l.spec;
    wv.push_back(tape.leaf(ad::Tensor(s.kind == LayerKind::kConv ? std::vector<std::size_t>{s.filters, s.channels, s.kh, s.kw}
                                                                   : std::vector<std::size_t>{s.filters, s.channels},
                                      l.weights)));
    bv.push_back(tape.leaf(ad::Tensor({s.filters}, l.bias)));
    h = s.kind == LayerKind::kConv ? tape.conv2d(h, wv.back(), bv.back(), s.stride, s.padding)
                                   : tape.linear(h, wv.back(), bv.back());
    if (i + 1 < layers_.size()) h = tape.relu(h);
  }
  const ad::Var loss = tape.softmax_cross_entropy(h, labels);
  const double value = tape.value(loss).data[0];
  if (grads) {
    tape.backward(loss);
    *grads = zero_gradients();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      grads->weights[i] = tape.grad(wv[i]).data;
      grads->bias[i] = tape.grad(bv[i]).data;
    }
  }
  return value;
}

std::vector<double> ChainNet::logits(std::span<const float> image) const {
  // Plain forward pass without a tape, used for evaluation.
  std::vector<double> act(image.begin(), image.end());
  Shape3 shape = input_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const auto& s = l.spec;
    std::vector<double> out;
    if (s.kind == LayerKind::kConv) {
      const std::size_t Ho = (shape.h + 2 * s.padding - s.kh) / s.stride + 1;
      const std::size_t Wo = (shape.w + 2 * s.padding - s.kw) / s.stride + 1;
      out.assign(s.filters * Ho * Wo, 0.0);
      for (std::size_t m = 0; m < s.filters; ++m)
        for (std::size_t oh = 0; oh < Ho; ++oh)
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            double acc = l.bias[m];
            for (std::size_t c = 0; c < s.channels; ++c)
              for (std::size_t a = 0; a < s.kh; ++a) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * s.stride + a) - static_cast<std::ptrdiff_t>(s.padding);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(shape.h)) continue;
                for (std::size_t b = 0; b < s.kw; ++b) {
                  const auto iw = static_cast<std::ptrdiff_t>(ow * s.stride + b) - static_cast<std::ptrdiff_t>(s.padding);
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(shape.w)) continue;
                  acc += l.weights[((m * s.channels + c) * s.kh + a) * s.kw + b] *
                         act[(c * shape.h + static_cast<std::size_t>(ih)) * shape.w + static_cast<std::size_t>(iw)];
                }
              }
            out[(m * Ho + oh) * Wo + ow] = acc;
          }
      shape = {s.filters, Ho, Wo};
    } else {
      out.assign(s.filters, 0.0);
      for (std::size_t m = 0; m < s.filters; ++m) {
        double acc = l.bias[m];
        for (std::size_t k = 0; k < s.channels; ++k) acc += l.weights[m * s.channels + k] * act[k];
        out[m] = acc;
      }
      shape = {s.filters, 1, 1};
    }
    if (i + 1 < layers_.size())
      for (auto& v : out) v = std::max(v, 0.0);
    act = std::move(out);
  }
  return act;
}

double ChainNet::accuracy(const Dataset& data) const {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto z = logits(data.image(i));
    const auto pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    correct += pred == data.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace bpunch
