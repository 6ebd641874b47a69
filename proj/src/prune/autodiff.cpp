#include "bpunch/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "bpunch/error.hpp"

namespace bpunch::ad {

namespace {
std::size_t product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != product(shape)) throw ShapeError("tensor data does not match its shape");
}

Var Tape::push(Tensor value, std::function<void()> backward) {
  nodes_.push_back({std::move(value), {}, std::move(backward), true});
  return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.size() != n.value.data.size()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  const Var v = push(std::move(value));
  nodes_[v.id].requires_grad = requires_grad;
  return v;
}

Var Tape::conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t padding) {
  const Tensor& X = value(x);
  const Tensor& W = value(w);
  if (X.shape.size() != 4 || W.shape.size() != 4) throw ShapeError("conv2d expects 4-D input and weights");
  const std::size_t B = X.dim(0), N = X.dim(1), H = X.dim(2), Wd = X.dim(3);
  const std::size_t M = W.dim(0), Kh = W.dim(2), Kw = W.dim(3);
  if (W.dim(1) != N) throw ShapeError("conv2d channel mismatch");
  if (value(b).size() != M) throw ShapeError("conv2d bias mismatch");
  if (H + 2 * padding < Kh || Wd + 2 * padding < Kw) throw ShapeError("conv2d kernel larger than padded input");
  const std::size_t Ho = (H + 2 * padding - Kh) / stride + 1;
  const std::size_t Wo = (Wd + 2 * padding - Kw) / stride + 1;
  const std::size_t K = N * Kh * Kw, P = Ho * Wo;

  // Lowered input per sample: cols[n][k][p], zero where the tap hits padding.
  // src[k * P + p] holds the flat input offset, or -1 for padding.
  std::vector<std::ptrdiff_t> src(K * P, -1);
  for (std::size_t c = 0; c < N; ++c)
    for (std::size_t i = 0; i < Kh; ++i)
      for (std::size_t j = 0; j < Kw; ++j) {
        const std::size_t k = (c * Kh + i) * Kw + j;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(Wd)) continue;
            src[k * P + oh * Wo + ow] = static_cast<std::ptrdiff_t>((c * H + static_cast<std::size_t>(ih)) * Wd) + iw;
          }
        }
      }
  std::vector<double> cols(B * K * P, 0.0);
  for (std::size_t n = 0; n < B; ++n) {
    const double* xs = X.data.data() + n * N * H * Wd;
    double* cn = cols.data() + n * K * P;
    for (std::size_t q = 0; q < K * P; ++q)
      if (src[q] >= 0) cn[q] = xs[src[q]];
  }

  Tensor out({B, M, Ho, Wo});
  const auto& bias = value(b).data;
  for (std::size_t n = 0; n < B; ++n) {
    const double* cn = cols.data() + n * K * P;
    for (std::size_t m = 0; m < M; ++m) {
      double* y = out.data.data() + (n * M + m) * P;
      std::fill(y, y + P, bias[m]);
      for (std::size_t k = 0; k < K; ++k) {
        const double wk = W.data[m * K + k];
        const double* ck = cn + k * P;
        for (std::size_t p = 0; p < P; ++p) y[p] += wk * ck[p];
      }
    }
  }

  const Var y = push(std::move(out));
  nodes_[y.id].backward = [this, x, w, b, y, B, M, K, P, N, H, Wd, src = std::move(src), cols = std::move(cols)]() {
    const Tensor& gy = nodes_[y.id].grad;
    Tensor& gw = grad_of(w.id);
    Tensor& gb = grad_of(b.id);
    const auto& Wdat = nodes_[w.id].value.data;
    const bool need_dx = nodes_[x.id].requires_grad;
    std::vector<double> dcol(need_dx ? K * P : 0);
    for (std::size_t n = 0; n < B; ++n) {
      const double* cn = cols.data() + n * K * P;
      if (need_dx) std::fill(dcol.begin(), dcol.end(), 0.0);
      for (std::size_t m = 0; m < M; ++m) {
        const double* g = gy.data.data() + (n * M + m) * P;
        double bsum = 0.0;
        for (std::size_t p = 0; p < P; ++p) bsum += g[p];
        gb.data[m] += bsum;
        for (std::size_t k = 0; k < K; ++k) {
          const double* ck = cn + k * P;
          double acc = 0.0;
          for (std::size_t p = 0; p < P; ++p) acc += g[p] * ck[p];
          gw.data[m * K + k] += acc;
          if (need_dx) {
            const double wk = Wdat[m * K + k];
            double* dk = dcol.data() + k * P;
            for (std::size_t p = 0; p < P; ++p) dk[p] += wk * g[p];
          }
        }
      }
      if (need_dx) {
        double* gx = grad_of(x.id).data.data() + n * N * H * Wd;
        for (std::size_t q = 0; q < K * P; ++q)
          if (src[q] >= 0) gx[src[q]] += dcol[q];
      }
    }
  };
  return y;
}

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& X = value(x);
  const Tensor& W = value(w);
  const std::size_t B = X.dim(0);
  const std::size_t K = X.size() / B;
  if (W.shape.size() != 2 || W.dim(1) != K) throw ShapeError("linear input features mismatch");
  const std::size_t M = W.dim(0);
  if (value(b).size() != M) throw ShapeError("linear bias mismatch");

  Tensor out({B, M});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t m = 0; m < M; ++m) {
      double acc = value(b).data[m];
      for (std::size_t k = 0; k < K; ++k) acc += W.data[m * K + k] * X.data[n * K + k];
      out.data[n * M + m] = acc;
    }
  const Var y = push(std::move(out));
  nodes_[y.id].backward = [this, x, w, b, y, B, K, M]() {
    const Tensor& gy = nodes_[y.id].grad;
    Tensor& gx = grad_of(x.id);
    Tensor& gw = grad_of(w.id);
    Tensor& gb = grad_of(b.id);
    const auto& Xd = nodes_[x.id].value.data;
    const auto& Wd = nodes_[w.id].value.data;
    const bool need_dx = nodes_[x.id].requires_grad;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t m = 0; m < M; ++m) {
        const double g = gy.data[n * M + m];
        gb.data[m] += g;
        for (std::size_t k = 0; k < K; ++k) gw.data[m * K + k] += g * Xd[n * K + k];
        if (need_dx)
          for (std::size_t k = 0; k < K; ++k) gx.data[n * K + k] += g * Wd[m * K + k];
      }
  };
  return y;
}

Var Tape::relu(Var x) {
  Tensor out = value(x);
  for (auto& v : out.data) v = std::max(v, 0.0);
  const Var y = push(std::move(out));
  nodes_[y.id].backward = [this, x, y]() {
    const Tensor& gy = nodes_[y.id].grad;
    Tensor& gx = grad_of(x.id);
    const auto& xv = nodes_[x.id].value.data;
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xv[i] > 0.0) gx.data[i] += gy.data[i];
  };
  return y;
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& L = value(logits);
  if (L.shape.size() != 2 || L.dim(0) != labels.size()) throw ShapeError("cross-entropy batch mismatch");
  const std::size_t B = L.dim(0), K = L.dim(1);
  Tensor probs({B, K});
  double loss = 0.0;
  for (std::size_t n = 0; n < B; ++n) {
    const double* row = L.data.data() + n * K;
    const double mx = *std::max_element(row, row + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    for (std::size_t k = 0; k < K; ++k) probs.data[n * K + k] = std::exp(row[k] - mx) / z;
    const auto label = static_cast<std::size_t>(labels[n]);
    if (label >= K) throw ShapeError("label out of range");
    loss -= row[label] - mx - std::log(z);
  }
  loss /= static_cast<double>(B);
  std::vector<int> lab(labels.begin(), labels.end());
  const Var y = push(Tensor({1}, {loss}));
  nodes_[y.id].backward = [this, logits, y, probs = std::move(probs), lab = std::move(lab), B, K]() {
    const double g = nodes_[y.id].grad.data[0] / static_cast<double>(B);
    Tensor& gl = grad_of(logits.id);
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t k = 0; k < K; ++k) {
        const double target = static_cast<std::size_t>(lab[n]) == k ? 1.0 : 0.0;
        gl.data[n * K + k] += g * (probs.data[n * K + k] - target);
      }
  };
  return y;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw ShapeError("backward root must be a scalar");
  for (auto& n : nodes_) n.grad = Tensor(n.value.shape);
  nodes_[root.id].grad.data[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;)
    if (nodes_[i].backward) nodes_[i].backward();
}

}  // namespace bpunch::ad
