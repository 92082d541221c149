#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vecrank/rng.hpp"

namespace vecrank {

inline double elu(double z) { return z > 0.0 ? z : std::expm1(z); }

/// Fully connected network with elu hidden activations and identity output.
/// All parameters live in one flat vector, per layer the row-major weight
/// matrix (out x in) followed by the bias, so optimizers and checkpoints can
/// treat the model as a single array of doubles.
class Mlp {
 public:
  Mlp() = default;

  /// `sizes` = {input, hidden..., output}. Weights are Glorot-uniform in
  /// +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static Mlp create(const std::vector<int>& sizes, Rng& rng) {
    if (sizes.size() < 2) {
      throw std::invalid_argument("mlp needs at least input and output sizes");
    }
    for (int s : sizes) {
      if (s <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
    }
    Mlp net;
    net.sizes_ = sizes;
    net.offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      net.offsets_.push_back(net.offsets_.back() +
                             sizes[l + 1] * (sizes[l] + 1));
    }
    net.params_.assign(net.offsets_.back(), 0.0);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int fan_in = sizes[l];
      const int fan_out = sizes[l + 1];
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      double* w = net.params_.data() + net.offsets_[l];
      for (int i = 0; i < fan_out * fan_in; ++i) {
        w[i] = rng.uniform(-bound, bound);
      }
      // biases (the fan_out entries after the weights) stay zero
    }
    return net;
  }

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  /// Pre-activation inputs of every layer, kept for the backward pass.
  struct Trace {
    std::vector<std::vector<double>> layer_inputs;  // activations per layer
  };

  std::vector<double> forward(std::span<const double> x,
                              Trace* trace = nullptr) const {
    if (static_cast<int>(x.size()) != sizes_.front()) {
      throw std::invalid_argument("mlp forward: input size mismatch");
    }
    std::vector<double> act(x.begin(), x.end());
    if (trace) {
      trace->layer_inputs.clear();
      trace->layer_inputs.push_back(act);
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int n_in = sizes_[l];
      const int n_out = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      const double* b = w + n_out * n_in;
      std::vector<double> next(n_out);
      for (int o = 0; o < n_out; ++o) {
        double z = b[o];
        const double* row = w + o * n_in;
        for (int i = 0; i < n_in; ++i) z += row[i] * act[i];
        next[o] = (l + 2 < sizes_.size()) ? elu(z) : z;
      }
      act = std::move(next);
      if (trace && l + 2 < sizes_.size()) trace->layer_inputs.push_back(act);
    }
    return act;
  }

  /// Backpropagates `dloss_dout` through the trace of one forward pass,
  /// accumulating parameter gradients into `grad` (same layout as params).
  /// Returns the gradient with respect to the network input.
  std::vector<double> backward(const Trace& trace,
                               std::span<const double> dloss_dout,
                               std::vector<double>& grad) const {
    if (grad.size() != params_.size()) {
      throw std::invalid_argument("mlp backward: grad buffer size mismatch");
    }
    std::vector<double> delta(dloss_dout.begin(), dloss_dout.end());
    for (std::size_t li = sizes_.size() - 1; li-- > 0;) {
      const int n_in = sizes_[li];
      const int n_out = sizes_[li + 1];
      const double* w = params_.data() + offsets_[li];
      const std::vector<double>& input = trace.layer_inputs[li];
      double* gw = grad.data() + offsets_[li];
      double* gb = gw + n_out * n_in;
      for (int o = 0; o < n_out; ++o) {
        const double d = delta[o];
        double* grow = gw + o * n_in;
        for (int i = 0; i < n_in; ++i) grow[i] += d * input[i];
        gb[o] += d;
      }
      std::vector<double> prev(n_in, 0.0);
      for (int i = 0; i < n_in; ++i) {
        double s = 0.0;
        for (int o = 0; o < n_out; ++o) s += w[o * n_in + i] * delta[o];
        prev[i] = s;
      }
      if (li > 0) {
        // input[i] is elu(z); elu'(z) = 1 for z > 0 and elu(z) + 1 otherwise.
        for (int i = 0; i < n_in; ++i) {
          prev[i] *= input[i] > 0.0 ? 1.0 : input[i] + 1.0;
        }
      }
      delta = std::move(prev);
    }
    return delta;
  }

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Per-parameter accumulator for AdaGrad: G += g^2, theta -= lr * g / sqrt(G + eps).
class AdaGrad {
 public:
  AdaGrad(std::size_t n, double learning_rate)
      : accum_(n, 0.0), lr_(learning_rate) {}

  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != accum_.size() || grad.size() != accum_.size()) {
      throw std::invalid_argument("adagrad: size mismatch");
    }
    constexpr double kEps = 1e-8;
    for (std::size_t i = 0; i < accum_.size(); ++i) {
      accum_[i] += grad[i] * grad[i];
      params[i] -= lr_ * grad[i] / std::sqrt(accum_[i] + kEps);
    }
  }

 private:
  std::vector<double> accum_;
  double lr_;
};

/// Compares an analytic gradient against central differences of `loss` and
/// returns the worst relative error over the checked coordinates. When
/// `sample` > 0 only that many evenly spaced coordinates are checked.
inline double grad_check(std::vector<double>& params,
                         const std::function<double()>& loss,
                         std::span<const double> analytic, int sample = 0,
                         double h = 1e-5) {
  if (analytic.size() != params.size()) {
    throw std::invalid_argument("grad_check: gradient size mismatch");
  }
  const std::size_t n = params.size();
  const std::size_t step =
      (sample > 0 && static_cast<std::size_t>(sample) < n)
          ? n / static_cast<std::size_t>(sample)
          : 1;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; i += step) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom =
        std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

namespace detail {

constexpr char kCheckpointMagic[8] = {'V', 'R', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kKindMlp = 1;
constexpr std::uint32_t kKindTable = 2;

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace detail

/// Binary MLP checkpoint: magic, kind, layer count, layer sizes, raw doubles.
inline void save_mlp(const std::string& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
  detail::write_u32(out, detail::kKindMlp);
  detail::write_u32(out, static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes()) detail::write_u32(out, static_cast<std::uint32_t>(s));
  out.write(reinterpret_cast<const char*>(net.params().data()),
            static_cast<std::streamsize>(net.params().size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write to " + path);
}

inline Mlp load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof magic) != 0) {
    throw std::runtime_error(path + " is not a checkpoint file");
  }
  if (detail::read_u32(in) != detail::kKindMlp) {
    throw std::runtime_error(path + " does not hold an mlp checkpoint");
  }
  const std::uint32_t n_layers = detail::read_u32(in);
  if (n_layers < 2 || n_layers > 64) {
    throw std::runtime_error(path + " has an invalid layer count");
  }
  std::vector<int> sizes(n_layers);
  for (auto& s : sizes) s = static_cast<int>(detail::read_u32(in));
  Rng dummy(0);
  Mlp net = Mlp::create(sizes, dummy);
  in.read(reinterpret_cast<char*>(net.params().data()),
          static_cast<std::streamsize>(net.params().size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return net;
}

/// Binary checkpoint for a flat (rows x cols) table of doubles.
inline void save_table(const std::string& path, int rows, int cols,
                       const std::vector<double>& values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("save_table: size mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
  detail::write_u32(out, detail::kKindTable);
  detail::write_u32(out, static_cast<std::uint32_t>(rows));
  detail::write_u32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write to " + path);
}

inline std::vector<double> load_table(const std::string& path, int& rows,
                                      int& cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof magic) != 0) {
    throw std::runtime_error(path + " is not a checkpoint file");
  }
  if (detail::read_u32(in) != detail::kKindTable) {
    throw std::runtime_error(path + " does not hold a table checkpoint");
  }
  rows = static_cast<int>(detail::read_u32(in));
  cols = static_cast<int>(detail::read_u32(in));
  if (rows <= 0 || cols <= 0 || rows > 1'000'000 || cols > 1'000'000) {
    throw std::runtime_error(path + " has invalid table dimensions");
  }
  std::vector<double> values(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return values;
}

}  // namespace vecrank
