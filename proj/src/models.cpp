#include "ckd/models.hpp"

#include <cmath>
#include <random>

#include "ckd/binary_io.hpp"
#include "ckd/errors.hpp"

namespace ckd {

namespace {

constexpr io::Magic kNetworkMagic{'C', 'K', 'D', 'N', 'E', 'T', '\0', '\0'};

Var activate(Graph& g, Var x, Activation a) {
  switch (a) {
    case Activation::relu:
      return relu(g, x);
    case Activation::tanh:
      return tanh(g, x);
    case Activation::identity:
      break;
  }
  return x;
}

Var forward_impl(Graph& g, const std::vector<LayerSpec>& layers, Var x,
                 const auto& weight_var, const auto& bias_var) {
  if (g.value(x).cols() != layers.front().in_dim) {
    throw DimensionError("forward: batch " + g.value(x).shape_string() + " but network expects " +
                         std::to_string(layers.front().in_dim) + " input features");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = add(g, matmul(g, x, weight_var(l)), bias_var(l));
    x = activate(g, x, layers[l].activation);
  }
  return x;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::vector<LayerSpec> mlp_spec(std::size_t in_dim, std::span<const std::size_t> hidden,
                                std::size_t out_dim, Activation hidden_activation) {
  std::vector<LayerSpec> spec;
  std::size_t prev = in_dim;
  for (const std::size_t h : hidden) {
    spec.push_back({prev, h, hidden_activation});
    prev = h;
  }
  spec.push_back({prev, out_dim, Activation::identity});
  return spec;
}

void validate_spec(std::span<const LayerSpec> spec) {
  if (spec.empty()) throw ConfigError("network spec is empty");
  for (std::size_t l = 0; l < spec.size(); ++l) {
    if (spec[l].in_dim == 0 || spec[l].out_dim == 0) {
      throw ConfigError("layer " + std::to_string(l) + " has a zero dimension");
    }
    if (l > 0 && spec[l - 1].out_dim != spec[l].in_dim) {
      throw ConfigError("layers " + std::to_string(l - 1) + " and " + std::to_string(l) +
                        " disagree: out_dim " + std::to_string(spec[l - 1].out_dim) +
                        " vs in_dim " + std::to_string(spec[l].in_dim));
    }
  }
  if (spec.back().activation != Activation::identity) {
    throw ConfigError("final layer must use identity activation (it produces logits)");
  }
}

Network::Network(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  validate_spec(layers_);
  for (const LayerSpec& l : layers_) {
    weights_.emplace_back(l.in_dim, l.out_dim);
    biases_.emplace_back(1, l.out_dim);
  }
}

std::size_t Network::param_count() const noexcept {
  std::size_t n = 0;
  for (const LayerSpec& l : layers_) n += l.in_dim * l.out_dim + l.out_dim;
  return n;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<double> Network::flat_params() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    out.insert(out.end(), weights_[l].data().begin(), weights_[l].data().end());
    out.insert(out.end(), biases_[l].data().begin(), biases_[l].data().end());
  }
  return out;
}

void Network::zero_grads() {
  for (Tensor& w : weights_) w.zero_grad();
  for (Tensor& b : biases_) b.zero_grad();
}

Network init_network(std::vector<LayerSpec> spec, std::uint64_t seed) {
  Network net(std::move(spec));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const LayerSpec& ls = net.layers()[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(ls.in_dim + ls.out_dim));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : net.weight(l).data()) w = dist(rng);
  }
  return net;
}

Var forward(Graph& g, Network& net, Var batch) {
  return forward_impl(
      g, net.layers(), batch, [&](std::size_t l) { return g.parameter(net.weight(l)); },
      [&](std::size_t l) { return g.parameter(net.bias(l)); });
}

Tensor predict(const Network& net, const Tensor& batch) {
  Graph g;
  const Var x = g.frozen(batch);
  const Var out = forward_impl(
      g, net.layers(), x, [&](std::size_t l) { return g.frozen(net.weight(l)); },
      [&](std::size_t l) { return g.frozen(net.bias(l)); });
  return g.value(out);
}

// ---------------------------------------------------------------------------
// Teachers

TabulatedTeacher::TabulatedTeacher(const Tensor& inputs, const Tensor& outputs)
    : in_dim_(inputs.cols()), out_dim_(outputs.cols()) {
  if (inputs.rows() != outputs.rows()) {
    throw DimensionError("tabulated teacher: " + inputs.shape_string() + " inputs vs " +
                         outputs.shape_string() + " outputs");
  }
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    const auto in = inputs.row_span(r);
    const auto out = outputs.row_span(r);
    const auto [it, inserted] = table_.emplace(std::vector<double>(in.begin(), in.end()),
                                               std::vector<double>(out.begin(), out.end()));
    if (!inserted) throw DomainError("tabulated teacher: duplicate input at row " + std::to_string(r));
  }
}

Tensor TabulatedTeacher::lookup(const Tensor& inputs) const {
  if (inputs.cols() != in_dim_) {
    throw DimensionError("tabulated teacher: query " + inputs.shape_string() + " but table has " +
                         std::to_string(in_dim_) + " input features");
  }
  Tensor out(inputs.rows(), out_dim_);
  std::vector<double> key(in_dim_);
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    const auto in = inputs.row_span(r);
    key.assign(in.begin(), in.end());
    const auto it = table_.find(key);
    if (it == table_.end()) throw LookupError("tabulated teacher: input not in table", r);
    std::copy(it->second.begin(), it->second.end(), out.row_span(r).begin());
  }
  return out;
}

Tensor teacher_logits(const TeacherSource& teacher, const Tensor& inputs) {
  return std::visit(
      [&](const auto& t) -> Tensor {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Network>) {
          return predict(t, inputs);
        } else {
          return t.lookup(inputs);
        }
      },
      teacher);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_network(const Network& net, const std::filesystem::path& path) {
  io::Writer w(kNetworkMagic, kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const LayerSpec& l : net.layers()) {
    w.u32(static_cast<std::uint32_t>(l.in_dim));
    w.u32(static_cast<std::uint32_t>(l.out_dim));
    w.u32(static_cast<std::uint32_t>(l.activation));
  }
  const std::vector<double> params = net.flat_params();
  w.u64(params.size());
  w.f64s(params);
  w.save(path);
}

Network load_network(const std::filesystem::path& path) {
  io::Reader r(path, kNetworkMagic, kCheckpointVersion, "checkpoint");
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 4096) throw FormatError("checkpoint: implausible layer count");
  std::vector<LayerSpec> spec;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    LayerSpec ls;
    ls.in_dim = r.u32();
    ls.out_dim = r.u32();
    const std::uint32_t act = r.u32();
    if (act > static_cast<std::uint32_t>(Activation::tanh)) {
      throw FormatError("checkpoint: unknown activation code " + std::to_string(act));
    }
    ls.activation = static_cast<Activation>(act);
    spec.push_back(ls);
  }
  Network net;
  try {
    net = Network(std::move(spec));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid layer table: ") + e.what());
  }
  const std::uint64_t count = r.u64();
  if (count != net.param_count()) throw FormatError("checkpoint: parameter count mismatch");
  const std::vector<double> values = r.f64s(count);
  r.expect_end();
  std::size_t pos = 0;
  for (Tensor* p : net.parameters()) {
    for (double& v : p->data()) v = values[pos++];
  }
  return net;
}

}  // namespace ckd
