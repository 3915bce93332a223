#include "ccat/netcore.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ccat {

std::string to_string(Activation a) { return a == Activation::ReLU ? "relu" : "identity"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + s);
}

Network::Network(std::size_t input_dim, std::vector<DenseLayer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  validate();
}

void Network::validate() const {
  if (input_dim_ == 0) throw ShapeError("network input_dim must be positive");
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  std::size_t in = input_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in_dim() != in) {
      throw ShapeError("layer " + std::to_string(i) + " expects input dim " +
                       std::to_string(l.in_dim()) + ", previous layer gives " + std::to_string(in));
    }
    if (static_cast<std::size_t>(l.biases.size()) != l.out_dim()) {
      throw ShapeError("layer " + std::to_string(i) + " bias length does not match out_dim");
    }
    if (l.activation == Activation::Identity && i + 1 != layers_.size()) {
      throw ShapeError("identity activation is only allowed on the logit layer");
    }
    in = l.out_dim();
  }
  if (in < 2) throw ShapeError("network needs at least two classes");
}

Network Network::mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t num_classes, Rng& rng) {
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  auto make = [&](std::size_t out, Activation act) {
    DenseLayer l;
    l.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = rng.uniform(-limit, limit);
    }
    l.biases = Vector::Zero(static_cast<Eigen::Index>(out));
    l.activation = act;
    layers.push_back(std::move(l));
    in = out;
  };
  for (std::size_t h : hidden) make(h, Activation::ReLU);
  make(num_classes, Activation::Identity);
  return Network(input_dim, std::move(layers));
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

bool Network::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
  }
  return true;
}

bool operator==(const Network& a, const Network& b) {
  if (a.input_dim_ != b.input_dim_ || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
        x.weights.cols() != y.weights.cols() || x.weights != y.weights || x.biases != y.biases) {
      return false;
    }
  }
  return true;
}

bool Gradients::all_finite() const {
  for (const auto& w : weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : biases) {
    if (!b.allFinite()) return false;
  }
  return input.size() == 0 || input.allFinite();
}

ForwardTrace forward(const Network& net, const Matrix& batch) {
  if (static_cast<std::size_t>(batch.cols()) != net.input_dim()) {
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                     std::to_string(net.input_dim()));
  }
  if (!batch.allFinite()) throw std::invalid_argument("forward: batch contains non-finite entries");
  ForwardTrace t;
  t.input = batch;
  t.pre.reserve(net.num_layers());
  t.post.reserve(net.num_layers());
  const Eigen::Index rows = batch.rows();
  for (std::size_t li = 0; li < net.num_layers(); ++li) {
    const auto& layer = net.layer(li);
    const Matrix& in = li == 0 ? t.input : t.post.back();
    Matrix pre(rows, static_cast<Eigen::Index>(layer.out_dim()));
    for (Eigen::Index r = 0; r < rows; ++r) {
      pre.row(r).transpose().noalias() = layer.weights * in.row(r).transpose();
      pre.row(r) += layer.biases.transpose();
    }
    Matrix post = layer.activation == Activation::ReLU ? Matrix(pre.cwiseMax(0.0)) : pre;
    t.pre.push_back(std::move(pre));
    t.post.push_back(std::move(post));
  }
  return t;
}

Vector logits(const Network& net, const Eigen::Ref<const Vector>& x) {
  Matrix batch = x.transpose();
  return forward(net, batch).logits().row(0).transpose();
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) out.row(r) = softmax(logits.row(r).transpose()).transpose();
  return out;
}

std::size_t argmax(const Eigen::Ref<const Vector>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<std::size_t>(best);
}

CrossEntropy cross_entropy_soft(const Eigen::Ref<const Vector>& probs, const Eigen::Ref<const Vector>& target) {
  if (probs.size() != target.size()) throw ShapeError("cross_entropy_soft: length mismatch");
  if (std::abs(probs.sum() - 1.0) > 1e-9 || std::abs(target.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("cross_entropy_soft: inputs must sum to 1 within 1e-9");
  }
  CrossEntropy ce;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (target[k] == 0.0) continue;
    double p = probs[k];
    if (p <= 0.0) {
      p = kLogClamp;
      ce.clamped = true;
    }
    ce.value -= target[k] * std::log(p);
  }
  return ce;
}

Vector one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) throw std::out_of_range("one_hot: label out of range");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(num_classes));
  v[static_cast<Eigen::Index>(label)] = 1.0;
  return v;
}

Gradients backward(const Network& net, const ForwardTrace& trace, const Matrix& targets, GradWrt wrt) {
  const Matrix& z = trace.logits();
  if (targets.rows() != z.rows() || targets.cols() != z.cols()) {
    throw ShapeError("backward: targets must be B x K");
  }
  const double inv_b = 1.0 / static_cast<double>(z.rows());
  Matrix dz = (softmax_rows(z) - targets) * inv_b;
  return backward_from_logits(net, trace, dz, wrt);
}

Gradients backward_from_logits(const Network& net, const ForwardTrace& trace, const Matrix& logit_grad,
                               GradWrt wrt) {
  const std::size_t L = net.num_layers();
  if (trace.pre.size() != L || trace.post.size() != L ||
      static_cast<std::size_t>(trace.input.cols()) != net.input_dim()) {
    throw ShapeError("backward: trace was not produced by this network");
  }
  for (std::size_t li = 0; li < L; ++li) {
    if (static_cast<std::size_t>(trace.pre[li].cols()) != net.layer(li).out_dim() ||
        trace.pre[li].rows() != trace.input.rows()) {
      throw ShapeError("backward: trace was not produced by this network");
    }
  }
  if (logit_grad.rows() != trace.input.rows() ||
      static_cast<std::size_t>(logit_grad.cols()) != net.num_classes()) {
    throw ShapeError("backward: logit gradient must be B x K");
  }

  const bool want_params = wrt != GradWrt::Input;
  const bool want_input = wrt != GradWrt::Params;
  const Eigen::Index rows = trace.input.rows();

  Gradients g;
  if (want_params) {
    g.weights.resize(L);
    g.biases.resize(L);
  }
  Matrix upstream = logit_grad;  // gradient w.r.t. post[li]
  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = net.layer(li);
    Matrix dpre = upstream;
    if (layer.activation == Activation::ReLU) {
      dpre.array() *= (trace.pre[li].array() > 0.0).cast<double>();
    }
    const Matrix& in = li == 0 ? trace.input : trace.post[li - 1];
    if (want_params) {
      g.weights[li].noalias() = dpre.transpose() * in;
      g.biases[li] = dpre.colwise().sum().transpose();
    }
    if (li == 0 && !want_input) break;
    Matrix down(rows, static_cast<Eigen::Index>(layer.in_dim()));
    for (Eigen::Index r = 0; r < rows; ++r) {
      down.row(r).transpose().noalias() = layer.weights.transpose() * dpre.row(r).transpose();
    }
    upstream = std::move(down);
  }
  if (want_input) g.input = std::move(upstream);
  return g;
}

void sgd_step(Network& net, const Gradients& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("sgd_step: lr must be finite and >= 0");
  if (grads.weights.size() != net.num_layers() || grads.biases.size() != net.num_layers()) {
    throw ShapeError("sgd_step: gradients do not match the network");
  }
  for (std::size_t li = 0; li < net.num_layers(); ++li) {
    const auto& l = net.layer(li);
    if (grads.weights[li].rows() != l.weights.rows() || grads.weights[li].cols() != l.weights.cols() ||
        grads.biases[li].size() != l.biases.size()) {
      throw ShapeError("sgd_step: gradients do not match the network");
    }
  }
  for (std::size_t li = 0; li < net.num_layers(); ++li) {
    if (!grads.weights[li].allFinite() || !grads.biases[li].allFinite()) {
      throw std::domain_error("sgd_step: non-finite gradient, step rejected");
    }
  }
  for (std::size_t li = 0; li < net.num_layers(); ++li) {
    auto& l = net.mutable_layer(li);
    l.weights.noalias() -= lr * grads.weights[li];
    l.biases.noalias() -= lr * grads.biases[li];
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kJsonFormat = "ccatlab-mlp";
constexpr int kFormatVersion = 1;
constexpr char kBinaryMagic[8] = {'C', 'C', 'A', 'T', 'M', 'L', 'P', '\0'};

static_assert(std::endian::native == std::endian::little, "binary model format assumes little-endian host");

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "model files are little-endian");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw std::runtime_error("model file truncated");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json to_json(const Network& net) {
  nlohmann::json doc;
  doc["format"] = kJsonFormat;
  doc["version"] = kFormatVersion;
  doc["input_dim"] = net.input_dim();
  auto& layers = doc["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json jl;
    jl["in_dim"] = l.in_dim();
    jl["out_dim"] = l.out_dim();
    jl["activation"] = to_string(l.activation);
    jl["weights"] = std::vector<double>(l.weights.data(), l.weights.data() + l.weights.size());
    jl["biases"] = std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size());
    layers.push_back(std::move(jl));
  }
  return doc;
}

Network network_from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string{}) != kJsonFormat) throw std::runtime_error("not a ccatlab model document");
  if (doc.at("version").get<int>() != kFormatVersion) {
    throw std::runtime_error("unsupported model version " + doc.at("version").dump());
  }
  std::vector<DenseLayer> layers;
  for (const auto& jl : doc.at("layers")) {
    const auto in = jl.at("in_dim").get<std::size_t>();
    const auto out = jl.at("out_dim").get<std::size_t>();
    const auto w = jl.at("weights").get<std::vector<double>>();
    const auto b = jl.at("biases").get<std::vector<double>>();
    if (w.size() != in * out || b.size() != out) throw ShapeError("model layer parameter count mismatch");
    DenseLayer l;
    l.weights = Eigen::Map<const Matrix>(w.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    l.biases = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(out));
    l.activation = activation_from_string(jl.at("activation").get<std::string>());
    layers.push_back(std::move(l));
  }
  return Network(doc.at("input_dim").get<std::size_t>(), std::move(layers));
}

std::string to_binary(const Network& net) {
  std::string out(kBinaryMagic, sizeof(kBinaryMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, net.input_dim());
  put<std::uint64_t>(out, net.num_layers());
  for (const auto& l : net.layers()) {
    put<std::uint64_t>(out, l.in_dim());
    put<std::uint64_t>(out, l.out_dim());
    put<std::uint8_t>(out, l.activation == Activation::ReLU ? 0 : 1);
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) put<double>(out, l.weights.data()[i]);
    for (Eigen::Index i = 0; i < l.biases.size(); ++i) put<double>(out, l.biases[i]);
  }
  return out;
}

Network network_from_binary(const std::string& bytes) {
  if (bytes.size() < sizeof(kBinaryMagic) || std::memcmp(bytes.data(), kBinaryMagic, sizeof(kBinaryMagic)) != 0) {
    throw std::runtime_error("not a ccatlab binary model");
  }
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof(kBinaryMagic); ++i) r.get<char>();
  if (r.get<std::uint32_t>() != kFormatVersion) throw std::runtime_error("unsupported binary model version");
  const auto input_dim = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  if (n > 1024) throw std::runtime_error("implausible layer count in model file");
  std::vector<DenseLayer> layers;
  for (std::uint64_t li = 0; li < n; ++li) {
    const auto in = r.get<std::uint64_t>();
    const auto out = r.get<std::uint64_t>();
    const auto act = r.get<std::uint8_t>();
    if (act > 1) throw std::runtime_error("bad activation code in model file");
    if (in * out > bytes.size()) throw std::runtime_error("model file truncated");
    DenseLayer l;
    l.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    l.biases.resize(static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = r.get<double>();
    for (Eigen::Index i = 0; i < l.biases.size(); ++i) l.biases[i] = r.get<double>();
    l.activation = act == 0 ? Activation::ReLU : Activation::Identity;
    layers.push_back(std::move(l));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in model file");
  return Network(input_dim, std::move(layers));
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  if (path.extension() == ".json") {
    f << to_json(net).dump(1) << '\n';
  } else {
    const auto bytes = to_binary(net);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  if (path.extension() == ".json") return network_from_json(nlohmann::json::parse(ss.str()));
  return network_from_binary(ss.str());
}

}  // namespace ccat
