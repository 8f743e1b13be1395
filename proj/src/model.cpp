#include "privdistill/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "privdistill/random.hpp"

namespace privdistill {

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpModel::validate() const {
  if (layers.size() != depth) throw ModelError("layer count does not match depth");
  if (layers.empty()) throw ModelError("model has no layers");
  if (static_cast<std::size_t>(layers.front().weight.rows()) != input_dim) throw ModelError("first layer fan-in mismatch");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].bias.size() != layers[k].weight.cols()) throw ModelError("bias length mismatch");
    if (k + 1 < layers.size() && layers[k].weight.cols() != layers[k + 1].weight.rows())
      throw ModelError("consecutive layer shapes do not compose");
  }
  if (layers.back().weight.cols() != 1) throw ModelError("output layer must produce one score");
}

bool same_parameters(const MlpModel& a, const MlpModel& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    const auto& x = a.layers[k];
    const auto& y = b.layers[k];
    if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols()) return false;
    if (std::memcmp(x.weight.data(), y.weight.data(), sizeof(double) * static_cast<std::size_t>(x.weight.size())) != 0)
      return false;
    if (std::memcmp(x.bias.data(), y.bias.data(), sizeof(double) * static_cast<std::size_t>(x.bias.size())) != 0)
      return false;
  }
  return true;
}

MlpModel init_mlp(std::size_t input_dim, std::size_t hidden_dim, std::size_t depth, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1) throw ModelError("dimensions must be at least 1");
  if (depth < 2) throw ModelError("depth must be at least 2");
  MlpModel m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.depth = depth;
  m.seed = seed;
  Rng rng(seed);
  for (std::size_t k = 0; k < depth; ++k) {
    const std::size_t fan_in = k == 0 ? input_dim : hidden_dim;
    const std::size_t fan_out = k + 1 == depth ? 1 : hidden_dim;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.weight.resize(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-limit, limit);
    layer.bias = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(fan_out));
    m.layers.push_back(std::move(layer));
  }
  return m;
}

ForwardPass forward(const MlpModel& model, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim)
    throw ModelError("feature width " + std::to_string(features.cols()) + " does not match model input " +
                     std::to_string(model.input_dim));
  ForwardPass out;
  out.cache.model = &model;
  out.cache.version = model.version;
  out.cache.inputs.reserve(model.layers.size());
  out.cache.preacts.reserve(model.layers.size() - 1);
  Matrix act = features;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& layer = model.layers[k];
    Matrix pre = act * layer.weight;
    pre.rowwise() += layer.bias;
    out.cache.inputs.push_back(std::move(act));
    if (k + 1 == model.layers.size()) {
      out.scores = pre.col(0);
    } else {
      act = pre.cwiseMax(0.0);
      out.cache.preacts.push_back(std::move(pre));
    }
  }
  return out;
}

Vector predict(const MlpModel& model, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim) throw ModelError("feature width mismatch");
  Matrix act = features;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    Matrix pre = act * model.layers[k].weight;
    pre.rowwise() += model.layers[k].bias;
    if (k + 1 == model.layers.size()) return pre.col(0);
    act = pre.cwiseMax(0.0);
  }
  return {};
}

MlpGradients backward(const MlpModel& model, const ForwardCache& cache, const Vector& grad_scores) {
  if (cache.model != &model || cache.version != model.version)
    throw ModelError("forward cache is stale: model changed since the forward pass");
  const auto n = cache.inputs.front().rows();
  if (grad_scores.size() != n) throw ModelError("score gradient length does not match the forward batch");
  MlpGradients g;
  g.layers.resize(model.layers.size());
  Matrix delta = grad_scores;  // n x 1
  for (std::size_t k = model.layers.size(); k-- > 0;) {
    g.layers[k].weight = cache.inputs[k].transpose() * delta;
    g.layers[k].bias = delta.colwise().sum();
    if (k == 0) break;
    Matrix back = delta * model.layers[k].weight.transpose();
    // ReLU subgradient at 0 is 0.
    delta = back.cwiseProduct((cache.preacts[k - 1].array() > 0.0).cast<double>().matrix());
  }
  return g;
}

OptimizerState init_optimizer(const MlpModel& model, double base_lr, double weight_decay, WeightDecayMode mode) {
  OptimizerState s;
  s.base_lr = base_lr;
  s.lr = base_lr;
  s.weight_decay = weight_decay;
  s.decay_mode = mode;
  for (const auto& l : model.layers) {
    DenseLayer zero{Matrix::Zero(l.weight.rows(), l.weight.cols()), Eigen::RowVectorXd::Zero(l.bias.size())};
    s.first_moment.push_back(zero);
    s.second_moment.push_back(std::move(zero));
  }
  return s;
}

namespace {

template <class Param, class Grad, class Moment>
void adam_update(Param& theta, const Grad& grad, Moment& m, Moment& v, const OptimizerState& s, double bc1,
                 double bc2) {
  auto th = theta.array();
  auto mm = m.array();
  auto vv = v.array();
  if (s.decay_mode == WeightDecayMode::L2) {
    auto g = grad.array() + s.weight_decay * th;
    mm = s.beta1 * mm + (1.0 - s.beta1) * g;
    vv = s.beta2 * vv + (1.0 - s.beta2) * g.square();
  } else {
    mm = s.beta1 * mm + (1.0 - s.beta1) * grad.array();
    vv = s.beta2 * vv + (1.0 - s.beta2) * grad.array().square();
    th -= s.lr * s.weight_decay * th;
  }
  th -= s.lr * (mm / bc1) / ((vv / bc2).sqrt() + s.epsilon);
}

}  // namespace

void adam_step(MlpModel& model, const MlpGradients& grads, OptimizerState& state) {
  if (grads.layers.size() != model.layers.size() || state.first_moment.size() != model.layers.size())
    throw ModelError("gradient or optimizer shapes do not match the model");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    auto& layer = model.layers[k];
    const auto& g = grads.layers[k];
    if (g.weight.rows() != layer.weight.rows() || g.weight.cols() != layer.weight.cols() ||
        g.bias.size() != layer.bias.size())
      throw ModelError("gradient shape mismatch at layer " + std::to_string(k));
    adam_update(layer.weight, g.weight, state.first_moment[k].weight, state.second_moment[k].weight, state, bc1, bc2);
    adam_update(layer.bias, g.bias, state.first_moment[k].bias, state.second_moment[k].bias, state, bc1, bc2);
  }
  ++model.version;
}

double lr_at_epoch(double base_lr, std::size_t epoch, double factor, std::size_t period) {
  if (period == 0) return base_lr;
  return base_lr * std::pow(factor, static_cast<double>(epoch / period));
}

// ---------------------------------------------------------------------------

std::string model_to_json(const MlpModel& model) {
  nlohmann::json j;
  j["format"] = "privdistill-mlp";
  j["input_dim"] = model.input_dim;
  j["hidden_dim"] = model.hidden_dim;
  j["depth"] = model.depth;
  j["activation"] = "relu";
  j["seed"] = model.seed;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : model.layers) {
    nlohmann::json lj;
    lj["rows"] = l.weight.rows();
    lj["cols"] = l.weight.cols();
    lj["weight"] = std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size());
    lj["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back(std::move(lj));
  }
  return j.dump();
}

MlpModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "privdistill-mlp") throw ModelError("not a privdistill checkpoint");
  if (j.value("activation", "") != "relu") throw ModelError("unsupported activation");
  MlpModel m;
  m.input_dim = j.at("input_dim").get<std::size_t>();
  m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  m.depth = j.at("depth").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& lj : j.at("layers")) {
    DenseLayer l;
    const auto rows = lj.at("rows").get<Eigen::Index>();
    const auto cols = lj.at("cols").get<Eigen::Index>();
    auto w = lj.at("weight").get<std::vector<double>>();
    auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != cols)
      throw ModelError("checkpoint layer arrays have the wrong length");
    l.weight = Eigen::Map<Matrix>(w.data(), rows, cols);
    l.bias = Eigen::Map<Eigen::RowVectorXd>(b.data(), cols);
    m.layers.push_back(std::move(l));
  }
  m.validate();
  return m;
}

namespace {

constexpr char kBinaryMagic[8] = {'P', 'D', 'M', 'L', 'P', '0', '0', '1'};

void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_doubles(std::vector<char>& out, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, data + i, sizeof(bits));
    put_u64(out, bits);
  }
}

struct Reader {
  const std::vector<char>& bytes;
  std::size_t pos = 0;
  std::uint64_t u64() {
    if (pos + 8 > bytes.size()) throw ModelError("binary checkpoint is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  void doubles(double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits = u64();
      std::memcpy(data + i, &bits, sizeof(bits));
    }
  }
};

}  // namespace

std::vector<char> model_to_binary(const MlpModel& model) {
  std::vector<char> out(std::begin(kBinaryMagic), std::end(kBinaryMagic));
  put_u64(out, model.input_dim);
  put_u64(out, model.hidden_dim);
  put_u64(out, model.depth);
  put_u64(out, 0);  // activation tag: relu
  put_u64(out, model.seed);
  for (const auto& l : model.layers) {
    put_u64(out, static_cast<std::uint64_t>(l.weight.rows()));
    put_u64(out, static_cast<std::uint64_t>(l.weight.cols()));
    put_doubles(out, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    put_doubles(out, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

MlpModel model_from_binary(const std::vector<char>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kBinaryMagic, 8) != 0)
    throw ModelError("not a privdistill binary checkpoint");
  Reader r{bytes, 8};
  MlpModel m;
  m.input_dim = r.u64();
  m.hidden_dim = r.u64();
  m.depth = r.u64();
  if (r.u64() != 0) throw ModelError("unsupported activation tag");
  m.seed = r.u64();
  if (m.depth > 1024) throw ModelError("implausible depth in checkpoint");
  for (std::size_t k = 0; k < m.depth; ++k) {
    const auto rows = static_cast<Eigen::Index>(r.u64());
    const auto cols = static_cast<Eigen::Index>(r.u64());
    if (rows <= 0 || cols <= 0 || rows * cols > (1LL << 32)) throw ModelError("implausible layer shape");
    DenseLayer l;
    l.weight.resize(rows, cols);
    l.bias.resize(cols);
    r.doubles(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    r.doubles(l.bias.data(), static_cast<std::size_t>(cols));
    m.layers.push_back(std::move(l));
  }
  if (r.pos != bytes.size()) throw ModelError("trailing bytes in binary checkpoint");
  m.validate();
  return m;
}

void save_model(const std::filesystem::path& path, const MlpModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write " + path.string());
  if (path.extension() == ".json") {
    out << model_to_json(model);
  } else {
    auto bytes = model_to_binary(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw ModelError("write failed for " + path.string());
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (path.extension() == ".json") return model_from_json(std::string(bytes.begin(), bytes.end()));
  return model_from_binary(bytes);
}

}  // namespace privdistill
