#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "privdistill/dataset.hpp"

namespace privdistill {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DenseLayer {
  Matrix weight;           // fan_in x fan_out
  Eigen::RowVectorXd bias;  // fan_out
};

/// Pointwise scoring network: ReLU between layers, linear scalar output.
struct MlpModel {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 100;
  std::size_t depth = 5;  // number of weight matrices
  std::uint64_t seed = 0;
  std::vector<DenseLayer> layers;

  /// Bumped by every parameter update; forward caches record it.
  std::uint64_t version = 0;

  std::size_t parameter_count() const;
  void validate() const;
};

bool same_parameters(const MlpModel& a, const MlpModel& b);

/// Glorot-uniform weights, zero biases.
MlpModel init_mlp(std::size_t input_dim, std::size_t hidden_dim = 100, std::size_t depth = 5, std::uint64_t seed = 0);

struct ForwardCache {
  const MlpModel* model = nullptr;
  std::uint64_t version = 0;
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> preacts;      // pre-activation of each hidden layer
};

struct ForwardPass {
  Vector scores;
  ForwardCache cache;
};

ForwardPass forward(const MlpModel& model, const Matrix& features);

/// Scores without keeping a cache.
Vector predict(const MlpModel& model, const Matrix& features);

struct MlpGradients {
  std::vector<DenseLayer> layers;
};

/// Parameter gradients for a loss whose score gradient is `grad_scores`.
MlpGradients backward(const MlpModel& model, const ForwardCache& cache, const Vector& grad_scores);

enum class WeightDecayMode { Decoupled, L2 };

struct OptimizerState {
  std::vector<DenseLayer> first_moment;
  std::vector<DenseLayer> second_moment;
  std::uint64_t step = 0;
  double base_lr = 1e-3;
  double lr = 1e-3;  // current rate; the trainer sets it from the schedule
  double weight_decay = 0.005;
  WeightDecayMode decay_mode = WeightDecayMode::Decoupled;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr_decay_factor = 0.5;
  std::size_t lr_decay_period = 20;
};

OptimizerState init_optimizer(const MlpModel& model, double base_lr, double weight_decay = 0.005,
                              WeightDecayMode mode = WeightDecayMode::Decoupled);

/// One Adam update in place.
void adam_step(MlpModel& model, const MlpGradients& grads, OptimizerState& state);

/// base * factor^floor(epoch / period); defaults halve every 20 epochs.
double lr_at_epoch(double base_lr, std::size_t epoch, double factor = 0.5, std::size_t period = 20);

// ---------------------------------------------------------------------------
// Checkpoints.

std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);

std::vector<char> model_to_binary(const MlpModel& model);
MlpModel model_from_binary(const std::vector<char>& bytes);

/// `.json` selects the JSON form, anything else the binary form.
void save_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace privdistill
