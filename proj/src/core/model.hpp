#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/audio.hpp"
#include "core/dataset.hpp"
#include "core/dsp.hpp"
#include "core/rng.hpp"

namespace sblab {

enum class InputFeatures { log_mel, raw_waveform };

// Architecture and feature choice. Width fields size small_conv; other
// registered architectures may ignore them.
struct ModelSpec {
  std::string architecture = "small_conv";
  InputFeatures input_features = InputFeatures::log_mel;
  int n_mels = 40;
  int num_classes = 2;
  int conv1_channels = 8;
  int conv2_channels = 16;
  int hidden_units = 256;

  void validate() const;
};

enum class Optimizer { sgd };
enum class LossKind { cross_entropy };

struct TrainConfig {
  Optimizer optimizer = Optimizer::sgd;
  double learning_rate = 0.01;
  int batch_size = 32;
  int epochs = 30;
  uint64_t seed = 0;
  LossKind loss = LossKind::cross_entropy;

  void validate() const;
};

// Epoch 0 is a full-set evaluation of the untouched parameters; later rows
// are running means over that epoch's mini-batches.
struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainedModel {
  ModelSpec spec;
  TrainConfig config;
  std::vector<double> parameters;
  std::vector<EpochStats> training_log;
  std::string dataset_digest;
};

struct Prediction {
  int label = 0;
  std::vector<double> scores;  // softmax outputs, length num_classes
};

// Stateless compute graph for one architecture. Parameters live in a flat
// vector owned by the caller; all math is double so finite-difference
// gradient checks are meaningful.
class Network {
 public:
  virtual ~Network() = default;
  virtual size_t param_count() const = 0;
  virtual void init_params(std::vector<double>& params, DetRng& rng) const = 0;
  virtual void forward(const Matrix2D& features, const std::vector<double>& params,
                       std::vector<double>& scores) const = 0;
  // Returns the cross-entropy loss and accumulates d(loss)/d(params) into
  // `grad` (which must already be sized; contents are added to, not reset).
  // `predicted`, when non-null, receives the argmax class of this forward
  // pass so the trainer gets running accuracy for free.
  virtual double loss_and_gradient(const Matrix2D& features, int label,
                                   const std::vector<double>& params,
                                   std::vector<double>& grad,
                                   int* predicted = nullptr) const = 0;
};

using NetworkFactory = std::function<std::unique_ptr<Network>(const ModelSpec&)>;

// Architectures are pluggable by name; small_conv is registered built-in.
void register_architecture(const std::string& name, NetworkFactory factory);
std::unique_ptr<Network> make_network(const ModelSpec& spec);

// Feature extraction shared by training and inference.
Matrix2D features_for_sample(const ModelSpec& spec, const AudioSample& sample);

TrainedModel train_classifier(const LabeledDataset& dataset,
                              const ModelSpec& model_spec,
                              const TrainConfig& train_config);

// Same loop, starting from the given model's parameters. The input model is
// not modified. Used by the fine-tuning defense.
TrainedModel continue_training(const TrainedModel& model,
                               const LabeledDataset& dataset,
                               const TrainConfig& train_config);

Prediction predict(const TrainedModel& model, const AudioSample& sample);

// `config_digest`, when set, is stored in the checkpoint so the artifact
// verifier can tie it to the config that produced it.
void save_model(const TrainedModel& model, const std::string& path,
                const std::string& config_digest = "");
TrainedModel load_model(const std::string& path);

}  // namespace sblab
