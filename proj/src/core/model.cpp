#include "core/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/json_io.hpp"

namespace sblab {

void ModelSpec::validate() const {
  if (architecture.empty()) fail(ErrorCode::invalid_argument, "architecture name is empty");
  if (num_classes < 2) fail(ErrorCode::invalid_argument, "num_classes must be >= 2");
  if (n_mels < 4) fail(ErrorCode::invalid_argument, "n_mels must be >= 4");
  if (conv1_channels < 1 || conv2_channels < 1 || hidden_units < 1) {
    fail(ErrorCode::invalid_argument, "layer widths must be >= 1");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorCode::invalid_argument, "learning_rate must be > 0");
  if (batch_size < 1) fail(ErrorCode::invalid_argument, "batch_size must be >= 1");
  if (epochs < 0) fail(ErrorCode::invalid_argument, "epochs must be >= 0");
}

namespace {

constexpr int kKernel = 3;  // all convolutions are 3x3, stride 2, pad 1

inline int half_up(int x) { return (x + 1) / 2; }

// Two stride-2 conv blocks over log-mel, mean-pooled over time, one hidden
// layer, softmax. Defaults land near 45k parameters.
class SmallConv final : public Network {
 public:
  explicit SmallConv(const ModelSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.input_features != InputFeatures::log_mel) {
      fail(ErrorCode::invalid_argument, "small_conv consumes log_mel features");
    }
    h1_ = half_up(spec_.n_mels);
    h2_ = half_up(h1_);
    feat_ = spec_.conv2_channels * h2_;

    conv1_w_ = 0;
    conv1_b_ = conv1_w_ + static_cast<size_t>(spec_.conv1_channels) * kKernel * kKernel;
    conv2_w_ = conv1_b_ + static_cast<size_t>(spec_.conv1_channels);
    conv2_b_ = conv2_w_ + static_cast<size_t>(spec_.conv2_channels) * spec_.conv1_channels * kKernel * kKernel;
    fc1_w_ = conv2_b_ + static_cast<size_t>(spec_.conv2_channels);
    fc1_b_ = fc1_w_ + static_cast<size_t>(spec_.hidden_units) * feat_;
    fc2_w_ = fc1_b_ + static_cast<size_t>(spec_.hidden_units);
    fc2_b_ = fc2_w_ + static_cast<size_t>(spec_.num_classes) * spec_.hidden_units;
    total_ = fc2_b_ + static_cast<size_t>(spec_.num_classes);
  }

  size_t param_count() const override { return total_; }

  void init_params(std::vector<double>& params, DetRng& rng) const override {
    params.assign(total_, 0.0);
    auto he_fill = [&](size_t offset, size_t count, int fan_in) {
      double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (size_t i = 0; i < count; ++i) params[offset + i] = rng.normal() * scale;
    };
    he_fill(conv1_w_, conv1_b_ - conv1_w_, kKernel * kKernel);
    he_fill(conv2_w_, conv2_b_ - conv2_w_, spec_.conv1_channels * kKernel * kKernel);
    he_fill(fc1_w_, fc1_b_ - fc1_w_, feat_);
    he_fill(fc2_w_, fc2_b_ - fc2_w_, spec_.hidden_units);
  }

  void forward(const Matrix2D& features, const std::vector<double>& params,
               std::vector<double>& scores) const override {
    Scratch& s = scratch();
    run_forward(features, params, s);
    scores.assign(s.probs.begin(), s.probs.end());
  }

  double loss_and_gradient(const Matrix2D& features, int label,
                           const std::vector<double>& params,
                           std::vector<double>& grad,
                           int* predicted) const override {
    if (label < 0 || label >= spec_.num_classes) {
      fail(ErrorCode::invalid_argument, "label outside model's class range");
    }
    if (grad.size() != total_) fail(ErrorCode::invalid_argument, "gradient buffer has wrong size");
    Scratch& s = scratch();
    run_forward(features, params, s);
    if (predicted != nullptr) {
      *predicted = static_cast<int>(
          std::max_element(s.probs.begin(), s.probs.end()) - s.probs.begin());
    }

    const int C = spec_.num_classes;
    const int C1 = spec_.conv1_channels;
    const int C2 = spec_.conv2_channels;
    const int H = spec_.hidden_units;
    const int T = s.t;
    const int w1 = s.w1, w2 = s.w2;
    const double* p = params.data();
    double* g = grad.data();

    // softmax + cross-entropy: dlogits = probs - onehot(label)
    s.dlogits = s.probs;
    s.dlogits[static_cast<size_t>(label)] -= 1.0;

    // fc2
    s.dh.assign(static_cast<size_t>(H), 0.0);
    for (int c = 0; c < C; ++c) {
      double d = s.dlogits[static_cast<size_t>(c)];
      g[fc2_b_ + static_cast<size_t>(c)] += d;
      const double* w_row = p + fc2_w_ + static_cast<size_t>(c) * H;
      double* gw_row = g + fc2_w_ + static_cast<size_t>(c) * H;
      for (int h = 0; h < H; ++h) {
        gw_row[h] += d * s.hact[static_cast<size_t>(h)];
        s.dh[static_cast<size_t>(h)] += d * w_row[h];
      }
    }

    // fc1 (relu)
    s.dpool.assign(static_cast<size_t>(feat_), 0.0);
    for (int h = 0; h < H; ++h) {
      if (s.hpre[static_cast<size_t>(h)] <= 0.0) continue;
      double d = s.dh[static_cast<size_t>(h)];
      g[fc1_b_ + static_cast<size_t>(h)] += d;
      const double* w_row = p + fc1_w_ + static_cast<size_t>(h) * feat_;
      double* gw_row = g + fc1_w_ + static_cast<size_t>(h) * feat_;
      for (int f = 0; f < feat_; ++f) {
        gw_row[f] += d * s.pool[static_cast<size_t>(f)];
        s.dpool[static_cast<size_t>(f)] += d * w_row[f];
      }
    }

    // mean pool over time, then conv2 relu mask
    s.dz2.assign(s.z2.size(), 0.0);
    double inv_w2 = 1.0 / static_cast<double>(w2);
    for (int oc = 0; oc < C2; ++oc) {
      for (int i = 0; i < h2_; ++i) {
        double d = s.dpool[static_cast<size_t>(oc * h2_ + i)] * inv_w2;
        size_t base = (static_cast<size_t>(oc) * h2_ + static_cast<size_t>(i)) * w2;
        for (int j = 0; j < w2; ++j) {
          if (s.z2[base + static_cast<size_t>(j)] > 0.0) s.dz2[base + static_cast<size_t>(j)] = d;
        }
      }
    }

    // conv2
    s.da1.assign(s.z1.size(), 0.0);
    for (int oc = 0; oc < C2; ++oc) {
      double gb = 0.0;
      for (int i = 0; i < h2_; ++i) {
        int ih0 = 2 * i - 1;
        for (int j = 0; j < w2; ++j) {
          double d = s.dz2[(static_cast<size_t>(oc) * h2_ + static_cast<size_t>(i)) * w2 + static_cast<size_t>(j)];
          if (d == 0.0) continue;
          gb += d;
          int iw0 = 2 * j - 1;
          for (int ic = 0; ic < C1; ++ic) {
            for (int kh = 0; kh < kKernel; ++kh) {
              int ih = ih0 + kh;
              if (ih < 0 || ih >= h1_) continue;
              for (int kw = 0; kw < kKernel; ++kw) {
                int iw = iw0 + kw;
                if (iw < 0 || iw >= w1) continue;
                size_t a1_idx = (static_cast<size_t>(ic) * h1_ + static_cast<size_t>(ih)) * w1 + static_cast<size_t>(iw);
                size_t w_idx = conv2_w_ + ((static_cast<size_t>(oc) * C1 + static_cast<size_t>(ic)) * kKernel + static_cast<size_t>(kh)) * kKernel + static_cast<size_t>(kw);
                double a1v = s.z1[a1_idx] > 0.0 ? s.z1[a1_idx] : 0.0;
                g[w_idx] += d * a1v;
                s.da1[a1_idx] += d * p[w_idx];
              }
            }
          }
        }
      }
      g[conv2_b_ + static_cast<size_t>(oc)] += gb;
    }

    // conv1 (relu mask folded in via z1)
    for (int oc = 0; oc < C1; ++oc) {
      double gb = 0.0;
      for (int i = 0; i < h1_; ++i) {
        int ih0 = 2 * i - 1;
        for (int j = 0; j < w1; ++j) {
          size_t z1_idx = (static_cast<size_t>(oc) * h1_ + static_cast<size_t>(i)) * w1 + static_cast<size_t>(j);
          if (s.z1[z1_idx] <= 0.0) continue;
          double d = s.da1[z1_idx];
          if (d == 0.0) continue;
          gb += d;
          int iw0 = 2 * j - 1;
          for (int kh = 0; kh < kKernel; ++kh) {
            int ih = ih0 + kh;
            if (ih < 0 || ih >= spec_.n_mels) continue;
            for (int kw = 0; kw < kKernel; ++kw) {
              int iw = iw0 + kw;
              if (iw < 0 || iw >= T) continue;
              size_t w_idx = conv1_w_ + (static_cast<size_t>(oc) * kKernel + static_cast<size_t>(kh)) * kKernel + static_cast<size_t>(kw);
              g[w_idx] += d * s.a0[static_cast<size_t>(ih) * T + static_cast<size_t>(iw)];
            }
          }
        }
      }
      g[conv1_b_ + static_cast<size_t>(oc)] += gb;
    }

    return -std::log(std::max(s.probs[static_cast<size_t>(label)], 1e-300));
  }

 private:
  struct Scratch {
    int t = 0, w1 = 0, w2 = 0;
    std::vector<double> a0, z1, z2, pool, hpre, hact, logits, probs;
    std::vector<double> dlogits, dh, dpool, dz2, da1;
  };

  static Scratch& scratch() {
    thread_local Scratch s;
    return s;
  }

  void run_forward(const Matrix2D& features, const std::vector<double>& params,
                   Scratch& s) const {
    if (params.size() != total_) {
      fail(ErrorCode::state, "parameter vector has size " + std::to_string(params.size()) +
                                 ", architecture needs " + std::to_string(total_));
    }
    if (features.rows() != static_cast<size_t>(spec_.n_mels) || features.cols() == 0) {
      fail(ErrorCode::invalid_argument, "feature matrix shape does not match n_mels");
    }
    const int T = static_cast<int>(features.cols());
    const int C1 = spec_.conv1_channels;
    const int C2 = spec_.conv2_channels;
    const int H = spec_.hidden_units;
    const int C = spec_.num_classes;
    const int w1 = half_up(T);
    const int w2 = half_up(w1);
    const double* p = params.data();

    s.t = T;
    s.w1 = w1;
    s.w2 = w2;
    s.a0.resize(static_cast<size_t>(spec_.n_mels) * T);
    s.z1.resize(static_cast<size_t>(C1) * h1_ * w1);
    s.z2.resize(static_cast<size_t>(C2) * h2_ * w2);
    s.pool.assign(static_cast<size_t>(feat_), 0.0);
    s.hpre.resize(static_cast<size_t>(H));
    s.hact.resize(static_cast<size_t>(H));
    s.logits.resize(static_cast<size_t>(C));
    s.probs.resize(static_cast<size_t>(C));

    // Log energies sit roughly in [-23, 5]; this affine map lands them in a
    // unit-ish range so the default learning rate behaves.
    for (size_t i = 0; i < s.a0.size(); ++i) s.a0[i] = features.data()[i] * 0.1 + 1.0;

    for (int oc = 0; oc < C1; ++oc) {
      const double* w = p + conv1_w_ + static_cast<size_t>(oc) * kKernel * kKernel;
      double b = p[conv1_b_ + static_cast<size_t>(oc)];
      for (int i = 0; i < h1_; ++i) {
        int ih0 = 2 * i - 1;
        for (int j = 0; j < w1; ++j) {
          int iw0 = 2 * j - 1;
          double acc = b;
          for (int kh = 0; kh < kKernel; ++kh) {
            int ih = ih0 + kh;
            if (ih < 0 || ih >= spec_.n_mels) continue;
            for (int kw = 0; kw < kKernel; ++kw) {
              int iw = iw0 + kw;
              if (iw < 0 || iw >= T) continue;
              acc += w[kh * kKernel + kw] * s.a0[static_cast<size_t>(ih) * T + static_cast<size_t>(iw)];
            }
          }
          s.z1[(static_cast<size_t>(oc) * h1_ + static_cast<size_t>(i)) * w1 + static_cast<size_t>(j)] = acc;
        }
      }
    }

    for (int oc = 0; oc < C2; ++oc) {
      double b = p[conv2_b_ + static_cast<size_t>(oc)];
      for (int i = 0; i < h2_; ++i) {
        int ih0 = 2 * i - 1;
        for (int j = 0; j < w2; ++j) {
          int iw0 = 2 * j - 1;
          double acc = b;
          for (int ic = 0; ic < C1; ++ic) {
            const double* w = p + conv2_w_ + (static_cast<size_t>(oc) * C1 + static_cast<size_t>(ic)) * kKernel * kKernel;
            for (int kh = 0; kh < kKernel; ++kh) {
              int ih = ih0 + kh;
              if (ih < 0 || ih >= h1_) continue;
              for (int kw = 0; kw < kKernel; ++kw) {
                int iw = iw0 + kw;
                if (iw < 0 || iw >= w1) continue;
                double a1v = s.z1[(static_cast<size_t>(ic) * h1_ + static_cast<size_t>(ih)) * w1 + static_cast<size_t>(iw)];
                if (a1v > 0.0) acc += w[kh * kKernel + kw] * a1v;
              }
            }
          }
          s.z2[(static_cast<size_t>(oc) * h2_ + static_cast<size_t>(i)) * w2 + static_cast<size_t>(j)] = acc;
        }
      }
    }

    double inv_w2 = 1.0 / static_cast<double>(w2);
    for (int oc = 0; oc < C2; ++oc) {
      for (int i = 0; i < h2_; ++i) {
        double acc = 0.0;
        size_t base = (static_cast<size_t>(oc) * h2_ + static_cast<size_t>(i)) * w2;
        for (int j = 0; j < w2; ++j) {
          double v = s.z2[base + static_cast<size_t>(j)];
          if (v > 0.0) acc += v;
        }
        s.pool[static_cast<size_t>(oc * h2_ + i)] = acc * inv_w2;
      }
    }

    for (int h = 0; h < H; ++h) {
      const double* w = p + fc1_w_ + static_cast<size_t>(h) * feat_;
      double acc = p[fc1_b_ + static_cast<size_t>(h)];
      for (int f = 0; f < feat_; ++f) acc += w[f] * s.pool[static_cast<size_t>(f)];
      s.hpre[static_cast<size_t>(h)] = acc;
      s.hact[static_cast<size_t>(h)] = acc > 0.0 ? acc : 0.0;
    }

    for (int c = 0; c < C; ++c) {
      const double* w = p + fc2_w_ + static_cast<size_t>(c) * H;
      double acc = p[fc2_b_ + static_cast<size_t>(c)];
      for (int h = 0; h < H; ++h) acc += w[h] * s.hact[static_cast<size_t>(h)];
      s.logits[static_cast<size_t>(c)] = acc;
    }

    double mx = *std::max_element(s.logits.begin(), s.logits.end());
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      s.probs[static_cast<size_t>(c)] = std::exp(s.logits[static_cast<size_t>(c)] - mx);
      sum += s.probs[static_cast<size_t>(c)];
    }
    for (int c = 0; c < C; ++c) s.probs[static_cast<size_t>(c)] /= sum;
  }

  ModelSpec spec_;
  int h1_ = 0, h2_ = 0, feat_ = 0;
  size_t conv1_w_ = 0, conv1_b_ = 0, conv2_w_ = 0, conv2_b_ = 0;
  size_t fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0, total_ = 0;
};

std::map<std::string, NetworkFactory>& registry() {
  static std::map<std::string, NetworkFactory> r = {
      {"small_conv", [](const ModelSpec& spec) -> std::unique_ptr<Network> {
         return std::make_unique<SmallConv>(spec);
       }}};
  return r;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_architecture(const std::string& name, NetworkFactory factory) {
  if (name.empty() || !factory) fail(ErrorCode::invalid_argument, "bad architecture registration");
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::unique_ptr<Network> make_network(const ModelSpec& spec) {
  spec.validate();
  NetworkFactory factory;
  {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(spec.architecture);
    if (it == registry().end()) {
      std::string known;
      for (const auto& [name, _] : registry()) {
        if (!known.empty()) known += ", ";
        known += name;
      }
      fail(ErrorCode::invalid_argument,
           "unknown architecture '" + spec.architecture + "' (registered: " + known + ")");
    }
    factory = it->second;
  }
  return factory(spec);
}

Matrix2D features_for_sample(const ModelSpec& spec, const AudioSample& sample) {
  if (spec.input_features == InputFeatures::raw_waveform) {
    Matrix2D m(1, sample.waveform.size());
    for (size_t i = 0; i < sample.waveform.size(); ++i) m(0, i) = sample.waveform[i];
    return m;
  }
  return log_mel_features(sample.waveform, sample.sample_rate, spec.n_mels);
}

namespace {

TrainedModel train_impl(const LabeledDataset& dataset, const ModelSpec& spec,
                        const TrainConfig& config,
                        const std::vector<double>* initial_params) {
  spec.validate();
  config.validate();
  validate_dataset(dataset);
  if (dataset.role != DatasetRole::clean_train && dataset.role != DatasetRole::backdoor_train) {
    fail(ErrorCode::invalid_argument, "training requires a train-role dataset");
  }
  if (dataset.samples.empty()) fail(ErrorCode::invalid_argument, "training set is empty");
  if (dataset.num_classes != spec.num_classes) {
    fail(ErrorCode::invalid_argument,
         "dataset has " + std::to_string(dataset.num_classes) + " classes, model expects " +
             std::to_string(spec.num_classes));
  }

  TrainedModel model;
  model.spec = spec;
  model.config = config;
  model.dataset_digest = dataset_digest(dataset);

  auto net = make_network(spec);

  std::vector<Matrix2D> features;
  features.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) {
    try {
      features.push_back(features_for_sample(spec, s));
    } catch (const Error& e) {
      fail(e.code(), "feature extraction failed on sample '" + s.id + "': " + e.what());
    }
  }

  if (initial_params != nullptr) {
    if (initial_params->size() != net->param_count()) {
      fail(ErrorCode::state, "initial parameters do not fit the architecture");
    }
    model.parameters = *initial_params;
  } else {
    DetRng init_rng(mix_seed(config.seed, 0x696e69747061726dULL));
    net->init_params(model.parameters, init_rng);
  }

  const size_t n = dataset.samples.size();
  std::vector<double> scores;

  // Epoch 0: evaluate the starting point before any update.
  {
    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t i = 0; i < n; ++i) {
      net->forward(features[i], model.parameters, scores);
      int label = dataset.samples[i].label;
      loss_sum += -std::log(std::max(scores[static_cast<size_t>(label)], 1e-300));
      int pred = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
      if (pred == label) ++correct;
    }
    double mean_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(mean_loss)) fail(ErrorCode::diverged, "non-finite loss at epoch 0");
    model.training_log.push_back({0, mean_loss, static_cast<double>(correct) / static_cast<double>(n)});
  }

  DetRng shuffle_rng(mix_seed(config.seed, 0x73687566666c65ULL));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<double> grad(net->param_count());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(n, start + static_cast<size_t>(config.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (size_t k = start; k < end; ++k) {
        size_t i = order[k];
        int pred = -1;
        batch_loss += net->loss_and_gradient(features[i], dataset.samples[i].label,
                                             model.parameters, grad, &pred);
        if (pred == dataset.samples[i].label) ++correct;
      }
      if (!std::isfinite(batch_loss)) {
        fail(ErrorCode::diverged, "non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += batch_loss;
      double step = config.learning_rate / static_cast<double>(end - start);
      for (size_t w = 0; w < grad.size(); ++w) model.parameters[w] -= step * grad[w];
    }
    model.training_log.push_back({epoch, loss_sum / static_cast<double>(n),
                                  static_cast<double>(correct) / static_cast<double>(n)});
  }
  return model;
}

}  // namespace

TrainedModel train_classifier(const LabeledDataset& dataset, const ModelSpec& model_spec,
                              const TrainConfig& train_config) {
  return train_impl(dataset, model_spec, train_config, nullptr);
}

TrainedModel continue_training(const TrainedModel& model, const LabeledDataset& dataset,
                               const TrainConfig& train_config) {
  return train_impl(dataset, model.spec, train_config, &model.parameters);
}

Prediction predict(const TrainedModel& model, const AudioSample& sample) {
  if (sample.sample_rate != kCanonicalSampleRate) {
    fail(ErrorCode::invalid_argument,
         "sample '" + sample.id + "' is not at the canonical rate");
  }
  auto net = make_network(model.spec);
  Matrix2D features;
  try {
    features = features_for_sample(model.spec, sample);
  } catch (const Error& e) {
    fail(e.code(), "feature extraction failed on sample '" + sample.id + "': " + e.what());
  }
  Prediction out;
  net->forward(features, model.parameters, out.scores);
  out.label = static_cast<int>(
      std::max_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
  return out;
}

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  j = nlohmann::json{
      {"architecture", spec.architecture},
      {"input_features", spec.input_features == InputFeatures::log_mel ? "log_mel" : "raw_waveform"},
      {"n_mels", spec.n_mels},
      {"num_classes", spec.num_classes},
      {"conv1_channels", spec.conv1_channels},
      {"conv2_channels", spec.conv2_channels},
      {"hidden_units", spec.hidden_units}};
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  spec.architecture = j.at("architecture").get<std::string>();
  std::string feats = j.at("input_features").get<std::string>();
  if (feats == "log_mel") {
    spec.input_features = InputFeatures::log_mel;
  } else if (feats == "raw_waveform") {
    spec.input_features = InputFeatures::raw_waveform;
  } else {
    fail(ErrorCode::schema, "unknown input_features '" + feats + "'");
  }
  spec.n_mels = j.at("n_mels").get<int>();
  spec.num_classes = j.at("num_classes").get<int>();
  spec.conv1_channels = j.value("conv1_channels", 8);
  spec.conv2_channels = j.value("conv2_channels", 16);
  spec.hidden_units = j.value("hidden_units", 256);
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"optimizer", "sgd"},
                     {"learning_rate", cfg.learning_rate},
                     {"batch_size", cfg.batch_size},
                     {"epochs", cfg.epochs},
                     {"seed", cfg.seed},
                     {"loss", "cross_entropy"}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  std::string opt = j.at("optimizer").get<std::string>();
  if (opt != "sgd") fail(ErrorCode::schema, "unknown optimizer '" + opt + "'");
  cfg.optimizer = Optimizer::sgd;
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  std::string loss = j.at("loss").get<std::string>();
  if (loss != "cross_entropy") fail(ErrorCode::schema, "unknown loss '" + loss + "'");
  cfg.loss = LossKind::cross_entropy;
}

void save_model(const TrainedModel& model, const std::string& path,
                const std::string& config_digest) {
  nlohmann::json j;
  j["version"] = 1;
  j["kind"] = "sblab-model";
  if (!config_digest.empty()) j["config_digest"] = config_digest;
  j["model_spec"] = model.spec;
  j["train_config"] = model.config;
  j["dataset_digest"] = model.dataset_digest;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : model.training_log) {
    log.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}});
  }
  j["training_log"] = std::move(log);
  j["param_count"] = model.parameters.size();
  // Raw 8-byte doubles, host byte order; base64 keeps the round trip
  // bit-exact through the text container.
  j["parameters_b64"] = base64_encode(
      reinterpret_cast<const unsigned char*>(model.parameters.data()),
      model.parameters.size() * sizeof(double));

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write model file '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorCode::io, "short write on model file '" + path + "'");
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot read model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, "model file '" + path + "': " + e.what());
  }

  TrainedModel model;
  try {
    if (j.value("kind", "") != "sblab-model" || j.at("version").get<int>() != 1) {
      fail(ErrorCode::format, "model file '" + path + "' has an unsupported version");
    }
    model.spec = j.at("model_spec").get<ModelSpec>();
    model.config = j.at("train_config").get<TrainConfig>();
    model.dataset_digest = j.at("dataset_digest").get<std::string>();
    for (const auto& e : j.at("training_log")) {
      model.training_log.push_back({e.at("epoch").get<int>(), e.at("loss").get<double>(),
                                    e.at("accuracy").get<double>()});
    }
    size_t count = j.at("param_count").get<size_t>();
    std::vector<uint8_t> bytes = base64_decode(j.at("parameters_b64").get<std::string>());
    if (bytes.size() != count * sizeof(double)) {
      fail(ErrorCode::format, "model file '" + path + "': parameter blob size mismatch");
    }
    model.parameters.resize(count);
    std::memcpy(model.parameters.data(), bytes.data(), bytes.size());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, "model file '" + path + "': " + e.what());
  }

  auto net = make_network(model.spec);
  if (model.parameters.size() != net->param_count()) {
    fail(ErrorCode::format, "model file '" + path + "': parameters do not fit the architecture");
  }
  return model;
}

}  // namespace sblab
