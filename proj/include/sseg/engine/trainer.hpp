#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sseg/core/config.hpp"
#include "sseg/datasets/sample.hpp"
#include "sseg/engine/archive.hpp"
#include "sseg/engine/loss_scaler.hpp"
#include "sseg/evaluation/inference.hpp"
#include "sseg/losses/cross_entropy.hpp"
#include "sseg/optim/optimizer.hpp"
#include "sseg/segmentors/segmentor.hpp"

namespace sseg {

/// The `runtime` section.
struct RuntimeSpec {
  std::uint64_t seed = 0;
  std::int64_t batch_size = 8;
  int num_workers = 0;
  std::int64_t checkpoint_interval = 1000;
  std::int64_t eval_interval = 1000;
  bool deterministic = true;
  bool fp16 = false;
  std::optional<double> clip_grad_norm;
  bool norm_eval = false;
  int replicas = 1;  // data-parallel shards per step
  std::int64_t size_divisor = 32;
  InferenceSpec inference;
};

RuntimeSpec parse_runtime_spec(const ConfigNode& node);

/// Pins single-threaded, deterministic kernels.
void enable_deterministic_mode();

struct StepMetrics {
  std::int64_t iteration = 0;  // count of steps taken, this one included
  double total_loss = 0;
  double main_loss = 0;
  std::vector<double> aux_losses;
  double lr = 0;
  double loss_scale = 1;
  bool skipped = false;
  std::optional<double> grad_norm;
  double valid_pixels = 0;
  double step_time = 0;  // seconds; kept out of the metric log

  ConfigNode to_json() const;
};

/// Owns the training state: master model, data-parallel replicas, optimizers, schedule, loss
/// scale, iteration and metric history. Built entirely from a config tree.
///
/// Every step runs the replicas on contiguous shards of the batch. Each replica backpropagates
/// its own mean loss; the gradients are then averaged with weights proportional to each
/// shard's loss normalizer, which reproduces the gradient of the concatenated batch. Every
/// replica applies the same averaged update with its own optimizer, and parameter checksums are
/// compared afterwards (DesyncDetected). Replica 0 is the master model.
///
/// In fp16 mode each replica computes in a half-precision copy that is refreshed from the fp32
/// parameters before every step. The loss is scaled before backward and the gradients are
/// unscaled in fp32; a non-finite gradient skips the update and backs the scale off.
class Trainer {
 public:
  explicit Trainer(const ConfigNode& config);

  StepMetrics step(const Batch& batch);
  /// One step over an explicit sharding (one shard per replica).
  StepMetrics step_shards(const std::vector<Batch>& shards);

  SegmentorImpl& model() { return *replicas_.front().model; }
  SegmentorPtr model_ptr() { return replicas_.front().model; }
  SegmentorImpl& replica(std::size_t i) { return *replicas_.at(i).model; }
  std::size_t replica_count() const { return replicas_.size(); }
  Optimizer& optimizer() { return *replicas_.front().optimizer; }

  const ConfigNode& config() const { return config_; }
  const RuntimeSpec& runtime() const { return runtime_; }
  const ScheduleSpec& schedule() const { return schedule_; }
  const LossSpec& loss_spec() const { return loss_; }
  std::int64_t iteration() const { return iteration_; }
  std::int64_t max_iters() const { return schedule_.max_iters; }
  LossScaler& scaler() { return scaler_; }

  double best_metric() const { return best_metric_; }
  /// Records an evaluation; returns true when it is a new best.
  bool record_eval(double miou);
  const ConfigNode& history() const { return history_; }

  /// Averaged, unscaled fp32 gradients of the last step, before clipping, in parameter order.
  const std::vector<torch::Tensor>& last_gradients() const { return last_gradients_; }

  /// Test hook: the next fp16 step sees an infinite gradient.
  void inject_nonfinite_gradient() { inject_nonfinite_ = true; }

  /// Parameters, buffers, optimizer state, iteration, loss scale, metric history and the torch
  /// generator state, plus the config snapshot. Written atomically.
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores everything save_checkpoint wrote. Throws ShapeMismatch with a per-parameter
  /// report, VersionMismatch, CorruptFile.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  struct Replica {
    SegmentorPtr model;
    SegmentorPtr half;  // fp16 compute copy
    std::unique_ptr<Optimizer> optimizer;
  };

  SegmentorPtr build_model() const;
  void prepare(Replica& replica);

  ConfigNode config_;
  RuntimeSpec runtime_;
  LossSpec loss_;
  OptimizerSpec optimizer_spec_;
  ScheduleSpec schedule_;
  std::vector<Replica> replicas_;
  LossScaler scaler_;
  std::int64_t iteration_ = 0;
  double best_metric_ = -1.0;
  ConfigNode history_ = ConfigNode::array();
  bool inject_nonfinite_ = false;
  std::vector<torch::Tensor> last_gradients_;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Name-keyed parameters and buffers of a module, prefixed.
void add_module_arrays(Archive& archive, torch::nn::Module& module, const std::string& prefix);
/// Copies `prefix`-named arrays into the module. Every parameter and buffer must be present with
/// the same shape; otherwise ShapeMismatch lists each offending name.
void load_module_arrays(torch::nn::Module& module, const Archive& archive, const std::string& prefix);
/// Loads only the model weights of a checkpoint (checks the checkpoint format version).
void load_weights(torch::nn::Module& module, const std::filesystem::path& checkpoint);

/// FNV-1a over the bytes of every parameter, in registration order.
std::uint64_t parameter_checksum(torch::nn::Module& module);

}  // namespace sseg
