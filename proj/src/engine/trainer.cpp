#include "sseg/engine/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include <ATen/Context.h>

#include "sseg/core/errors.hpp"
#include "sseg/core/params.hpp"
#include "sseg/nn/layers.hpp"

namespace sseg {
namespace {

const ConfigNode& section(const ConfigNode& config, const std::string& name) {
  check(config.is_object() && config.contains(name), ErrorCode::ConfigError, "config is missing the '" + name + "' section");
  return config.at(name);
}

void copy_state(torch::nn::Module& dst, torch::nn::Module& src) {
  torch::NoGradGuard guard;
  auto dst_params = dst.parameters();
  auto src_params = src.parameters();
  check(dst_params.size() == src_params.size(), ErrorCode::ShapeMismatch, "replica structure differs from the master");
  for (std::size_t i = 0; i < dst_params.size(); ++i) dst_params[i].copy_(src_params[i]);
  auto dst_buffers = dst.buffers();
  auto src_buffers = src.buffers();
  for (std::size_t i = 0; i < dst_buffers.size(); ++i) dst_buffers[i].copy_(src_buffers[i]);
}

void copy_buffers(torch::nn::Module& dst, torch::nn::Module& src) {
  torch::NoGradGuard guard;
  auto dst_buffers = dst.buffers();
  auto src_buffers = src.buffers();
  for (std::size_t i = 0; i < dst_buffers.size(); ++i) dst_buffers[i].copy_(src_buffers[i]);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t size) {
  const auto* bytes = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

RuntimeSpec parse_runtime_spec(const ConfigNode& node) {
  Params p(node, "runtime");
  RuntimeSpec r;
  r.seed = p.get<std::uint64_t>("seed", r.seed);
  r.batch_size = p.get<std::int64_t>("batch_size", r.batch_size);
  r.num_workers = p.get<int>("num_workers", r.num_workers);
  r.checkpoint_interval = p.get<std::int64_t>("checkpoint_interval", r.checkpoint_interval);
  r.eval_interval = p.get<std::int64_t>("eval_interval", r.eval_interval);
  r.deterministic = p.get<bool>("deterministic", r.deterministic);
  r.fp16 = p.get<bool>("fp16", r.fp16);
  if (!p.is_null("clip_grad_norm")) r.clip_grad_norm = p.require<double>("clip_grad_norm");
  r.norm_eval = p.get<bool>("norm_eval", r.norm_eval);
  r.replicas = p.get<int>("replicas", r.replicas);
  r.size_divisor = p.get<std::int64_t>("size_divisor", r.size_divisor);
  r.inference = InferenceSpec::parse(p.get_node("inference"), r.size_divisor);
  p.finish();
  check(r.batch_size >= 1, ErrorCode::ConfigError, "runtime.batch_size must be >= 1");
  check(r.num_workers >= 0, ErrorCode::ConfigError, "runtime.num_workers must be >= 0");
  check(r.checkpoint_interval >= 1 && r.eval_interval >= 1, ErrorCode::ConfigError,
        "runtime checkpoint/eval intervals must be >= 1");
  check(r.replicas >= 1 && r.replicas <= r.batch_size, ErrorCode::ConfigError,
        "runtime.replicas must lie in [1, batch_size]");
  check(r.size_divisor >= 1, ErrorCode::ConfigError, "runtime.size_divisor must be >= 1");
  check(!r.clip_grad_norm || *r.clip_grad_norm > 0.0, ErrorCode::ConfigError, "runtime.clip_grad_norm must be > 0");
  return r;
}

void enable_deterministic_mode() {
  torch::set_num_threads(1);
  at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/false);
}

ConfigNode StepMetrics::to_json() const {
  ConfigNode j = ConfigNode::object();
  j["iteration"] = iteration;
  j["loss"] = total_loss;
  j["main_loss"] = main_loss;
  j["aux_losses"] = aux_losses;
  j["lr"] = lr;
  j["loss_scale"] = loss_scale;
  j["skipped"] = skipped;
  if (grad_norm) j["grad_norm"] = *grad_norm;
  j["valid_pixels"] = valid_pixels;
  return j;
}

Trainer::Trainer(const ConfigNode& config) : config_(config) {
  runtime_ = parse_runtime_spec(section(config_, "runtime"));
  if (runtime_.deterministic) enable_deterministic_mode();
  loss_ = parse_loss_spec(section(config_, "loss"));
  optimizer_spec_ = parse_optimizer_spec(section(config_, "optimizer"));
  schedule_ = parse_schedule_spec(section(config_, "scheduler"), optimizer_spec_.base_lr);

  torch::manual_seed(runtime_.seed);
  for (int i = 0; i < runtime_.replicas; ++i) {
    Replica r;
    r.model = build_model();
    if (i > 0) copy_state(*r.model, *replicas_.front().model);
    if (runtime_.fp16) {
      r.half = build_model();
      r.half->to(torch::kHalf);
    }
    r.optimizer = build_optimizer(*r.model, optimizer_spec_);
    replicas_.push_back(std::move(r));
  }
  loss_.validate(model().num_classes());
}

SegmentorPtr Trainer::build_model() const { return build_segmentor(section(config_, "model")); }

void Trainer::prepare(Replica& replica) {
  for (auto* module : {replica.model.get(), replica.half.get()}) {
    if (module == nullptr) continue;
    module->train();
    if (runtime_.norm_eval) freeze_norm_statistics(*module);
  }
  if (replica.half) copy_state(*replica.half, *replica.model);
}

bool Trainer::record_eval(double miou) {
  ConfigNode entry = ConfigNode::object();
  entry["iteration"] = iteration_;
  entry["miou"] = miou;
  history_.push_back(std::move(entry));
  if (miou > best_metric_) {
    best_metric_ = miou;
    return true;
  }
  return false;
}

StepMetrics Trainer::step(const Batch& batch) {
  const auto n = batch.size();
  check(n >= 1, ErrorCode::EmptyBatch, "training step on an empty batch");
  const auto r = static_cast<std::int64_t>(replicas_.size());
  check(n >= r, ErrorCode::ConfigError, "batch of " + std::to_string(n) + " cannot feed " + std::to_string(r) + " replicas");
  std::vector<Batch> shards;
  std::int64_t start = 0;
  for (std::int64_t i = 0; i < r; ++i) {
    const auto size = n / r + (i < n % r ? 1 : 0);
    Batch shard;
    shard.images = batch.images.narrow(0, start, size);
    shard.masks = batch.masks.narrow(0, start, size);
    shard.metas.assign(batch.metas.begin() + start, batch.metas.begin() + start + size);
    shards.push_back(std::move(shard));
    start += size;
  }
  return step_shards(shards);
}

StepMetrics Trainer::step_shards(const std::vector<Batch>& shards) {
  check(shards.size() == replicas_.size(), ErrorCode::ConfigError,
        "expected " + std::to_string(replicas_.size()) + " shards, got " + std::to_string(shards.size()));
  check(iteration_ < schedule_.max_iters, ErrorCode::IterOutOfRange,
        "training already reached max_iters (" + std::to_string(schedule_.max_iters) + ")");
  const auto started = std::chrono::steady_clock::now();
  const double lr = lr_at(schedule_, iteration_);
  const bool fp16 = runtime_.fp16;
  const double scale = fp16 ? scaler_.scale() : 1.0;
  auto master_params = model().parameters();

  struct ShardResult {
    std::vector<torch::Tensor> grads;
    double normalizer = 0;
    double main = 0;
    double total = 0;
    std::vector<double> aux;
    bool finite = true;
  };
  std::vector<ShardResult> results;
  for (std::size_t i = 0; i < replicas_.size(); ++i) {
    auto& replica = replicas_[i];
    const auto& shard = shards[i];
    check(shard.size() >= 1 && shard.masks.defined(), ErrorCode::EmptyBatch, "training shard needs labeled samples");
    prepare(replica);
    auto& compute = fp16 ? *replica.half : *replica.model;
    auto params = compute.parameters();
    for (auto& p : params) p.mutable_grad() = torch::Tensor();

    const auto out = compute.forward(shard.images.to(fp16 ? torch::kHalf : torch::kFloat), shard.masks);
    const auto main = cross_entropy(out.main_logits, shard.masks, loss_);
    std::vector<torch::Tensor> aux_terms;
    for (const auto& aux : out.aux_logits) aux_terms.push_back(cross_entropy(aux, shard.masks, loss_).loss);
    const auto combined = combine_losses(main.loss, aux_terms, loss_.aux_weight);

    ShardResult res;
    res.normalizer = main.normalizer;
    res.main = combined.main;
    res.aux = combined.aux;
    res.total = combined.total.item<double>();
    res.finite = std::isfinite(res.total);
    if (!res.finite && !fp16) {
      std::string detail = "main " + std::to_string(res.main);
      for (std::size_t a = 0; a < res.aux.size(); ++a) detail += ", aux" + std::to_string(a) + " " + std::to_string(res.aux[a]);
      fail(ErrorCode::NonFiniteLoss, "loss is not finite at iteration " + std::to_string(iteration_) + " (" + detail +
                                         ", lr " + std::to_string(lr) + ")");
    }
    if (res.finite && combined.total.requires_grad()) (combined.total * scale).backward();
    for (std::size_t j = 0; j < params.size(); ++j) {
      const auto& g = params[j].grad();
      if (!g.defined()) {
        res.grads.push_back(torch::zeros_like(master_params[j]));
      } else {
        res.grads.push_back(fp16 ? g.to(torch::kFloat) / scale : g.clone());
      }
    }
    results.push_back(std::move(res));
  }

  // Normalizer-weighted average; a single replica passes through untouched.
  double normalizer = 0;
  for (const auto& res : results) normalizer += res.normalizer;
  StepMetrics m;
  std::vector<torch::Tensor> grads;
  if (results.size() == 1) {
    grads = std::move(results.front().grads);
    m.main_loss = results.front().main;
    m.aux_losses = results.front().aux;
    m.total_loss = results.front().total;
  } else {
    m.aux_losses.assign(results.front().aux.size(), 0.0);
    for (std::size_t j = 0; j < master_params.size(); ++j) grads.push_back(torch::zeros_like(master_params[j]));
    if (normalizer > 0) {
      for (const auto& res : results) {
        const double w = res.normalizer / normalizer;
        for (std::size_t j = 0; j < grads.size(); ++j) grads[j].add_(res.grads[j], w);
        m.main_loss += w * res.main;
        m.total_loss += w * res.total;
        for (std::size_t a = 0; a < m.aux_losses.size(); ++a) m.aux_losses[a] += w * res.aux[a];
      }
    }
  }
  bool finite = true;
  for (const auto& res : results) finite = finite && res.finite;
  if (fp16 && inject_nonfinite_ && !grads.empty()) {
    grads.front().view(-1)[0] = std::numeric_limits<float>::infinity();
    inject_nonfinite_ = false;
  }
  for (const auto& g : grads) finite = finite && torch::isfinite(g).all().item<bool>();
  last_gradients_.clear();
  for (const auto& g : grads) last_gradients_.push_back(g.clone());

  bool applied = true;
  if (fp16) {
    applied = scaler_.update(finite);
  } else {
    check(finite, ErrorCode::NonFiniteLoss, "gradient is not finite at iteration " + std::to_string(iteration_));
  }

  if (applied) {
    if (runtime_.clip_grad_norm) {
      double sq = 0;
      for (const auto& g : grads) sq += g.to(torch::kDouble).pow(2).sum().item<double>();
      const double norm = std::sqrt(sq);
      m.grad_norm = norm;
      if (norm > *runtime_.clip_grad_norm) {
        const double factor = *runtime_.clip_grad_norm / (norm + 1e-6);
        for (auto& g : grads) g.mul_(factor);
      }
    }
    for (auto& replica : replicas_) {
      auto params = replica.model->parameters();
      for (std::size_t j = 0; j < params.size(); ++j) params[j].mutable_grad() = grads[j].clone();
      replica.optimizer->step(lr);
      if (replica.half) copy_buffers(*replica.model, *replica.half);
    }
    const auto reference = parameter_checksum(model());
    for (std::size_t i = 1; i < replicas_.size(); ++i) {
      check(parameter_checksum(*replicas_[i].model) == reference, ErrorCode::DesyncDetected,
            "replica " + std::to_string(i) + " parameters diverged from replica 0 at iteration " +
                std::to_string(iteration_ + 1));
    }
  }

  ++iteration_;
  m.iteration = iteration_;
  m.lr = lr;
  m.loss_scale = fp16 ? scaler_.scale() : 1.0;
  m.skipped = !applied;
  m.valid_pixels = normalizer;
  m.step_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return m;
}

void add_module_arrays(Archive& archive, torch::nn::Module& module, const std::string& prefix) {
  for (const auto& item : module.named_parameters()) archive.add(prefix + item.key(), item.value().detach());
  for (const auto& item : module.named_buffers()) archive.add(prefix + item.key(), item.value());
}

void load_module_arrays(torch::nn::Module& module, const Archive& archive, const std::string& prefix) {
  std::string report;
  std::vector<std::pair<torch::Tensor, torch::Tensor>> assignments;
  auto visit = [&](const std::string& name, const torch::Tensor& target) {
    const auto source = archive.find(prefix + name);
    if (!source.defined()) {
      report += "\n  " + name + ": missing from checkpoint";
    } else if (source.sizes() != target.sizes()) {
      report += "\n  " + name + ": checkpoint " + c10::str(source.sizes()) + " vs model " + c10::str(target.sizes());
    } else {
      assignments.emplace_back(target, source);
    }
  };
  for (const auto& item : module.named_parameters()) visit(item.key(), item.value());
  for (const auto& item : module.named_buffers()) visit(item.key(), item.value());
  check(report.empty(), ErrorCode::ShapeMismatch, "checkpoint does not fit the model:" + report);
  torch::NoGradGuard guard;
  for (auto& [target, source] : assignments) target.copy_(source);
}

namespace {

Archive load_checkpoint_archive(const std::filesystem::path& path) {
  auto archive = load_archive(path);
  const auto& meta = archive.metadata;
  check(meta.is_object() && meta.value("format", std::string()) == "sseg-checkpoint", ErrorCode::CorruptFile,
        path.string() + " is not a checkpoint");
  const int version = meta.value("format_version", -1);
  check(version == kCheckpointFormatVersion, ErrorCode::VersionMismatch,
        path.string() + " has checkpoint format " + std::to_string(version) + ", expected " +
            std::to_string(kCheckpointFormatVersion));
  return archive;
}

}  // namespace

void load_weights(torch::nn::Module& module, const std::filesystem::path& checkpoint) {
  load_module_arrays(module, load_checkpoint_archive(checkpoint), "model.");
}

std::uint64_t parameter_checksum(torch::nn::Module& module) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& p : module.parameters()) {
    const auto data = p.detach().contiguous();
    h = fnv1a(h, data.data_ptr(), data.nbytes());
  }
  return h;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Archive archive;
  auto& master = *replicas_.front().model;
  add_module_arrays(archive, master, "model.");
  for (const auto& [name, value] : replicas_.front().optimizer->state()) archive.add("optimizer." + name, value);
  auto generator = at::detail::getDefaultCPUGenerator();
  {
    std::lock_guard<std::mutex> lock(generator.mutex());
    archive.add("rng.torch_cpu", generator.get_state());
  }
  auto& meta = archive.metadata;
  meta["format"] = "sseg-checkpoint";
  meta["format_version"] = kCheckpointFormatVersion;
  meta["iteration"] = iteration_;
  meta["loss_scale"] = scaler_.scale();
  meta["good_steps"] = scaler_.good_steps();
  meta["best_metric"] = best_metric_;
  meta["history"] = history_;
  meta["config"] = config_;
  save_archive(path, archive);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const auto archive = load_checkpoint_archive(path);
  const auto& meta = archive.metadata;
  std::map<std::string, torch::Tensor> optimizer_state;
  for (const auto& [name, value] : archive.arrays) {
    if (name.rfind("optimizer.", 0) == 0) optimizer_state.emplace(name.substr(10), value);
  }
  for (auto& replica : replicas_) {
    load_module_arrays(*replica.model, archive, "model.");
    replica.optimizer->load_state(optimizer_state);
  }
  const auto iteration = meta.at("iteration").get<std::int64_t>();
  check(iteration >= 0 && iteration <= schedule_.max_iters, ErrorCode::ConfigError,
        "checkpoint iteration " + std::to_string(iteration) + " exceeds scheduler.max_iters");
  iteration_ = iteration;
  scaler_.restore(meta.at("loss_scale").get<double>(), meta.at("good_steps").get<std::int64_t>());
  best_metric_ = meta.at("best_metric").get<double>();
  history_ = meta.at("history");
  const auto rng = archive.find("rng.torch_cpu");
  if (rng.defined()) {
    auto generator = at::detail::getDefaultCPUGenerator();
    std::lock_guard<std::mutex> lock(generator.mutex());
    generator.set_state(rng);
  }
}

}  // namespace sseg
