#include "sseg/datasets/loader.hpp"

#include <filesystem>
#include <future>

#include "sseg/core/errors.hpp"
#include "sseg/datasets/synthetic.hpp"

namespace sseg {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

Batch collate(const std::vector<SegSample>& samples, double pad_value, std::int64_t ignore_index,
              std::int64_t size_divisor) {
  check(!samples.empty(), ErrorCode::EmptyBatch, "cannot collate an empty list of samples");
  check(size_divisor >= 1, ErrorCode::ConfigError, "size_divisor must be positive");
  const auto channels = samples.front().image.size(0);
  std::int64_t max_h = 0;
  std::int64_t max_w = 0;
  for (const auto& s : samples) {
    check(s.image.size(0) == channels, ErrorCode::ShapeError, "samples differ in channel count");
    check(s.mask.size(0) == s.image.size(1) && s.mask.size(1) == s.image.size(2),
          ErrorCode::ShapeError, "sample '" + s.meta.id + "': image and mask sizes differ");
    max_h = std::max(max_h, s.image.size(1));
    max_w = std::max(max_w, s.image.size(2));
  }
  const auto out_h = (max_h + size_divisor - 1) / size_divisor * size_divisor;
  const auto out_w = (max_w + size_divisor - 1) / size_divisor * size_divisor;

  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> masks;
  Batch batch;
  for (const auto& s : samples) {
    const auto ph = out_h - s.image.size(1);
    const auto pw = out_w - s.image.size(2);
    images.push_back(F::pad(s.image.to(torch::kFloat32), F::PadFuncOptions({0, pw, 0, ph}).value(pad_value)));
    masks.push_back(F::pad(s.mask.to(torch::kInt64),
                           F::PadFuncOptions({0, pw, 0, ph}).value(static_cast<double>(ignore_index))));
    batch.metas.push_back(s.meta);
  }
  batch.images = torch::stack(images);
  batch.masks = torch::stack(masks);
  return batch;
}

namespace {

DatasetPtr make_folder_dataset(Params& p, const std::string& split, const fs::path& root) {
  const auto train_split = p.get<std::string>("train_split", "train");
  const auto val_split = p.get<std::string>("val_split", "val");
  const auto train_pipeline = Pipeline::build(p.get_node("train_pipeline"));
  const auto test_pipeline = Pipeline::build(p.get_node("test_pipeline"));
  const bool training = split == "train";
  auto descriptor = load_descriptor(root, training ? train_split : (split == "val" ? val_split : split));
  return std::make_shared<SegDataset>(std::move(descriptor), training ? train_pipeline : test_pipeline);
}

}  // namespace

Registry<DatasetPtr, const std::string&>& dataset_registry() {
  static Registry<DatasetPtr, const std::string&> registry = [] {
    Registry<DatasetPtr, const std::string&> r("dataset");
    r.add("folder", [](Params& p, const std::string& split) {
      const fs::path root = p.require<std::string>("root");
      return make_folder_dataset(p, split, root);
    });
    r.add("synthetic", [](Params& p, const std::string& split) {
      const fs::path root = p.require<std::string>("root");
      SyntheticOptions opt;
      opt.seed = p.get<std::uint64_t>("seed", 0);
      opt.count = p.get<int>("count", 400);
      opt.val_count = p.get<int>("val_count", 100);
      opt.num_classes = p.get<int>("num_classes", 4);
      const auto size = p.get_node("size");
      if (size.is_array() && size.size() == 2) {
        opt.height = size[0].get<int>();
        opt.width = size[1].get<int>();
      } else if (size.is_number_integer()) {
        opt.height = opt.width = size.get<int>();
      }
      // Generated once; an existing tree is reused as-is.
      if (!fs::exists(root / "meta.json")) generate_synthetic_dataset(opt, root);
      return make_folder_dataset(p, split, root);
    });
    return r;
  }();
  return registry;
}

DataLoader::DataLoader(DatasetPtr dataset, LoaderOptions options)
    : dataset_(std::move(dataset)), options_(options) {
  check(dataset_ && dataset_->size() > 0, ErrorCode::ConfigError, "data loader needs a nonempty dataset");
  check(options_.batch_size >= 1, ErrorCode::ConfigError, "batch_size must be positive");
}

std::vector<std::size_t> DataLoader::permutation(std::int64_t epoch) const {
  std::lock_guard lock(mutex_);
  auto it = permutations_.find(epoch);
  if (it != permutations_.end()) return it->second;
  std::vector<std::size_t> order(dataset_->size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (options_.shuffle) {
    Rng rng = Rng::from({options_.seed, 0x5u, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
  }
  // Only a couple of epochs are live at a time.
  while (permutations_.size() > 4) permutations_.erase(permutations_.begin());
  return permutations_.emplace(epoch, std::move(order)).first->second;
}

std::vector<std::size_t> DataLoader::indices_at(std::int64_t iteration) const {
  const auto n = static_cast<std::int64_t>(dataset_->size());
  std::vector<std::size_t> out;
  std::vector<std::size_t> order;
  std::int64_t current_epoch = -1;
  for (std::int64_t j = 0; j < options_.batch_size; ++j) {
    const auto position = iteration * options_.batch_size + j;
    const auto epoch = position / n;
    if (order.empty() || epoch != current_epoch) {
      order = permutation(epoch);
      current_epoch = epoch;
    }
    out.push_back(order[static_cast<std::size_t>(position % n)]);
  }
  return out;
}

Batch DataLoader::batch_at(std::int64_t iteration) const {
  const auto indices = indices_at(iteration);
  auto prepare = [&](std::size_t slot) {
    const auto position = static_cast<std::uint64_t>(iteration * options_.batch_size) + slot;
    Rng rng = Rng::from({options_.seed, 0xA7u, position});
    return dataset_->get(indices[slot], rng);
  };
  std::vector<SegSample> samples(indices.size());
  if (options_.num_workers > 0) {
    std::vector<std::future<SegSample>> pending;
    for (std::size_t slot = 0; slot < indices.size(); ++slot) {
      pending.push_back(std::async(std::launch::async, prepare, slot));
    }
    for (std::size_t slot = 0; slot < indices.size(); ++slot) samples[slot] = pending[slot].get();
  } else {
    for (std::size_t slot = 0; slot < indices.size(); ++slot) samples[slot] = prepare(slot);
  }
  return collate(samples, options_.pad_value, dataset_->descriptor().ignore_index, options_.size_divisor);
}

}  // namespace sseg
