#include "sseg/datasets/dataset.hpp"

#include <nlohmann/json.hpp>

#include "sseg/core/errors.hpp"
#include "sseg/core/fs.hpp"
#include "sseg/datasets/png.hpp"

namespace sseg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {
constexpr int kMetaVersion = 1;
}

void DatasetDescriptor::validate() const {
  check(num_classes >= 1, ErrorCode::InvalidSpec, "num_classes must be positive");
  check(palette.size() == static_cast<std::size_t>(num_classes), ErrorCode::InvalidSpec,
        "palette length must equal num_classes");
  check(class_names.size() == static_cast<std::size_t>(num_classes), ErrorCode::InvalidSpec,
        "class_names length must equal num_classes");
  check(ignore_index < 0 || ignore_index >= num_classes, ErrorCode::InvalidSpec,
        "ignore_index must not be a class index");
}

void save_dataset_meta(const fs::path& root, const DatasetMeta& meta) {
  ordered_json j;
  j["format"] = "sseg-dataset";
  j["version"] = kMetaVersion;
  j["num_classes"] = meta.num_classes;
  j["ignore_index"] = meta.ignore_index;
  j["class_names"] = meta.class_names;
  j["palette"] = ordered_json::array();
  for (const auto& c : meta.palette) j["palette"].push_back({c[0], c[1], c[2]});
  j["mean"] = meta.mean;
  j["std"] = meta.std;
  j["splits"] = ordered_json::object();
  for (const auto& [name, ids] : meta.splits) j["splits"][name] = ids;
  write_file_atomic(root / "meta.json", j.dump(2) + "\n");
}

DatasetDescriptor load_descriptor(const fs::path& root, const std::string& split) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(root / "meta.json"));
  } catch (const ordered_json::parse_error& e) {
    fail(ErrorCode::ParseError, (root / "meta.json").string() + ": " + e.what());
  }
  DatasetDescriptor d;
  try {
    check(j.value("version", 0) == kMetaVersion, ErrorCode::VersionMismatch,
          "unsupported dataset meta version");
    d.root = root;
    d.split = split;
    d.num_classes = j.at("num_classes").get<int>();
    d.ignore_index = j.value("ignore_index", kDefaultIgnoreIndex);
    d.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& c : j.at("palette")) {
      d.palette.push_back({c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(),
                           c.at(2).get<std::uint8_t>()});
    }
    if (j.contains("mean")) d.mean = j["mean"].get<std::array<double, 3>>();
    if (j.contains("std")) d.std = j["std"].get<std::array<double, 3>>();
    const auto& splits = j.at("splits");
    check(splits.contains(split), ErrorCode::ConfigError,
          "dataset at " + root.string() + " has no split '" + split + "'");
    d.ids = splits.at(split).get<std::vector<std::string>>();
  } catch (const ordered_json::exception& e) {
    fail(ErrorCode::ParseError, (root / "meta.json").string() + ": " + e.what());
  }
  d.validate();
  return d;
}

SegSample load_sample(const DatasetDescriptor& descriptor, std::size_t index) {
  check(index < descriptor.size(), ErrorCode::IndexOutOfRange,
        "sample index " + std::to_string(index) + " outside [0, " +
            std::to_string(descriptor.size()) + ")");
  const auto& id = descriptor.ids[index];
  const auto image_path = descriptor.root / "images" / (id + ".png");
  const auto mask_path = descriptor.root / "annotations" / (id + ".png");

  Raster image;
  Raster mask;
  try {
    image = read_png(image_path);
    mask = read_png(mask_path);
  } catch (const Error& e) {
    fail(ErrorCode::CorruptSample, std::string("sample '") + id + "': " + e.what());
  }
  check(image.channels == 3, ErrorCode::CorruptSample, "sample '" + id + "': image is not RGB");
  check(mask.channels == 1, ErrorCode::CorruptSample,
        "sample '" + id + "': annotation is not a single-channel index PNG");
  check(image.height == mask.height && image.width == mask.width, ErrorCode::CorruptSample,
        "sample '" + id + "': image " + std::to_string(image.height) + "x" +
            std::to_string(image.width) + " vs annotation " + std::to_string(mask.height) + "x" +
            std::to_string(mask.width));

  SegSample sample;
  sample.image = torch::from_blob(image.data.data(), {image.height, image.width, 3}, torch::kUInt8)
                     .permute({2, 0, 1})
                     .to(torch::kFloat32)
                     .div(255.0)
                     .contiguous();
  sample.mask = torch::from_blob(mask.data.data(), {mask.height, mask.width}, torch::kUInt8)
                    .to(torch::kInt64)
                    .clone();
  const auto legal = (sample.mask < descriptor.num_classes) | (sample.mask == descriptor.ignore_index);
  check(legal.all().item<bool>(), ErrorCode::CorruptSample,
        "sample '" + id + "': annotation holds labels outside the class range");
  sample.meta.id = id;
  sample.meta.original_size = {image.height, image.width};
  sample.meta.current_size = {image.height, image.width};
  return sample;
}

}  // namespace sseg
