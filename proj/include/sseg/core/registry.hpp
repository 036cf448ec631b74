#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sseg/core/config.hpp"
#include "sseg/core/errors.hpp"
#include "sseg/core/params.hpp"

namespace sseg {

/// String-keyed factory for one component category (backbone, segmentor, dataset, ...).
///
/// `build` takes a mapping with a `type` key, strips it, and hands the remaining keys to the
/// registered constructor as a Params view. Keys the constructor did not read are an error.
/// Extra context a category needs (channel counts, class count) travels in `Context...`.
///
/// Registries are filled during start-up and only read afterwards; concurrent `build` calls on
/// a registry that is no longer being modified are safe.
template <typename Product, typename... Context>
class Registry {
 public:
  using Constructor = std::function<Product(Params&, Context...)>;

  explicit Registry(std::string category) : category_(std::move(category)) {}

  const std::string& category() const { return category_; }

  void add(const std::string& name, Constructor constructor) {
    check(!name.empty(), ErrorCode::EmptyName, category_ + ": component name must be nonempty");
    check(!entries_.contains(name), ErrorCode::DuplicateName,
          category_ + ": '" + name + "' is already registered");
    entries_.emplace(name, std::move(constructor));
  }

  bool contains(const std::string& name) const { return entries_.contains(name); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, ctor] : entries_) out.push_back(name);
    return out;
  }

  Product build(const ConfigNode& node, Context... context) const {
    check(node.is_object(), ErrorCode::InvalidParams,
          category_ + ": component config must be a mapping");
    check(node.contains("type") && node.at("type").is_string(), ErrorCode::InvalidParams,
          category_ + ": component config needs a string 'type'");
    const auto name = node.at("type").template get<std::string>();
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      std::string valid;
      for (const auto& [known, ctor] : entries_) valid += (valid.empty() ? "" : ", ") + known;
      fail(ErrorCode::UnknownType,
           category_ + ": unknown type '" + name + "' (registered: " + valid + ")");
    }
    ConfigNode rest = node;
    rest.erase("type");
    Params params(std::move(rest), category_ + "/" + name);
    Product product = it->second(params, std::forward<Context>(context)...);
    params.finish();
    return product;
  }

 private:
  std::string category_;
  std::map<std::string, Constructor> entries_;
};

}  // namespace sseg
