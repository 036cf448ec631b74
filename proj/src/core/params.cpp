#include "sseg/core/params.hpp"

namespace sseg {

Params::Params(ConfigNode node, std::string context)
    : node_(std::move(node)), context_(std::move(context)) {
  if (node_.is_null()) node_ = ConfigNode::object();
  if (!node_.is_object()) {
    fail(ErrorCode::InvalidParams, context_ + ": parameters must be a mapping");
  }
}

bool Params::has(const std::string& key) const { return node_.contains(key); }

bool Params::is_null(const std::string& key) {
  consumed_.insert(key);
  return !has(key) || node_.at(key).is_null();
}

ConfigNode Params::get_node(const std::string& key) {
  consumed_.insert(key);
  if (!has(key)) return nullptr;
  return node_.at(key);
}

void Params::finish() const {
  std::string unknown;
  for (const auto& [key, value] : node_.items()) {
    if (!consumed_.contains(key)) {
      unknown += unknown.empty() ? "" : ", ";
      unknown += key;
    }
  }
  if (!unknown.empty()) {
    fail(ErrorCode::InvalidParams, context_ + ": unknown parameter(s): " + unknown);
  }
}

}  // namespace sseg
