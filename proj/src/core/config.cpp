#include "sseg/core/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "sseg/core/errors.hpp"
#include "sseg/core/fs.hpp"

namespace sseg {

ConfigNode parse_value(std::string_view text, const std::string& source_name);

namespace {

namespace fs = std::filesystem;

ConfigNode scalar_from_plain(const std::string& text) {
  static const std::regex int_re(R"([-+]?[0-9]+)");
  static const std::regex float_re(
      R"([-+]?([0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)([eE][-+]?[0-9]+)?)");
  if (text.empty() || text == "~" || text == "null" || text == "Null" || text == "NULL") {
    return nullptr;
  }
  if (text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "false" || text == "False" || text == "FALSE") return false;
  if (std::regex_match(text, int_re)) {
    std::int64_t value = 0;
    const char* begin = text.data() + (text[0] == '+' ? 1 : 0);
    auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), value);
    if (ec == std::errc() && ptr == text.data() + text.size()) return value;
  }
  if (std::regex_match(text, float_re)) {
    return std::stod(text);
  }
  return text;
}

ConfigNode from_yaml(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Undefined:
    case YAML::NodeType::Null:
      return nullptr;
    case YAML::NodeType::Scalar:
      // Quoted scalars carry the "!" tag and are always strings.
      if (node.Tag() == "!") return node.Scalar();
      return scalar_from_plain(node.Scalar());
    case YAML::NodeType::Sequence: {
      ConfigNode out = ConfigNode::array();
      for (const auto& item : node) out.push_back(from_yaml(item));
      return out;
    }
    case YAML::NodeType::Map: {
      ConfigNode out = ConfigNode::object();
      for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (out.contains(key)) {
          fail(ErrorCode::ParseError, "duplicate key '" + key + "' at line " +
                                          std::to_string(kv.first.Mark().line + 1));
        }
        out[key] = from_yaml(kv.second);
      }
      return out;
    }
  }
  return nullptr;
}

std::string format_double(double value) {
  if (std::isnan(value)) return ".nan";
  if (std::isinf(value)) return value > 0 ? ".inf" : "-.inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  std::string out(buf, ptr);
  if (out.find_first_of(".eE") == std::string::npos) out += ".0";
  return out;
}

void emit(YAML::Emitter& out, const ConfigNode& node) {
  switch (node.type()) {
    case ConfigNode::value_t::null:
      out << YAML::Null;
      break;
    case ConfigNode::value_t::boolean:
      out << (node.get<bool>() ? "true" : "false");
      break;
    case ConfigNode::value_t::number_integer:
      out << node.get<std::int64_t>();
      break;
    case ConfigNode::value_t::number_unsigned:
      out << node.get<std::uint64_t>();
      break;
    case ConfigNode::value_t::number_float:
      out << format_double(node.get<double>());
      break;
    case ConfigNode::value_t::string:
      out << YAML::DoubleQuoted << node.get<std::string>();
      break;
    case ConfigNode::value_t::array:
      out << YAML::BeginSeq;
      for (const auto& item : node) emit(out, item);
      out << YAML::EndSeq;
      break;
    case ConfigNode::value_t::object:
      out << YAML::BeginMap;
      for (const auto& [key, value] : node.items()) {
        out << YAML::Key << YAML::DoubleQuoted << key << YAML::Value;
        emit(out, value);
      }
      out << YAML::EndMap;
      break;
    default:
      fail(ErrorCode::ConfigError, "cannot serialize binary config value");
  }
}

ConfigNode load_resolved(const fs::path& path, std::vector<fs::path>& stack) {
  const fs::path canonical = fs::weakly_canonical(path);
  for (const auto& seen : stack) {
    if (seen == canonical) {
      fail(ErrorCode::ConfigError, "inherit cycle through " + canonical.string());
    }
  }
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IOError, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  ConfigNode tree = parse_config_text(buffer.str(), path.string());
  if (!tree.is_object()) {
    fail(ErrorCode::ParseError, path.string() + ": top level must be a mapping");
  }
  if (!tree.contains("inherit")) return tree;

  ConfigNode parents = tree["inherit"];
  tree.erase("inherit");
  if (parents.is_string()) parents = ConfigNode::array({parents});
  if (!parents.is_array()) {
    fail(ErrorCode::ConfigError, path.string() + ": inherit must be a path or a list of paths");
  }
  stack.push_back(canonical);
  ConfigNode base = ConfigNode::object();
  for (const auto& parent : parents) {
    if (!parent.is_string()) {
      fail(ErrorCode::ConfigError, path.string() + ": inherit entries must be strings");
    }
    const fs::path parent_path = path.parent_path() / parent.get<std::string>();
    base = merge_config(base, load_resolved(parent_path, stack));
  }
  stack.pop_back();
  return merge_config(base, tree);
}

}  // namespace

ConfigNode parse_value(std::string_view text, const std::string& source_name) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    fail(ErrorCode::ParseError, source_name + ":" + std::to_string(e.mark.line + 1) + ":" +
                                    std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  return from_yaml(doc);
}

ConfigNode parse_config_text(std::string_view text, const std::string& source_name) {
  ConfigNode tree = parse_value(text, source_name);
  if (tree.is_null()) return ConfigNode::object();
  return tree;
}

ConfigNode load_config_tree(const fs::path& path) {
  std::vector<fs::path> stack;
  return load_resolved(path, stack);
}

ConfigNode load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  ConfigNode root = load_config_tree(path);
  for (const auto& assignment : overrides) apply_override(root, assignment);
  check_required_sections(root);
  return root;
}

ConfigNode merge_config(const ConfigNode& base, const ConfigNode& override_tree) {
  if (base.is_null() || override_tree.is_null()) return override_tree;
  if (base.is_object() != override_tree.is_object()) {
    fail(ErrorCode::TypeClash, "cannot merge a mapping with a non-mapping value");
  }
  if (!base.is_object()) return override_tree;

  ConfigNode out = base;
  for (const auto& [key, value] : override_tree.items()) {
    if (!out.contains(key)) {
      out[key] = value;
      continue;
    }
    const ConfigNode& current = out[key];
    if (!current.is_null() && !value.is_null() && current.is_object() != value.is_object()) {
      fail(ErrorCode::TypeClash, "key '" + key + "' is a mapping on one side only");
    }
    out[key] = merge_config(current, value);
  }
  return out;
}

void apply_override(ConfigNode& root, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    fail(ErrorCode::BadOverride, "expected key=value, got '" + std::string(assignment) + "'");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));

  ConfigNode* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) fail(ErrorCode::BadOverride, "empty path segment in '" + path + "'");
    if (node->is_object()) {
      if (!node->contains(part)) {
        fail(ErrorCode::BadOverride, "'" + path + "' does not address a config node");
      }
      node = &(*node)[part];
    } else if (node->is_array()) {
      std::size_t index = 0;
      auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), index);
      if (ec != std::errc() || ptr != part.data() + part.size() || index >= node->size()) {
        fail(ErrorCode::BadOverride, "'" + path + "' does not address a config node");
      }
      node = &(*node)[index];
    } else {
      fail(ErrorCode::BadOverride, "'" + path + "' does not address a config node");
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  ConfigNode value;
  try {
    value = parse_value(raw, "override '" + path + "'");
  } catch (const Error&) {
    value = raw;
  }
  *node = std::move(value);
}

std::string to_yaml(const ConfigNode& node) {
  YAML::Emitter out;
  out.SetIndent(2);
  emit(out, node);
  std::string text = out.c_str();
  text += "\n";
  return text;
}

void check_required_sections(const ConfigNode& root) {
  if (!root.is_object()) fail(ErrorCode::ConfigError, "config root must be a mapping");
  for (auto section : kRequiredSections) {
    if (!root.contains(std::string(section))) {
      fail(ErrorCode::ConfigError, "missing required section '" + std::string(section) + "'");
    }
  }
}

void save_config(const ConfigNode& node, const fs::path& path) {
  write_file_atomic(path, to_yaml(node));
}

}  // namespace sseg
