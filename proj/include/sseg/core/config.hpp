#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sseg {

/// A config tree: nested mappings, lists and scalars (string, integer, float, bool, null).
/// Key order is preserved so that a loaded file serializes back in the order it was written.
using ConfigNode = nlohmann::ordered_json;

/// Top-level sections every runnable config must carry.
inline constexpr std::string_view kRequiredSections[] = {"dataset",   "model",     "loss",
                                                         "optimizer", "scheduler", "runtime"};

/// Config files are YAML. Plain scalars are typed by their spelling: `~`/`null`/empty is null,
/// `true`/`false` are booleans, `[-+]?digits` is an integer, anything parsing as a decimal or
/// exponent float is a float, everything else (and every quoted scalar) is a string.
///
/// A top-level `inherit: <path>` (or a list of paths) names base files, resolved relative to the
/// including file and merged underneath it before any override is applied.
ConfigNode parse_config_text(std::string_view text, const std::string& source_name = "<string>");

/// Loads `path`, resolves `inherit`, applies `overrides` in order and checks the required sections.
/// Throws ParseError (with line/column), BadOverride, TypeClash or ConfigError.
ConfigNode load_config(const std::filesystem::path& path,
                       const std::vector<std::string>& overrides = {});

/// Same as load_config but without the required-section check (used for partial base files).
ConfigNode load_config_tree(const std::filesystem::path& path);

/// Recursive merge. Mappings merge key by key, anything else in `override_tree` replaces the base
/// value wholesale. A key holding a mapping on one side and a non-mapping on the other is a
/// TypeClash. A null on either side never clashes: the override value wins (so `key: null`
/// in an override disables an inherited section).
ConfigNode merge_config(const ConfigNode& base, const ConfigNode& override_tree);

/// Applies one `dotted.path=value` override. The path must address an existing node; list
/// elements are addressed by integer index. The value is parsed as a YAML flow scalar/sequence.
void apply_override(ConfigNode& root, std::string_view assignment);

/// Emits YAML that parse_config_text reads back to an equal tree.
std::string to_yaml(const ConfigNode& node);

/// Throws ConfigError unless every required top-level section is present.
void check_required_sections(const ConfigNode& root);

/// Writes `to_yaml(node)` atomically (write-then-rename).
void save_config(const ConfigNode& node, const std::filesystem::path& path);

}  // namespace sseg
