#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "egoexo/data/types.hpp"

namespace egoexo::data {

/// Reads a line-delimited manifest (one JSON object per non-blank line).
///
/// Record fields: clip_id, video_id, view ("ego"|"exo"), scenario, start, end,
/// text, refined_text (string or null). Parse failures raise ParseError naming
/// the 1-based line; duplicate clip ids raise ValidationError.
///
/// The manifest view is taken from `expected_view` when given (and every
/// record must match it), otherwise from the first record; an empty file
/// without an expected view yields an ego manifest.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              std::optional<ViewLabel> expected_view = std::nullopt);

/// Parses manifest text; `source` only labels error messages.
DatasetManifest parse_manifest(const std::string& text, const std::string& source = "<memory>",
                               std::optional<ViewLabel> expected_view = std::nullopt);

/// Writes records in input order. Throws IoError when the path is unwritable.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

std::string serialize_manifest(const DatasetManifest& manifest);

}  // namespace egoexo::data
