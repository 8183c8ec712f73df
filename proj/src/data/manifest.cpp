#include "egoexo/data/manifest.hpp"

#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"

namespace egoexo::data {
namespace {

using nlohmann::json;

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

ClipRecord record_from_json(const json& j) {
  auto field = [&](const char* name) -> const json& {
    auto it = j.find(name);
    if (it == j.end()) throw ValidationError(std::string("missing field \"") + name + "\"");
    return *it;
  };
  auto str = [&](const char* name) {
    const auto& v = field(name);
    if (!v.is_string()) throw ValidationError(std::string("field \"") + name + "\" must be a string");
    return v.get<std::string>();
  };
  auto num = [&](const char* name) {
    const auto& v = field(name);
    if (!v.is_number()) throw ValidationError(std::string("field \"") + name + "\" must be a number");
    return v.get<double>();
  };

  ClipRecord r;
  r.clip_id = str("clip_id");
  r.video_id = str("video_id");
  r.view = parse_view(str("view"));
  r.scenario = str("scenario");
  r.start_s = num("start");
  r.end_s = num("end");
  r.raw_text = str("text");
  auto it = j.find("refined_text");
  if (it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError("field \"refined_text\" must be a string or null");
    r.refined_text = it->get<std::string>();
  }
  validate_record(r);
  return r;
}

json record_to_json(const ClipRecord& r) {
  json j;
  j["clip_id"] = r.clip_id;
  j["video_id"] = r.video_id;
  j["view"] = std::string(to_string(r.view));
  j["scenario"] = r.scenario;
  j["start"] = r.start_s;
  j["end"] = r.end_s;
  j["text"] = r.raw_text;
  j["refined_text"] = r.refined_text ? json(*r.refined_text) : json(nullptr);
  return j;
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const std::string& source,
                               std::optional<ViewLabel> expected_view) {
  DatasetManifest manifest;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool view_fixed = expected_view.has_value();
  if (expected_view) manifest.view = *expected_view;

  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    ClipRecord r;
    try {
      json j = json::parse(line);
      if (!j.is_object()) throw ValidationError("record must be a JSON object");
      r = record_from_json(j);
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (!view_fixed) {
      manifest.view = r.view;
      view_fixed = true;
    } else if (r.view != manifest.view) {
      throw ParseError(source, line_no,
                       "view " + std::string(to_string(r.view)) + " in a " +
                           std::string(to_string(manifest.view)) + " manifest");
    }
    if (!seen.insert(r.clip_id).second)
      throw ValidationError(source + ":" + std::to_string(line_no) + ": duplicate clip_id " +
                            r.clip_id);
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path,
                              std::optional<ViewLabel> expected_view) {
  return parse_manifest(io::read_file_text(path), path.string(), expected_view);
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  validate_manifest(manifest);
  std::string out;
  for (const auto& r : manifest.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  io::write_file_text(path, serialize_manifest(manifest));
}

}  // namespace egoexo::data
