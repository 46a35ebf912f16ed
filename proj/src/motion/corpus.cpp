#include "mstyle/motion/corpus.hpp"

#include "mstyle/errors.hpp"
#include "mstyle/motion/bvh.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace mstyle::motion {

namespace {

void write_labels(const std::filesystem::path& path, const MotionClip& clip) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << "frame,action,left_heel,left_toe,right_heel,right_toe\n";
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    out << i << ',' << gait_name(clip.action_labels[i]);
    for (const bool c : clip.contact_labels[i]) {
      out << ',' << (c ? 1 : 0);
    }
    out << '\n';
  }
}

void read_labels(const std::filesystem::path& path, MotionClip& clip) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::string line;
  std::getline(in, line);
  if (line != "frame,action,left_heel,left_toe,right_heel,right_toe") {
    throw ParseError(1, path.filename().string() + ": unexpected header");
  }
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) {
      cells.push_back(cell);
    }
    const auto gait = cells.size() == 6 ? parse_gait(cells[1]) : std::nullopt;
    if (!gait || cells[0] != std::to_string(clip.action_labels.size())) {
      throw ParseError(number, path.filename().string() + ": malformed label row");
    }
    ContactLabels contacts{};
    for (std::size_t k = 0; k < 4; ++k) {
      if (cells[k + 2] != "0" && cells[k + 2] != "1") {
        throw ParseError(number, path.filename().string() + ": contact flags must be 0 or 1");
      }
      contacts[k] = cells[k + 2] == "1";
    }
    clip.action_labels.push_back(*gait);
    clip.contact_labels.push_back(contacts);
  }
  if (clip.action_labels.size() != clip.frames.size()) {
    throw ParseError(path.filename().string() + ": " + std::to_string(clip.action_labels.size()) +
                     " label rows for " + std::to_string(clip.frames.size()) + " frames");
  }
}

}  // namespace

void save_corpus(const std::filesystem::path& dir, const std::vector<MotionClip>& clips) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"version", 1}, {"clips", nlohmann::json::array()}};
  for (const auto& clip : clips) {
    if (!clip.has_labels()) {
      throw ConfigError("clip '" + clip.name + "' has no labels");
    }
    write_bvh_file(dir / (clip.name + ".bvh"), clip);
    write_labels(dir / (clip.name + ".labels.csv"), clip);
    manifest["clips"].push_back({{"name", clip.name},
                                 {"style", clip.style_label},
                                 {"bvh", clip.name + ".bvh"},
                                 {"labels", clip.name + ".labels.csv"}});
  }
  std::ofstream out(dir / kCorpusManifest);
  if (!out) {
    throw ConfigError("cannot write " + (dir / kCorpusManifest).string());
  }
  out << manifest.dump(2) << '\n';
}

std::vector<MotionClip> load_corpus(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kCorpusManifest;
  std::ifstream in(manifest_path);
  if (!in) {
    throw ConfigError("no corpus manifest at " + manifest_path.string());
  }
  const auto manifest = nlohmann::json::parse(in, nullptr, false);
  if (manifest.is_discarded() || manifest.value("version", 0) != 1 || !manifest.contains("clips")) {
    throw ParseError(manifest_path.string() + ": not a version 1 corpus manifest");
  }
  std::vector<MotionClip> clips;
  for (const auto& entry : manifest["clips"]) {
    try {
      MotionClip clip = read_bvh_file(dir / entry.at("bvh").get<std::string>());
      clip.name = entry.at("name").get<std::string>();
      clip.style_label = entry.at("style").get<std::string>();
      read_labels(dir / entry.at("labels").get<std::string>(), clip);
      clips.push_back(std::move(clip));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(manifest_path.string() + ": " + e.what());
    }
  }
  return clips;
}

}  // namespace mstyle::motion
