#pragma once

#include "mstyle/motion/skeleton.hpp"

#include <filesystem>
#include <vector>

namespace mstyle::motion {

/// Corpus directory: corpus.json manifest, one BVH file per clip and a
/// <clip>.labels.csv with columns frame,action,left_heel,left_toe,right_heel,right_toe.
inline constexpr const char* kCorpusManifest = "corpus.json";

void save_corpus(const std::filesystem::path& dir, const std::vector<MotionClip>& clips);
/// Throws ParseError naming the file on malformed content.
std::vector<MotionClip> load_corpus(const std::filesystem::path& dir);

}  // namespace mstyle::motion
