#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "igsgenre/dsp.hpp"
#include "igsgenre/matrix.hpp"

namespace igsgenre::dsp {

/// Frames of one clip as a (frames x 17) matrix.
struct FeatureClip {
  std::string source_id;
  Matrix frames;
};

Matrix to_matrix(std::span<const FrameFeatures> features);

/// Clip identifier derived from a manifest path: the extension is dropped
/// and path separators and whitespace become '_'.
std::string source_id_for(const std::string& clip_path);

/// Text dump: a `#clip <source_id> <n_frames> <dim>` header, then one line
/// per frame of tab-separated shortest round-trip decimals.
void write_feature_dump(std::ostream& out, const FeatureClip& clip);
void write_feature_dump(std::ostream& out, const std::string& source_id, std::span<const FrameFeatures> features);

/// Reads every clip in the stream. Throws FormatError citing the line.
std::vector<FeatureClip> read_feature_dump(std::istream& in);
FeatureClip read_feature_dump_file(const std::string& path);

}  // namespace igsgenre::dsp
