#include "igsgenre/feature_dump.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "igsgenre/error.hpp"

namespace igsgenre::dsp {

namespace {

void put_double(std::ostream& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, end - buf);
}

}  // namespace

Matrix to_matrix(std::span<const FrameFeatures> features) {
  Matrix m(features.size(), kFeatureDim);
  for (std::size_t r = 0; r < features.size(); ++r)
    std::copy(features[r].values.begin(), features[r].values.end(), m.row(r).begin());
  return m;
}

std::string source_id_for(const std::string& clip_path) {
  std::string id = clip_path;
  const auto slash = id.find_last_of("/\\");
  const auto dot = id.find_last_of('.');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash) && dot != 0) id.erase(dot);
  for (char& c : id)
    if (c == '/' || c == '\\' || std::isspace(static_cast<unsigned char>(c))) c = '_';
  return id;
}

void write_feature_dump(std::ostream& out, const FeatureClip& clip) {
  if (clip.source_id.empty() || clip.source_id.find_first_of(" \t\n") != std::string::npos)
    throw FormatError("source id must be non-empty without whitespace: '" + clip.source_id + "'");
  out << "#clip " << clip.source_id << ' ' << clip.frames.rows() << ' ' << clip.frames.cols() << '\n';
  for (std::size_t r = 0; r < clip.frames.rows(); ++r) {
    for (std::size_t j = 0; j < clip.frames.cols(); ++j) {
      if (j) out << '\t';
      put_double(out, clip.frames(r, j));
    }
    out << '\n';
  }
}

void write_feature_dump(std::ostream& out, const std::string& source_id, std::span<const FrameFeatures> features) {
  write_feature_dump(out, FeatureClip{source_id, to_matrix(features)});
}

std::vector<FeatureClip> read_feature_dump(std::istream& in) {
  std::vector<FeatureClip> clips;
  std::string line;
  int line_no = 0;
  std::size_t expected = 0;
  auto fail = [&](const std::string& what) {
    throw FormatError("feature dump line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("#clip ", 0) == 0) {
      if (!clips.empty() && clips.back().frames.rows() != expected) fail("previous clip has fewer frames than declared");
      std::istringstream hdr(line.substr(6));
      FeatureClip clip;
      std::size_t dim = 0;
      if (!(hdr >> clip.source_id >> expected >> dim) || dim == 0) fail("malformed #clip header");
      clip.frames = Matrix(0, dim);
      clip.frames.reserve_rows(expected);
      clips.push_back(std::move(clip));
      continue;
    }
    if (line.front() == '#') continue;
    if (clips.empty()) fail("frame data before any #clip header");
    FeatureClip& clip = clips.back();
    if (clip.frames.rows() >= expected) fail("more frames than declared");
    std::vector<double> values;
    values.reserve(clip.frames.cols());
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
      double v;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) fail("bad number");
      values.push_back(v);
      p = next;
      if (p < end) {
        if (*p != '\t') fail("fields must be tab-separated");
        ++p;
      }
    }
    if (values.size() != clip.frames.cols())
      fail("expected " + std::to_string(clip.frames.cols()) + " values, got " + std::to_string(values.size()));
    clip.frames.append_row(values);
  }
  if (!clips.empty() && clips.back().frames.rows() != expected) fail("last clip has fewer frames than declared");
  return clips;
}

FeatureClip read_feature_dump_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature dump: " + path);
  auto clips = read_feature_dump(in);
  if (clips.size() != 1) throw FormatError(path + ": expected exactly one clip, found " + std::to_string(clips.size()));
  return std::move(clips.front());
}

}  // namespace igsgenre::dsp
