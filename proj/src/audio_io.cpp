#include "igsgenre/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "igsgenre/error.hpp"
#include "igsgenre/rng.hpp"

namespace igsgenre::audio_io {

namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF")) throw DecodeError("missing RIFF magic");
  if (!tag_is(bytes, 8, "WAVE")) throw DecodeError("missing WAVE form type");

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (chunk_size > bytes.size() - body) {
      // Some writers leave a streaming placeholder in the data chunk size; tolerate it there only.
      if (!tag_is(bytes, pos, "data")) throw DecodeError("chunk extends past end of file");
    }
    const std::size_t avail = std::min<std::size_t>(chunk_size, bytes.size() - body);
    if (tag_is(bytes, pos, "fmt ")) {
      if (avail < 16) throw DecodeError("fmt chunk too short");
      format_tag = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      block_align = read_u16(bytes, body + 12);
      bits = read_u16(bytes, body + 14);
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw DecodeError("data chunk precedes fmt chunk");
      if (format_tag != 1) throw UnsupportedFormatError("format_tag", std::to_string(format_tag) + " (only PCM = 1)");
      if (channels != 1) throw UnsupportedFormatError("channels", std::to_string(channels) + " (only mono)");
      if (bits != 16) throw UnsupportedFormatError("bits_per_sample", std::to_string(bits) + " (only 16)");
      if (rate < static_cast<std::uint32_t>(kMinSampleRate))
        throw UnsupportedFormatError("sample_rate", std::to_string(rate) + " (minimum 8000)");
      if (block_align != 2) throw DecodeError("block_align " + std::to_string(block_align) + " inconsistent with 16-bit mono");

      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.source_id = std::move(source_id);
      const std::size_t n = avail / 2;
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(bytes, body + 2 * i));
        clip.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return clip;
    }
    pos = body + chunk_size + (chunk_size & 1U);
  }
  throw DecodeError(have_fmt ? "no data chunk" : "no fmt chunk");
}

AudioClip read_wav_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, path);
  } catch (const UnsupportedFormatError& e) {
    throw UnsupportedFormatError(e.field(), path + ": " + e.what());
  } catch (const DecodeError& e) {
    throw DecodeError(path + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(std::span<const std::int16_t> pcm, int sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (std::int16_t s : pcm) put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate) {
  std::vector<std::int16_t> pcm(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double q = std::round(std::clamp(samples[i], -1.0, 1.0) * 32768.0);
    pcm[i] = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
  }
  return encode_wav(pcm, sample_rate);
}

int DatasetManifest::genre_index(const std::string& label) const {
  auto it = std::find(genre_set.begin(), genre_set.end(), label);
  return it == genre_set.end() ? -1 : static_cast<int>(it - genre_set.begin());
}

bool DatasetManifest::fully_assigned() const {
  return std::all_of(entries.begin(), entries.end(), [](const ManifestEntry& e) { return e.fold.has_value(); });
}

DatasetManifest load_manifest(std::istream& in) {
  DatasetManifest m;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = "manifest line " + std::to_string(line_no);
    if (fields.size() < 2 || fields.size() > 3)
      throw FormatError(where + ": expected 2 or 3 tab-separated fields, got " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) throw FormatError(where + ": empty clip path or genre label");

    ManifestEntry e{fields[0], fields[1], std::nullopt};
    if (fields.size() == 3 && !fields[2].empty()) {
      if (fields[2] == "A") e.fold = Fold::A;
      else if (fields[2] == "B") e.fold = Fold::B;
      else throw FormatError(where + ": fold must be A or B, got '" + fields[2] + "'");
    }
    if (!seen.insert(e.clip_path).second) throw DuplicateEntryError(where + ": duplicate clip path '" + e.clip_path + "'");
    if (m.genre_index(e.genre_label) < 0) m.genre_set.push_back(e.genre_label);
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest load_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  return load_manifest(in);
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  for (const auto& e : manifest.entries) {
    out << e.clip_path << '\t' << e.genre_label;
    if (e.fold) out << '\t' << fold_letter(*e.fold);
    out << '\n';
  }
  return out.str();
}

DatasetManifest split_two_fold(const DatasetManifest& manifest, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_genre;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) by_genre[manifest.entries[i].genre_label].push_back(i);

  for (const auto& label : manifest.genre_set) {
    const auto n = by_genre[label].size();
    if (n < 2)
      throw InsufficientDataError("genre '" + label + "' has " + std::to_string(n) + " clip(s); two-fold split needs at least 2");
  }

  DatasetManifest out = manifest;
  for (auto& [label, idx] : by_genre) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return manifest.entries[a].clip_path < manifest.entries[b].clip_path;
    });
    Rng rng(derive_seed(seed, hash_string(label)));
    rng.shuffle(idx);
    for (std::size_t j = 0; j < idx.size(); ++j) out.entries[idx[j]].fold = (j % 2 == 0) ? Fold::A : Fold::B;
  }
  return out;
}

}  // namespace igsgenre::audio_io
