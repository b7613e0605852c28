#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace igsgenre::audio_io {

/// Mono audio with samples normalized to [-1, 1].
struct AudioClip {
  int sample_rate = 0;
  std::vector<double> samples;
  std::string source_id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

inline constexpr int kMinSampleRate = 8000;

/// Decodes a RIFF/WAVE container holding 16-bit mono PCM.
/// Throws DecodeError on a malformed container and UnsupportedFormatError
/// naming the field when the encoding is anything else.
AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id = {});

/// Reads and decodes a WAV file; the source id defaults to the path.
AudioClip read_wav_file(const std::string& path);

/// Encodes 16-bit mono PCM. Samples are clamped to [-1, 1] and quantized as
/// round(x * 32768), saturating at 32767.
std::vector<std::uint8_t> encode_wav(std::span<const std::int16_t> pcm, int sample_rate);
std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate);

enum class Fold { A, B };

inline char fold_letter(Fold f) { return f == Fold::A ? 'A' : 'B'; }
inline Fold other_fold(Fold f) { return f == Fold::A ? Fold::B : Fold::A; }

struct ManifestEntry {
  std::string clip_path;
  std::string genre_label;
  std::optional<Fold> fold;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  /// Distinct labels in first-appearance order.
  std::vector<std::string> genre_set;

  /// Index of a label in genre_set, or -1.
  int genre_index(const std::string& label) const;
  bool fully_assigned() const;
};

/// Parses `clip_path<TAB>genre[<TAB>fold]` records. Blank lines and lines
/// starting with '#' are skipped. Errors cite the 1-based line number.
DatasetManifest load_manifest(std::istream& in);
DatasetManifest load_manifest_file(const std::string& path);

/// Inverse of load_manifest (fold column written only when assigned).
std::string format_manifest(const DatasetManifest& manifest);

/// Assigns folds: per genre, entries are sorted by clip_path, shuffled with a
/// generator seeded from `seed` and the genre label, then alternated A, B, A...
/// Entry order of the result matches the input. Throws InsufficientDataError
/// naming the first genre with fewer than two entries.
DatasetManifest split_two_fold(const DatasetManifest& manifest, std::uint64_t seed);

}  // namespace igsgenre::audio_io
