#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace casdet {

inline constexpr int kDefaultSampleRate = 4000;

enum class LabelKind : char {
  kInhalation = 'I',
  kExhalation = 'E',
  kCas = 'C',
  kWheeze = 'W',
  kStridor = 'S',
  kRhonchus = 'R',
  kDas = 'D',
};

// C, W, S and R form the continuous-adventitious-sound family.
bool is_cas(LabelKind kind);
LabelKind parse_label_kind(char c);  // throws DataError
char to_char(LabelKind kind);

struct Recording {
  std::string id;
  int sample_rate = kDefaultSampleRate;
  std::vector<double> samples;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct LabelEvent {
  LabelKind kind = LabelKind::kCas;
  double t_start = 0.0;
  double t_end = 0.0;

  double duration() const { return t_end - t_start; }
  friend bool operator==(const LabelEvent&, const LabelEvent&) = default;
};

struct DatasetEntry {
  Recording recording;
  std::vector<LabelEvent> labels;
};

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<DatasetEntry> entries;
  Split split = Split::kTrain;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Mono 16-bit PCM RIFF/WAVE. Samples are rescaled by 1/32768.
Recording read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Recording& recording);

// One `<kind> <t_start> <t_end>` per line; returns events sorted by t_start.
std::vector<LabelEvent> parse_labels(std::string_view text);
std::vector<LabelEvent> read_labels(const std::filesystem::path& path);
// Seconds are written with 3 decimals.
std::string format_labels(const std::vector<LabelEvent>& events);
void write_labels(const std::filesystem::path& path,
                  const std::vector<LabelEvent>& events);

// Checks the recording/label invariants; throws DataError on violation.
void validate(const Recording& recording);
void validate(const DatasetEntry& entry);

// Keeps exactly the entries holding at least one CAS-family label.
Dataset filter_cas_dataset(const Dataset& dataset);

// Manifest: one `<wav-path> <label-path>` pair per line. Relative paths
// resolve against the manifest's directory; `#` starts a comment line.
struct ManifestLine {
  std::filesystem::path wav;
  std::filesystem::path labels;
};
std::vector<ManifestLine> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestLine>& lines);

struct LoadOptions {
  // Linearly resample recordings whose rate differs from target_rate.
  bool resample = false;
  int target_rate = kDefaultSampleRate;
};
Dataset load_dataset(const std::filesystem::path& manifest,
                     const LoadOptions& options = {});

std::vector<double> resample_linear(const std::vector<double>& samples,
                                    int from_rate, int to_rate);

}  // namespace casdet
