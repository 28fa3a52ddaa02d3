#include "casdet/signal_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "casdet/error.hpp"

namespace casdet {
namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

bool is_cas(LabelKind kind) {
  return kind == LabelKind::kCas || kind == LabelKind::kWheeze ||
         kind == LabelKind::kStridor || kind == LabelKind::kRhonchus;
}

LabelKind parse_label_kind(char c) {
  switch (c) {
    case 'I': case 'E': case 'C': case 'W': case 'S': case 'R': case 'D':
      return static_cast<LabelKind>(c);
    default:
      throw DataError(std::string("unknown label kind '") + c + "'");
  }
}

char to_char(LabelKind kind) { return static_cast<char>(kind); }

Recording read_wav(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data());
  const std::size_t size = bytes.size();
  const std::string where = path.string() + ": ";

  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw DataError(where + "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const std::uint32_t chunk_size = read_u32(data + pos + 4);
    const char* id = reinterpret_cast<const char*>(data + pos);
    const std::size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + 16 > size) throw DataError(where + "truncated fmt chunk");
      std::uint16_t format = read_u16(data + body);
      channels = read_u16(data + body + 2);
      rate = read_u32(data + body + 4);
      bits = read_u16(data + body + 14);
      if (format == 0xFFFE && chunk_size >= 40 && body + 40 <= size) {
        format = read_u16(data + body + 24);  // sub-format GUID prefix
      }
      if (format != 1) {
        throw DataError(where + "audio format " + std::to_string(format) +
                        " unsupported (PCM only)");
      }
      if (channels != 1) {
        throw DataError(where + "channel count " + std::to_string(channels) + " unsupported");
      }
      if (bits != 16) {
        throw DataError(where + "bits per sample " + std::to_string(bits) + " unsupported");
      }
      if (rate == 0) throw DataError(where + "sample rate 0 unsupported");
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw DataError(where + "data chunk before fmt chunk");
      if (body + chunk_size > size) {
        throw DataError(where + "truncated payload: data chunk declares " +
                        std::to_string(chunk_size) + " bytes, " +
                        std::to_string(size - body) + " present");
      }
      if (chunk_size % 2 != 0) throw DataError(where + "data chunk size not a multiple of 2");
      Recording rec;
      rec.id = path.stem().string();
      rec.sample_rate = static_cast<int>(rate);
      rec.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(data + body + 2 * i));
        rec.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return rec;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw DataError(where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void write_wav(const std::filesystem::path& path, const Recording& recording) {
  const auto n = static_cast<std::uint32_t>(recording.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(recording.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(recording.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : recording.samples) {
    const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    const auto v = static_cast<std::int16_t>(std::lround(clamped * 32768.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<LabelEvent> parse_labels(std::string_view text) {
  std::vector<LabelEvent> events;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = "line " + std::to_string(line_no) + ": ";
    const auto fields = split_ws(line);
    if (fields.size() != 3) {
      throw DataError(at + "expected 3 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].size() != 1) throw DataError(at + "label kind must be one letter");
    LabelEvent ev;
    try {
      ev.kind = parse_label_kind(fields[0][0]);
    } catch (const DataError& e) {
      throw DataError(at + e.what());
    }
    if (!parse_double(fields[1], ev.t_start)) throw DataError(at + "non-numeric t_start");
    if (!parse_double(fields[2], ev.t_end)) throw DataError(at + "non-numeric t_end");
    if (ev.t_start < 0.0) throw DataError(at + "t_start < 0");
    if (ev.t_end <= ev.t_start) throw DataError(at + "t_end ≤ t_start");
    events.push_back(ev);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const LabelEvent& a, const LabelEvent& b) { return a.t_start < b.t_start; });
  return events;
}

std::vector<LabelEvent> read_labels(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_labels(text);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_labels(const std::vector<LabelEvent>& events) {
  std::string out;
  char buf[96];
  for (const auto& ev : events) {
    std::snprintf(buf, sizeof buf, "%c %.3f %.3f\n", to_char(ev.kind), ev.t_start, ev.t_end);
    out += buf;
  }
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<LabelEvent>& events) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path.string());
  f << format_labels(events);
}

void validate(const Recording& recording) {
  if (recording.sample_rate <= 0) {
    throw DataError(recording.id + ": sample rate must be positive");
  }
  for (std::size_t i = 0; i < recording.samples.size(); ++i) {
    const double s = recording.samples[i];
    if (!std::isfinite(s) || s < -1.0 || s > 1.0) {
      throw DataError(recording.id + ": sample " + std::to_string(i) + " outside [-1, 1]");
    }
  }
}

void validate(const DatasetEntry& entry) {
  validate(entry.recording);
  // Labels are written with 3 decimals, so allow half a millisecond of
  // rounding past the last sample.
  const double duration = entry.recording.duration_s() + 5e-4;
  for (const auto& ev : entry.labels) {
    if (!(ev.t_start >= 0.0 && ev.t_start < ev.t_end && ev.t_end <= duration)) {
      throw DataError(entry.recording.id + ": label [" + std::to_string(ev.t_start) + ", " +
                      std::to_string(ev.t_end) + ") outside the recording span");
    }
  }
}

Dataset filter_cas_dataset(const Dataset& dataset) {
  Dataset out;
  out.split = dataset.split;
  for (const auto& entry : dataset.entries) {
    if (std::any_of(entry.labels.begin(), entry.labels.end(),
                    [](const LabelEvent& ev) { return is_cas(ev.kind); })) {
      out.entries.push_back(entry);
    }
  }
  return out;
}

std::vector<ManifestLine> read_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto base = path.parent_path();
  std::vector<ManifestLine> lines;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    if (fields.size() != 2) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": expected `<wav-path> <label-path>`");
    }
    std::filesystem::path wav(fields[0]), lab(fields[1]);
    if (wav.is_relative()) wav = base / wav;
    if (lab.is_relative()) lab = base / lab;
    lines.push_back({wav, lab});
  }
  return lines;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestLine>& lines) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path.string());
  for (const auto& l : lines) f << l.wav.generic_string() << ' ' << l.labels.generic_string() << '\n';
}

std::vector<double> resample_linear(const std::vector<double>& samples, int from_rate,
                                    int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw DataError("sample rates must be positive");
  if (samples.empty() || from_rate == to_rate) return samples;
  const auto n_out = static_cast<std::size_t>(
      std::floor(static_cast<double>(samples.size()) * to_rate / from_rate));
  std::vector<double> out(n_out);
  const double step = static_cast<double>(from_rate) / to_rate;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double x = static_cast<double>(i) * step;
    const auto j = static_cast<std::size_t>(x);
    const double frac = x - static_cast<double>(j);
    const double a = samples[std::min(j, samples.size() - 1)];
    const double b = samples[std::min(j + 1, samples.size() - 1)];
    out[i] = a + frac * (b - a);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& options) {
  Dataset ds;
  for (const auto& line : read_manifest(manifest)) {
    DatasetEntry entry;
    entry.recording = read_wav(line.wav);
    if (entry.recording.sample_rate != options.target_rate) {
      if (!options.resample) {
        throw DataError(line.wav.string() + ": sample rate " +
                        std::to_string(entry.recording.sample_rate) + " Hz, expected " +
                        std::to_string(options.target_rate) + " Hz (enable resampling)");
      }
      entry.recording.samples = resample_linear(entry.recording.samples,
                                                entry.recording.sample_rate, options.target_rate);
      entry.recording.sample_rate = options.target_rate;
    }
    entry.labels = read_labels(line.labels);
    validate(entry);
    ds.entries.push_back(std::move(entry));
  }
  return ds;
}

}  // namespace casdet
