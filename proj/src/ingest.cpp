#include "ssmnet/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"

namespace ssmnet {
namespace {

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n\v\f";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::string_view next_field(std::string_view& s) {
  const char* blanks = " \t";
  auto b = s.find_first_not_of(blanks);
  if (b == std::string_view::npos) {
    s = {};
    return {};
  }
  s.remove_prefix(b);
  auto e = s.find_first_of(blanks);
  auto field = s.substr(0, e);
  s = e == std::string_view::npos ? std::string_view{} : s.substr(e);
  return field;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      if (pos < text.size()) lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

std::string text_of(const std::filesystem::path& path) {
  auto bytes = binio::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_wav(const std::filesystem::path& path, int format, int channels, int sample_rate, int bits,
               const binio::Bytes& payload) {
  binio::Writer w;
  const auto block_align = static_cast<std::uint32_t>(channels * bits / 8);
  w.magic("RIFF");
  w.u32(static_cast<std::uint32_t>(36 + payload.size()));
  w.magic("WAVE");
  w.magic("fmt ");
  w.u32(16);
  w.u32(static_cast<std::uint32_t>(format) | (static_cast<std::uint32_t>(channels) << 16));
  w.u32(static_cast<std::uint32_t>(sample_rate));
  w.u32(static_cast<std::uint32_t>(sample_rate) * block_align);
  w.u32(block_align | (static_cast<std::uint32_t>(bits) << 16));
  w.magic("data");
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  binio::write_file_atomic(path, w.bytes());
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  const std::string ctx = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::Format, ctx + ": not a RIFF/WAVE file");
  }

  int format = -1, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false, have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) fail(ErrorKind::Format, ctx + ": truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      sample_rate = le32(f + 4);
      bits = le16(f + 14);
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: sub-format tag leads the GUID
        if (size < 40 || avail < 40) fail(ErrorKind::Format, ctx + ": truncated extensible fmt chunk");
        format = le16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, avail);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt || !have_data) fail(ErrorKind::Format, ctx + ": missing fmt or data chunk");
  if (channels <= 0 || sample_rate == 0) fail(ErrorKind::Format, ctx + ": invalid channel count or rate");
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    fail(ErrorKind::Unsupported,
         ctx + ": unsupported codec (format " + std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) fail(ErrorKind::EmptyInput, ctx + ": no audio samples");

  AudioBuffer out;
  out.sample_rate = static_cast<int>(sample_rate);
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* p = data + i * frame_bytes;
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      double v;
      if (pcm16) {
        v = static_cast<std::int16_t>(le16(p + 2 * c)) / 32768.0;
      } else {
        v = std::bit_cast<float>(le32(p + 4 * c));
        if (!std::isfinite(v)) fail(ErrorKind::Format, ctx + ": non-finite float sample");
        v = std::clamp(v, -1.0, 1.0);
      }
      acc += v;
    }
    out.samples[i] = static_cast<float>(acc / channels);
  }
  return out;
}

void write_wav_pcm16(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate,
                     int channels) {
  binio::Bytes payload;
  payload.reserve(samples.size() * 2 * channels);
  for (float s : samples) {
    const long v = std::lround(std::clamp(double(s), -1.0, 1.0) * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(v, -32768L, 32767L));
    for (int c = 0; c < channels; ++c) {
      payload.push_back(static_cast<std::uint8_t>(q & 0xFF));
      payload.push_back(static_cast<std::uint8_t>((q >> 8) & 0xFF));
    }
  }
  write_wav(path, 1, channels, sample_rate, 16, payload);
}

void write_wav_float(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate) {
  binio::Writer w;
  w.f32s(samples);
  write_wav(path, 3, 1, sample_rate, 32, w.bytes());
}

void validate_beats(const BeatGrid& beats) {
  const auto& t = beats.beat_times;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || t[i] < 0.0) {
      fail(ErrorKind::Validation, "beat " + std::to_string(i + 1) + " is negative or non-finite");
    }
    if (i > 0 && !(t[i] > t[i - 1])) {
      fail(ErrorKind::Validation, "beat times not strictly increasing at beat " + std::to_string(i + 1));
    }
  }
  if (t.size() < kMinBeats) {
    fail(ErrorKind::TooShort, "need at least " + std::to_string(kMinBeats) + " beats, got " + std::to_string(t.size()));
  }
}

BeatGrid parse_beats(const std::string& text) {
  BeatGrid grid;
  grid.source = BeatSource::File;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    double v;
    if (!parse_double(line, v)) {
      fail(ErrorKind::Parse, "beats line " + std::to_string(i + 1) + ": cannot parse '" + std::string(line) + "'");
    }
    if (v < 0.0) fail(ErrorKind::Validation, "beats line " + std::to_string(i + 1) + ": negative time");
    if (!grid.beat_times.empty() && !(v > grid.beat_times.back())) {
      fail(ErrorKind::Validation, "beats line " + std::to_string(i + 1) + ": time not strictly increasing");
    }
    grid.beat_times.push_back(v);
  }
  validate_beats(grid);
  return grid;
}

BeatGrid read_beats(const std::filesystem::path& path) { return parse_beats(text_of(path)); }

void write_beats(const std::filesystem::path& path, const BeatGrid& beats) {
  std::string out;
  for (double t : beats.beat_times) {
    out += binio::format_double(t);
    out += '\n';
  }
  binio::write_file_atomic(path, out);
}

BeatGrid uniform_beats(double duration, double period) {
  if (!(period > 0.0) || !std::isfinite(period)) fail(ErrorKind::Argument, "beat period must be positive");
  if (!std::isfinite(duration)) fail(ErrorKind::Argument, "duration must be finite");
  BeatGrid grid;
  grid.source = BeatSource::UniformFallback;
  for (long k = 1;; ++k) {
    const double t = static_cast<double>(k) * period;
    if (!(t < duration)) break;
    grid.beat_times.push_back(t);
  }
  if (grid.beat_times.size() < kMinBeats) {
    fail(ErrorKind::TooShort, "duration " + binio::format_double(duration) + " s holds only " +
                                  std::to_string(grid.beat_times.size()) + " beats at period " +
                                  binio::format_double(period) + " s");
  }
  return grid;
}

std::string normalize_label(const std::string& label) {
  std::string out(trim(label));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

SegmentAnnotation parse_annotation(const std::string& text) {
  SegmentAnnotation ann;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const std::string where = "annotation line " + std::to_string(i + 1);

    // start and end never contain blanks; the label is the trimmed remainder
    std::string_view rest = line;
    const std::string_view f0 = next_field(rest);
    const std::string_view f1 = next_field(rest);
    if (f1.empty() || trim(rest).empty()) fail(ErrorKind::Parse, where + ": expected start<TAB>end<TAB>label");

    Segment seg;
    if (!parse_double(f0, seg.start)) fail(ErrorKind::Parse, where + ": cannot parse start time");
    if (!parse_double(f1, seg.end)) fail(ErrorKind::Parse, where + ": cannot parse end time");
    seg.label = normalize_label(std::string(rest));
    if (seg.label.empty()) fail(ErrorKind::Validation, where + ": empty label");
    if (!(seg.start < seg.end)) fail(ErrorKind::Validation, where + ": start must be before end");
    ann.segments.push_back(std::move(seg));
  }
  std::stable_sort(ann.segments.begin(), ann.segments.end(),
                   [](const Segment& a, const Segment& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < ann.segments.size(); ++i) {
    if (ann.segments[i].start < ann.segments[i - 1].end) {
      fail(ErrorKind::Validation, "annotation segments overlap: [" + binio::format_double(ann.segments[i - 1].start) +
                                      ", " + binio::format_double(ann.segments[i - 1].end) + ") and [" +
                                      binio::format_double(ann.segments[i].start) + ", " +
                                      binio::format_double(ann.segments[i].end) + ")");
    }
  }
  return ann;
}

SegmentAnnotation read_annotation(const std::filesystem::path& path) { return parse_annotation(text_of(path)); }

void write_annotation(const std::filesystem::path& path, const SegmentAnnotation& ann) {
  std::string out;
  for (const auto& s : ann.segments) {
    out += binio::format_double(s.start) + '\t' + binio::format_double(s.end) + '\t' + s.label + '\n';
  }
  binio::write_file_atomic(path, out);
}

std::vector<std::uint8_t> encode_feature_matrix(const Matrix<float>& m) {
  binio::Writer w;
  w.magic("SSMF");
  w.u32(kSsmfVersion);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.f32s(m.storage());
  return w.take();
}

Matrix<float> decode_feature_matrix(std::span<const std::uint8_t> bytes, const std::string& context) {
  binio::Reader r(bytes, ErrorKind::Format, context);
  if (!r.magic("SSMF")) fail(ErrorKind::Format, context + ": bad magic (expected SSMF)");
  const auto version = r.u32();
  if (version != kSsmfVersion) fail(ErrorKind::Format, context + ": unsupported SSMF version " + std::to_string(version));
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  const std::size_t need = rows * cols * 4;
  if (r.remaining() != need) {
    fail(ErrorKind::Length, context + ": header declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " values but payload holds " + std::to_string(r.remaining()) + " bytes");
  }
  Matrix<float> m(rows, cols);
  r.f32s(m.storage());
  for (float v : m.storage()) {
    if (!std::isfinite(v)) fail(ErrorKind::Validation, context + ": non-finite value");
  }
  return m;
}

Matrix<float> read_feature_matrix(const std::filesystem::path& path) {
  return decode_feature_matrix(binio::read_file(path), path.string());
}

void write_feature_matrix(const std::filesystem::path& path, const Matrix<float>& m) {
  binio::write_file_atomic(path, encode_feature_matrix(m));
}

}  // namespace ssmnet
