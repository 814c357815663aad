#include "kneemark/annotations.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace kneemark {

namespace {

const std::vector<std::string>& base_header() {
  static const std::vector<std::string> header = [] {
    std::vector<std::string> h{"image", "spacing_mm", "patient_id", "side", "kl", "cx", "cy"};
    for (int i = 0; i < kKneeLandmarks; ++i) {
      h.push_back("x" + std::to_string(i));
      h.push_back("y" + std::to_string(i));
    }
    return h;
  }();
  return header;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) throw InvalidArgument("not a number: '" + text + "'");
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(current);
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  fields.push_back(current);
  return fields;
}

std::vector<AnnotationRecord> parse_annotations(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++line_no;
  const auto header = split_csv_line(trim_cr(line));
  const auto& expected = base_header();
  const bool has_exclude = header.size() == expected.size() + 1 && header.back() == "exclude";
  if (!std::equal(expected.begin(), expected.end(), header.begin(), header.begin() + std::min(header.size(), expected.size())) ||
      (header.size() != expected.size() && !has_exclude)) {
    throw ParseError("unexpected header", line_no);
  }

  std::vector<AnnotationRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()),
                       line_no);
    }
    AnnotationRecord r;
    try {
      r.image = f[0];
      r.spacing = parse_double(f[1]);
      r.patient_id = f[2];
      if (f[3] == "L") {
        r.side = Side::kLeft;
      } else if (f[3] == "R") {
        r.side = Side::kRight;
      } else {
        throw InvalidArgument("side must be L or R, got '" + f[3] + "'");
      }
      r.kl = int(parse_double(f[4]));
      if (double(r.kl) != parse_double(f[4])) throw InvalidArgument("kl must be an integer");
      if (f[5].empty() != f[6].empty()) throw InvalidArgument("cx and cy must both be present or both empty");
      if (!f[5].empty()) r.center = Eigen::Vector2d(parse_double(f[5]), parse_double(f[6]));
      std::vector<Eigen::Vector2d> points;
      bool gap = false;
      for (int i = 0; i < kKneeLandmarks; ++i) {
        const std::string& xs = f[size_t(7 + 2 * i)];
        const std::string& ys = f[size_t(8 + 2 * i)];
        if (xs.empty() != ys.empty()) throw InvalidArgument("x" + std::to_string(i) + "/y" + std::to_string(i) + " half empty");
        if (xs.empty()) {
          gap = true;
          continue;
        }
        if (gap) throw InvalidArgument("landmark " + std::to_string(i) + " follows an empty landmark");
        points.emplace_back(parse_double(xs), parse_double(ys));
      }
      if (has_exclude) {
        if (f.back() != "0" && f.back() != "1" && !f.back().empty()) throw InvalidArgument("exclude must be 0 or 1");
        r.exclude = f.back() == "1";
      }
      if (points.empty()) {
        if (!r.center) throw InvalidArgument("row has neither landmarks nor a centre");
        points.push_back(*r.center);
      } else if (points.size() != size_t(kKneeLandmarks)) {
        throw SchemaError("line " + std::to_string(line_no) + ": " + std::to_string(points.size()) +
                          " landmarks (expected 1 or 16)");
      }
      r.landmarks.frame = Frame::kPixel;
      r.landmarks.points.resize(Eigen::Index(points.size()), 2);
      for (size_t i = 0; i < points.size(); ++i) r.landmarks.points.row(Eigen::Index(i)) = points[i].transpose();
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line_no);
    }
    try {
      r.validate();
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open annotations " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_annotations(buf.str());
}

std::string format_annotations(const std::vector<AnnotationRecord>& records) {
  bool any_excluded = false;
  for (const auto& r : records) any_excluded = any_excluded || r.exclude;
  std::ostringstream out;
  const auto& header = base_header();
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  if (any_excluded) out << ",exclude";
  out << '\n';
  for (const auto& r : records) {
    r.validate();
    const bool low_cost = r.landmarks.size() == 1;
    if (low_cost && r.center && *r.center != Eigen::Vector2d(r.landmarks.points.row(0).transpose())) {
      throw SchemaError("record '" + r.image + "': single-landmark record must equal its centre");
    }
    out << r.image << ',' << format_double(r.spacing) << ',' << r.patient_id << ','
        << (r.side == Side::kLeft ? "L" : "R") << ',' << r.kl << ',';
    std::optional<Eigen::Vector2d> center = r.center;
    if (low_cost) center = r.landmarks.points.row(0).transpose();
    if (center) {
      out << format_double(center->x()) << ',' << format_double(center->y());
    } else {
      out << ',';
    }
    for (int i = 0; i < kKneeLandmarks; ++i) {
      if (low_cost) {
        out << ",,";
      } else {
        out << ',' << format_double(r.landmarks.points(i, 0)) << ',' << format_double(r.landmarks.points(i, 1));
      }
    }
    if (any_excluded) out << ',' << (r.exclude ? 1 : 0);
    out << '\n';
  }
  return out.str();
}

void write_annotations(const std::vector<AnnotationRecord>& records, const std::filesystem::path& path) {
  const std::string text = format_annotations(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write annotations " + path.string());
  out << text;
}

}  // namespace kneemark
