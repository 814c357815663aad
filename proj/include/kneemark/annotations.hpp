#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kneemark/imaging.hpp"

namespace kneemark {

// CSV with header image,spacing_mm,patient_id,side,kl,cx,cy,x0,y0,...,x15,y15
// and an optional trailing exclude column (0/1). Low-cost rows fill cx,cy and
// leave x0..y15 empty; they load as one-point landmark sets equal to the centre.
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);
std::vector<AnnotationRecord> parse_annotations(const std::string& text);

void write_annotations(const std::vector<AnnotationRecord>& records, const std::filesystem::path& path);
std::string format_annotations(const std::vector<AnnotationRecord>& records);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(const std::string& text);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace kneemark
