#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace chronoalign::svg {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> y;  // x is the index; NaN entries break the line
};

/// Line chart with one <polyline> per contiguous run of each series.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

/// Bar chart of integer-valued samples, one bar per value.
std::string histogram(const std::string& title, const std::string& x_label, const std::vector<int>& samples);

void write(const std::filesystem::path& file, const std::string& document);

}  // namespace chronoalign::svg
