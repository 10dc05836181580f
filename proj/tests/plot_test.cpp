#include <gtest/gtest.h>

#include <filesystem>

#include "gazekit/plot.hpp"

using namespace gazekit;
namespace fs = std::filesystem;

TEST(Plot, BarChartWritesPngAndExactCsv) {
  const fs::path d = fs::temp_directory_path() / "gazekit_plot";
  fs::remove_all(d);
  fs::create_directories(d);
  const std::vector<double> values{6.29, 6.15, 1.0 / 3.0};
  plot::bar_chart(d / "folds", {"f0", "f1", "f2"}, values, "error_deg");
  ASSERT_TRUE(fs::exists(d / "folds.png"));
  const RawImage img = png::read(d / "folds.png");
  EXPECT_EQ(img.channels, 3);
  const auto csv = plot::read_csv(d / "folds.csv");
  EXPECT_EQ(csv.values, values);
  EXPECT_EQ(csv.labels, (std::vector<std::string>{"f0", "f1", "f2"}));
}

TEST(Plot, LineChartHandlesSinglePoint) {
  const fs::path d = fs::temp_directory_path() / "gazekit_plot_line";
  fs::create_directories(d);
  plot::line_chart(d / "one", {"1.0"}, {4.2}, "error_deg");
  EXPECT_EQ(plot::read_csv(d / "one.csv").values, std::vector<double>{4.2});
}
