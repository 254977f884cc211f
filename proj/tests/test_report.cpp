#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "meteocast/errors.hpp"
#include "meteocast/report.hpp"
#include "meteocast/timeutil.hpp"

using namespace meteo;

namespace {

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("per-timestep MAE table has one row per lead and full precision") {
  MetricsReport r;
  r.per_timestep = Tensor({4, 3});
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t f = 0; f < 3; ++f) {
      r.per_timestep.at2(k, f) = 0.1 * static_cast<double>(k) + static_cast<double>(f) + 1.0 / 3.0;
    }
  }
  const auto ls = lines(csv_per_timestep_mae(r));
  REQUIRE(ls.size() == 5);
  CHECK(ls[0] == "timestep,mae_temp_c,mae_irrad_wm2,mae_relhum_pct");
  for (std::size_t k = 0; k < 4; ++k) {
    const auto fs = fields(ls[k + 1]);
    REQUIRE(fs.size() == 4);
    CHECK(fs[0] == std::to_string(k + 1));
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(std::stod(fs[f + 1]) == r.per_timestep.at2(k, f));
    }
  }

  r.per_timestep = Tensor({4});
  CHECK_THROWS_AS(csv_per_timestep_mae(r), ShapeError);
}

TEST_CASE("lead series CSV writes empty fields for uncovered hours") {
  LeadSeries s;
  s.leads = {1, 2};
  s.times = {hours_from_civil(2023, 5, 1, 0), hours_from_civil(2023, 5, 1, 1)};
  s.truth = Tensor({2, 3});
  s.predicted = Tensor::full({2, 2, 3}, std::nan(""));
  for (std::size_t f = 0; f < 3; ++f) {
    s.truth.at2(0, f) = static_cast<double>(f) + 0.5;
    s.truth.at2(1, f) = static_cast<double>(f) + 1.5;
    s.predicted.at3(0, 1, f) = 10.0 + static_cast<double>(f);
  }
  const auto ls = lines(csv_lead_series(s));
  REQUIRE(ls.size() == 3);
  const auto header = fields(ls[0]);
  REQUIRE(header.size() == 1 + 3 + 2 * 3);
  CHECK(header[0] == "utc_timestamp");
  CHECK(header[1] == "truth_temp_c");
  CHECK(header[4] == "pred_lead1_temp_c");
  CHECK(header[7] == "pred_lead2_temp_c");

  const auto row0 = fields(ls[1]);
  CHECK(row0[0] == "2023-05-01T00:00:00Z");
  CHECK(std::stod(row0[1]) == 0.5);
  CHECK(row0[4] == "");  // lead-1 prediction missing at the first hour
  CHECK(row0[7] == "");
  const auto row1 = fields(ls[2]);
  CHECK(std::stod(row1[4]) == 10.0);
  CHECK(std::stod(row1[6]) == 12.0);
  CHECK(row1[7] == "");
}

TEST_CASE("attention profile axis runs from -n_past+1 to n_future") {
  AttentionProfile p;
  const std::size_t n_past = 3;
  const std::size_t total = 8;  // n_future = 5
  for (std::size_t i = 0; i < total; ++i) {
    p.mean.push_back(0.1 + static_cast<double>(i));
    p.std.push_back(0.01 * static_cast<double>(i));
  }
  const auto ls = lines(csv_attention_profile(p, n_past));
  REQUIRE(ls.size() == total + 1);
  CHECK(ls[0] == "timestep,attention_mean,attention_std");
  CHECK(fields(ls[1])[0] == "-2");
  CHECK(fields(ls[n_past])[0] == "0");
  CHECK(fields(ls[total])[0] == "5");
  for (std::size_t i = 0; i < total; ++i) {
    CHECK(std::stod(fields(ls[i + 1])[1]) == p.mean[i]);
    CHECK(std::stod(fields(ls[i + 1])[2]) == p.std[i]);
  }
  CHECK_THROWS_AS(csv_attention_profile(p, 0), ConfigError);
  CHECK_THROWS_AS(csv_attention_profile(p, total), ConfigError);
}

TEST_CASE("importance tables name every channel") {
  AttributionSummary sum;
  sum.overall = Tensor({7});
  for (std::size_t c = 0; c < 7; ++c) sum.overall.at(c) = static_cast<double>(c) * 0.25;
  const auto ls = lines(csv_overall_importance(sum));
  REQUIRE(ls.size() == 8);
  CHECK(ls[0] == "channel,importance");
  CHECK(fields(ls[1])[0] == "temp_c");
  CHECK(fields(ls[7])[0] == "solh_cos");
  CHECK(std::stod(fields(ls[7])[1]) == 1.5);

  sum.curves[1] = Tensor({6, 7});
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 7; ++c) sum.curves[1].at2(i, c) = static_cast<double>(i * 7 + c);
  }
  const auto cs = lines(csv_importance_curves(sum, 1, 2));
  REQUIRE(cs.size() == 7);
  CHECK(cs[0] == "timestep,temp_c,irrad_wm2,relhum_pct,month_sin,month_cos,solh_sin,solh_cos");
  CHECK(fields(cs[1])[0] == "-1");
  CHECK(fields(cs[6])[0] == "4");
  CHECK(std::stod(fields(cs[3])[4]) == 17.0);
  CHECK_THROWS_AS(csv_importance_curves(sum, 3, 2), ConfigError);
  CHECK_THROWS_AS(csv_importance_curves(sum, 0, 2), ShapeError);  // curve 0 never sized
}

TEST_CASE("csv builders are byte-deterministic") {
  MetricsReport r;
  r.per_timestep = Tensor({3, 3});
  for (std::size_t i = 0; i < 9; ++i) r.per_timestep.at(i) = std::sqrt(static_cast<double>(i) + 2.0);
  CHECK(csv_per_timestep_mae(r) == csv_per_timestep_mae(r));

  AttentionProfile p;
  p.mean = {0.2, 0.3, 0.5};
  p.std = {0.01, 0.02, 0.03};
  CHECK(csv_attention_profile(p, 1) == csv_attention_profile(p, 1));
}

TEST_CASE("line chart renders a well-formed deterministic SVG") {
  SvgChart chart;
  chart.title = "MAE <per> lead & stuff";
  chart.x_label = "lead";
  chart.y_label = "mae";
  SvgSeries a;
  a.label = "temp";
  a.color = "#d62728";
  for (int i = 0; i < 10; ++i) {
    a.x.push_back(static_cast<double>(i));
    a.y.push_back(1.0 + 0.1 * static_cast<double>(i));
  }
  a.y[4] = std::nan("");  // splits the polyline
  chart.series.push_back(a);

  const std::string svg = render_line_chart(chart);
  CHECK(svg == render_line_chart(chart));
  CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") == 0);
  CHECK(svg.rfind("</svg>\n") == svg.size() - 7);
  CHECK(svg.find("MAE &lt;per&gt; lead &amp; stuff") != std::string::npos);
  CHECK(svg.find("<") != std::string::npos);
  // NaN split produces two polylines for the single series.
  std::size_t polylines = 0;
  for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos;
       pos = svg.find("<polyline", pos + 1)) {
    ++polylines;
  }
  CHECK(polylines == 2);

  SvgChart empty;
  CHECK_THROWS_AS(render_line_chart(empty), ConfigError);
  SvgChart all_nan;
  SvgSeries bad;
  bad.x = {0.0};
  bad.y = {std::nan("")};
  all_nan.series.push_back(bad);
  CHECK_THROWS_AS(render_line_chart(all_nan), ConfigError);
  SvgChart mismatched;
  SvgSeries odd;
  odd.x = {0.0, 1.0};
  odd.y = {0.0};
  mismatched.series.push_back(odd);
  CHECK_THROWS_AS(render_line_chart(mismatched), ShapeError);
}

TEST_CASE("flat series still renders with a padded range") {
  SvgChart chart;
  SvgSeries s;
  for (int i = 0; i < 5; ++i) {
    s.x.push_back(static_cast<double>(i));
    s.y.push_back(2.5);
  }
  chart.series.push_back(s);
  const std::string svg = render_line_chart(chart);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);
  CHECK(svg.find("inf") == std::string::npos);
}

TEST_CASE("bar chart renders one bar per label") {
  const std::string svg =
      render_bar_chart("Importance", {"a", "b", "c"}, {0.5, 1.5, 1.0});
  CHECK(svg == render_bar_chart("Importance", {"a", "b", "c"}, {0.5, 1.5, 1.0}));
  std::size_t bars = 0;
  for (std::size_t pos = svg.find("<rect"); pos != std::string::npos;
       pos = svg.find("<rect", pos + 1)) {
    ++bars;
  }
  CHECK(bars == 4);  // background + 3 bars
  CHECK(svg.find(">a</text>") != std::string::npos);
  CHECK(svg.find(">c</text>") != std::string::npos);

  CHECK_THROWS_AS(render_bar_chart("t", {}, {}), ShapeError);
  CHECK_THROWS_AS(render_bar_chart("t", {"a"}, {0.1, 0.2}), ShapeError);
  CHECK_THROWS_AS(render_bar_chart("t", {"a"}, {std::nan("")}), NumericError);
}
