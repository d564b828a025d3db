#include "raretab/report.hpp"

#include "raretab/common.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace raretab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kMetrics = {"accuracy",       "precision",   "recall", "f1", "auc",
                                           "avg_confidence", "avg_entropy", "brier",  "ece"};

const std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                             "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

double as_number(const json& v) {
  return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> regime_order(const json& report) {
  std::vector<std::string> out;
  for (const auto& r : report.at("results")) {
    const auto label = r.at("regime").get<std::string>();
    if (std::find(out.begin(), out.end(), label) == out.end()) out.push_back(label);
  }
  return out;
}

std::vector<const json*> results_for(const json& report, const std::string& regime) {
  std::vector<const json*> out;
  for (const auto& r : report.at("results")) {
    if (r.at("regime").get<std::string>() == regime) out.push_back(&r);
  }
  return out;
}

std::string mean_pm_std(const json& cv, const std::string& metric) {
  const double m = as_number(cv.at("mean").at(metric));
  const double s = as_number(cv.at("std").at(metric));
  if (!std::isfinite(m)) return "NA";
  return format_fixed(m) + " ± " + format_fixed(s);
}

// ---------------------------------------------------------------------------
// SVG

std::string f2(double v) { return format_fixed(v, 2); }

class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  void rect(double x, double y, double w, double h, std::string_view fill, std::string_view extra = "") {
    body_ << "<rect x=\"" << f2(x) << "\" y=\"" << f2(y) << "\" width=\"" << f2(w) << "\" height=\"" << f2(h)
          << "\" fill=\"" << fill << "\"" << (extra.empty() ? "" : " ") << extra << "/>\n";
  }
  void line(double x1, double y1, double x2, double y2, std::string_view stroke = "#333") {
    body_ << "<line x1=\"" << f2(x1) << "\" y1=\"" << f2(y1) << "\" x2=\"" << f2(x2) << "\" y2=\"" << f2(y2)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"1\"/>\n";
  }
  void text(double x, double y, std::string_view s, std::string_view anchor = "start", int size = 11) {
    body_ << "<text x=\"" << f2(x) << "\" y=\"" << f2(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
          << "\">" << xml_escape(s) << "</text>\n";
  }
  void poly(std::string_view tag, const std::vector<std::pair<double, double>>& pts, std::string_view stroke,
            std::string_view fill) {
    body_ << "<" << tag << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ << ' ';
      body_ << f2(pts[i].first) << ',' << f2(pts[i].second);
    }
    body_ << "\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" fill=\"" << fill << "\"/>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f2(width_) << "\" height=\"" << f2(height_)
        << "\" viewBox=\"0 0 " << f2(width_) << ' ' << f2(height_) << "\" font-family=\"sans-serif\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double width_;
  double height_;
  std::ostringstream body_;
};

constexpr std::size_t kHistBins = 20;
constexpr double kPanelW = 240.0;
constexpr double kPanelH = 190.0;

// One panel per model; bars stacked negatives (grey) under positives (red) when labels are known.
std::string histogram_figure(const std::string& title, const std::vector<std::string>& names,
                             const std::vector<std::vector<double>>& values, const std::vector<int>* labels) {
  const double width = 20.0 + kPanelW * static_cast<double>(std::max<std::size_t>(names.size(), 1));
  Svg svg(width, kPanelH + 50.0);
  svg.text(10, 18, title, "start", 13);
  for (std::size_t m = 0; m < names.size(); ++m) {
    const auto& p = values[m];
    const bool split = labels && labels->size() == p.size();
    std::vector<std::size_t> neg(kHistBins, 0), pos(kHistBins, 0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(p[i])) continue;
      const auto b = std::min(kHistBins - 1, static_cast<std::size_t>(std::clamp(p[i], 0.0, 1.0) * kHistBins));
      (split && (*labels)[i] == 1 ? pos : neg)[b]++;
    }
    std::size_t peak = 1;
    for (std::size_t b = 0; b < kHistBins; ++b) peak = std::max(peak, neg[b] + pos[b]);
    const double x0 = 20.0 + kPanelW * static_cast<double>(m) + 20.0;
    const double y0 = 40.0 + kPanelH - 30.0;
    const double pw = kPanelW - 40.0;
    const double ph = kPanelH - 50.0;
    svg.text(x0 + pw / 2, 36, names[m], "middle");
    const double bw = pw / kHistBins;
    for (std::size_t b = 0; b < kHistBins; ++b) {
      const double hn = ph * static_cast<double>(neg[b]) / static_cast<double>(peak);
      const double hp = ph * static_cast<double>(pos[b]) / static_cast<double>(peak);
      const double x = x0 + bw * static_cast<double>(b);
      if (neg[b]) svg.rect(x, y0 - hn, bw, hn, "#9e9e9e", "stroke=\"white\" stroke-width=\"0.5\"");
      if (pos[b]) svg.rect(x, y0 - hn - hp, bw, hp, "#d62728", "stroke=\"white\" stroke-width=\"0.5\"");
    }
    svg.line(x0, y0, x0 + pw, y0);
    svg.line(x0, y0, x0, y0 - ph);
    svg.text(x0, y0 + 14, "0", "middle", 10);
    svg.text(x0 + pw / 2, y0 + 14, "0.5", "middle", 10);
    svg.text(x0 + pw, y0 + 14, "1", "middle", 10);
    svg.text(x0 - 3, y0 - ph + 4, std::to_string(peak), "end", 10);
  }
  return svg.str();
}

std::string rc_figure(const std::string& regime, const std::vector<const json*>& results) {
  const double left = 60, top = 40, pw = 360, ph = 260;
  double risk_max = 0.05;
  for (const auto* r : results) {
    for (const auto& v : r->at("rc_curve").at("risk")) risk_max = std::max(risk_max, as_number(v));
  }
  risk_max = std::ceil(risk_max / 0.05) * 0.05;
  Svg svg(left + pw + 200, top + ph + 50);
  svg.text(10, 20, "Risk-coverage on the test set, " + regime, "start", 13);
  svg.line(left, top + ph, left + pw, top + ph);
  svg.line(left, top, left, top + ph);
  for (int t = 0; t <= 4; ++t) {
    const double fx = t / 4.0;
    svg.text(left + pw * fx, top + ph + 15, f2(fx), "middle", 10);
    svg.text(left - 5, top + ph - ph * fx + 4, f2(risk_max * fx), "end", 10);
  }
  svg.text(left + pw / 2, top + ph + 35, "coverage", "middle");
  svg.text(15, top + ph / 2, "risk", "start");
  for (std::size_t m = 0; m < results.size(); ++m) {
    const auto& rc = results[m]->at("rc_curve");
    const auto& cov = rc.at("coverage");
    const auto& risk = rc.at("risk");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < cov.size(); ++i) {
      pts.emplace_back(left + pw * as_number(cov[i]), top + ph - ph * as_number(risk[i]) / risk_max);
    }
    const char* color = kPalette[m % kPalette.size()];
    svg.poly("polyline", pts, color, "none");
    const double ly = top + 10 + 18.0 * static_cast<double>(m);
    svg.line(left + pw + 20, ly - 4, left + pw + 40, ly - 4, color);
    svg.text(left + pw + 45, ly,
             results[m]->at("model").get<std::string>() + " (AUC-RC " + format_fixed(rc.at("auc_rc"), 3) + ")");
  }
  return svg.str();
}

std::string radar_figure(const std::string& regime, const std::vector<const json*>& results) {
  const double cx = 230, cy = 230, radius = 160;
  Svg svg(620, 470);
  svg.text(10, 20, "Test metrics, " + regime, "start", 13);
  const auto n = static_cast<double>(kMetrics.size());
  const auto at = [&](std::size_t k, double v) {
    const double angle = -M_PI / 2 + 2 * M_PI * static_cast<double>(k) / n;
    return std::pair{cx + radius * v * std::cos(angle), cy + radius * v * std::sin(angle)};
  };
  for (int ring = 1; ring <= 4; ++ring) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < kMetrics.size(); ++k) pts.push_back(at(k, ring / 4.0));
    svg.poly("polygon", pts, "#cccccc", "none");
  }
  for (std::size_t k = 0; k < kMetrics.size(); ++k) {
    const auto [x, y] = at(k, 1.0);
    svg.line(cx, cy, x, y, "#cccccc");
    const auto [lx, ly] = at(k, 1.12);
    svg.text(lx, ly + 4, kMetrics[k], "middle", 10);
  }
  for (std::size_t m = 0; m < results.size(); ++m) {
    const auto& test = results[m]->at("test");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < kMetrics.size(); ++k) {
      const double v = as_number(test.at(kMetrics[k]));
      pts.push_back(at(k, std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0));
    }
    const char* color = kPalette[m % kPalette.size()];
    svg.poly("polygon", pts, color, "none");
    const double ly = 60 + 18.0 * static_cast<double>(m);
    svg.line(470, ly - 4, 490, ly - 4, color);
    svg.text(495, ly, results[m]->at("model").get<std::string>());
  }
  return svg.str();
}

}  // namespace

std::string format_fixed(double v, int decimals) {
  if (!std::isfinite(v)) return "NA";
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, decimals);
  std::string s(buf.data(), res.ptr);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string format_fixed(const json& v, int decimals) { return format_fixed(as_number(v), decimals); }

std::string file_stem(std::string_view label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.') {
      out += c;
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::string CsvTable::render() const {
  std::string out;
  const auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += csv_field(row[i]);
    }
    out += '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return out;
}

std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::vector<CsvTable> report_tables(const json& report) {
  std::vector<CsvTable> out;
  const auto& results = report.at("results");

  CsvTable test{"test_metrics.csv", {"model", "regime", "calibrated", "train_rows"}, {}};
  for (const auto& m : kMetrics) test.header.push_back(m);
  test.header.push_back("auc_rc");
  CsvTable confusion{"confusion.csv", {"model", "regime", "tp", "fp", "tn", "fn"}, {}};
  CsvTable edge{"edge_cohort.csv", {"model", "regime", "n", "q0", "q50", "q99", "mean", "std"}, {}};
  CsvTable cv{"cv_metrics.csv", {"model", "regime", "folds"}, {}};
  for (const auto& m : kMetrics) cv.header.push_back(m);
  CsvTable importance{"importance.csv", {"regime", "model", "feature", "mean", "std"}, {}};

  for (const auto& r : results) {
    const auto model = r.at("model").get<std::string>();
    const auto regime = r.at("regime").get<std::string>();
    std::vector<std::string> row = {model, regime, r.at("calibrated").get<bool>() ? "true" : "false",
                                    std::to_string(r.at("train_rows").get<std::size_t>())};
    for (const auto& m : kMetrics) row.push_back(format_fixed(r.at("test").at(m)));
    row.push_back(format_fixed(r.at("rc_curve").at("auc_rc")));
    test.rows.push_back(std::move(row));

    const auto& c = r.at("confusion");
    confusion.rows.push_back({model, regime, std::to_string(c.at("tp").get<std::size_t>()),
                              std::to_string(c.at("fp").get<std::size_t>()),
                              std::to_string(c.at("tn").get<std::size_t>()),
                              std::to_string(c.at("fn").get<std::size_t>())});

    if (!r.at("edge_cohort").is_null()) {
      const auto& e = r.at("edge_cohort");
      const auto& s = e.at("summary");
      edge.rows.push_back({model, regime, std::to_string(e.at("n").get<std::size_t>()), format_fixed(s.at("q0")),
                           format_fixed(s.at("q50")), format_fixed(s.at("q99")), format_fixed(s.at("mean")),
                           format_fixed(s.at("std"))});
    }
    if (!r.at("cv").is_null()) {
      const auto& v = r.at("cv");
      std::vector<std::string> cv_row = {model, regime, std::to_string(v.at("folds").size())};
      for (const auto& m : kMetrics) cv_row.push_back(mean_pm_std(v, m));
      cv.rows.push_back(std::move(cv_row));
    }
    if (!r.at("importance").is_null()) {
      for (const auto& f : r.at("importance").at("features")) {
        importance.rows.push_back({regime, model, f.at("name").get<std::string>(), format_fixed(f.at("mean")),
                                   format_fixed(f.at("std"))});
      }
    }
  }
  out.push_back(std::move(test));
  out.push_back(std::move(confusion));
  if (!cv.rows.empty()) out.push_back(std::move(cv));
  if (!edge.rows.empty()) out.push_back(std::move(edge));
  if (!importance.rows.empty()) out.push_back(std::move(importance));

  const auto& ranks = report.at("feature_ranks");
  if (!ranks.empty()) {
    CsvTable table{"feature_ranks.csv", {"regime", "feature", "mean_rank"}, {}};
    for (const auto& m : ranks.front().at("models")) table.header.push_back("rank_" + m.get<std::string>());
    for (const auto& t : ranks) {
      const auto& entries = t.at("entries");
      std::vector<std::size_t> order(entries.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return entries[a].at("mean_rank").get<double>() < entries[b].at("mean_rank").get<double>();
      });
      for (std::size_t i : order) {
        const auto& e = entries[i];
        std::vector<std::string> row = {t.at("regime").get<std::string>(), e.at("name").get<std::string>(),
                                        format_fixed(e.at("mean_rank"))};
        for (const auto& v : e.at("per_model")) row.push_back(format_fixed(v));
        table.rows.push_back(std::move(row));
      }
    }
    out.push_back(std::move(table));
  }

  const auto& tuning = report.at("tuning");
  if (!tuning.empty()) {
    CsvTable table{"tuning.csv", {"model", "budget", "best_score", "best"}, {}};
    for (const auto& [name, s] : tuning.items()) {
      table.rows.push_back({name, s.at("budget").dump(), format_fixed(s.at("best_score")),
                            s.at("best").dump()});
    }
    out.push_back(std::move(table));
  }
  return out;
}

std::vector<SvgFigure> report_figures(const json& report) {
  std::vector<SvgFigure> out;
  std::vector<int> labels;
  const auto& data = report.at("data");
  if (data.contains("test_labels")) labels = data.at("test_labels").get<std::vector<int>>();

  for (const auto& regime : regime_order(report)) {
    const auto results = results_for(report, regime);
    const std::string stem = file_stem(regime);
    std::vector<std::string> names;
    std::vector<std::vector<double>> test_p, edge_p;
    bool has_edge = true;
    for (const auto* r : results) {
      names.push_back(r->at("model").get<std::string>());
      test_p.push_back(r->at("test_probabilities").get<std::vector<double>>());
      if (r->at("edge_cohort").is_null()) {
        has_edge = false;
      } else {
        edge_p.push_back(r->at("edge_cohort").at("probabilities").get<std::vector<double>>());
      }
    }
    out.push_back({"probabilities_" + stem + ".svg",
                   histogram_figure("Predicted probabilities on the test set, " + regime +
                                        (labels.empty() ? "" : " (red: positives)"),
                                    names, test_p, labels.empty() ? nullptr : &labels)});
    if (has_edge && !results.empty()) {
      out.push_back({"edge_probabilities_" + stem + ".svg",
                     histogram_figure("Predicted probabilities on the edge cohort, " + regime, names, edge_p,
                                      nullptr)});
    }
    out.push_back({"risk_coverage_" + stem + ".svg", rc_figure(regime, results)});
    out.push_back({"radar_" + stem + ".svg", radar_figure(regime, results)});
  }
  return out;
}

std::string render_report_json(const json& report) { return report.dump(2) + "\n"; }

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ComputeError("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw ComputeError("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_report_bundle(const json& report, const fs::path& out, bool with_json) {
  if (with_json) write_text_file(out / "report.json", render_report_json(report));
  for (const auto& t : report_tables(report)) write_text_file(out / "tables" / t.name, t.render());
  for (const auto& f : report_figures(report)) write_text_file(out / "figures" / f.name, f.svg);
}

}  // namespace raretab
