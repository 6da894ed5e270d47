#include "sslbench/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include "sslbench/errors.hpp"
#include "sslbench/io.hpp"

namespace sslbench {

namespace {
std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
std::string fixed(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace

ErrorValue to_error(double value, const std::string& metric) {
  require(std::isfinite(value), "non-finite " + metric + " value");
  if (higher_is_better(metric)) {
    require(value >= 0.0 && value <= 1.0, metric + " must lie in [0, 1], got " + num(value));
    return {std::abs(1.0 - value), metric, true};
  }
  require(value >= 0.0, metric + " must be non-negative, got " + num(value));
  return {value, metric, false};
}

double improvement(const ErrorValue& base, const ErrorValue& next) {
  require(base.metric == next.metric, "cannot compare " + base.metric + " with " + next.metric);
  if (!(base.delta > 0.0)) throw ValidationError("undefined relative improvement: baseline error is zero");
  return 100.0 * (base.delta - next.delta) / base.delta;
}

void PipelineTag::validate() const {
  require(arch == "conv" || arch == "vit", "unknown architecture tag '" + arch + "'");
  require(data == "domain" || data == "general" || data == "none", "unknown pretraining data tag '" + data + "'");
  require(algorithm == "mocov3" || algorithm == "barlow" || algorithm == "mae" || algorithm == "supervised" ||
              algorithm == "none",
          "unknown algorithm tag '" + algorithm + "'");
  require(algorithm != "mae" || arch == "vit", "MAE requires token encoder");
  require((algorithm == "none") == (data == "none"), "pipeline tag " + str() + " mixes 'none' with pretraining");
}

std::string to_string(Comparison c) {
  switch (c) {
    case Comparison::sl_to_ssl: return "sl_to_ssl";
    case Comparison::in_to_hk: return "in_to_hk";
    case Comparison::rn_to_vt: return "rn_to_vt";
  }
  return "";
}

std::string comparison_label(Comparison c) {
  switch (c) {
    case Comparison::sl_to_ssl: return "SL->SSL";
    case Comparison::in_to_hk: return "IN->HK";
    case Comparison::rn_to_vt: return "RN->VT";
  }
  return "";
}

std::vector<RankedModel> rank_models(const std::vector<RunSummary>& runs) {
  if (runs.empty()) return {};
  const TaskKind task = runs.front().report.task;
  const std::string metric = primary_metric(task);
  std::vector<RankedModel> out;
  for (const auto& r : runs) {
    require(r.report.task == task, "cannot rank reports from different tasks");
    out.push_back({r.tag, r.report.metric(metric)});
  }
  const bool up = higher_is_better(metric);
  std::stable_sort(out.begin(), out.end(), [up](const RankedModel& a, const RankedModel& b) {
    if (a.value != b.value) return up ? a.value > b.value : a.value < b.value;
    return a.tag.str() < b.tag.str();
  });
  return out;
}

AnalysisResult analyze(const std::vector<RunSummary>& runs) {
  AnalysisResult res;
  // One run per (task, pipeline); later duplicates are reported and skipped.
  std::map<std::pair<TaskKind, std::string>, const RunSummary*> table;
  std::vector<const RunSummary*> kept;
  for (const auto& r : runs) {
    try {
      r.tag.validate();
      r.report.metric(primary_metric(r.report.task));
    } catch (const ValidationError& e) {
      res.excluded.push_back({r.run_id, r.tag.str(), e.what()});
      continue;
    }
    auto key = std::make_pair(r.report.task, r.tag.str());
    if (table.count(key)) {
      res.excluded.push_back({r.run_id, r.tag.str(), "duplicate pipeline for task " + to_string(r.report.task) +
                                                         " (kept " + table[key]->run_id + ")"});
      continue;
    }
    table[key] = &r;
    kept.push_back(&r);
  }
  auto find = [&](TaskKind task, const PipelineTag& tag) -> const RunSummary* {
    auto it = table.find({task, tag.str()});
    return it == table.end() ? nullptr : it->second;
  };

  std::set<const RunSummary*> paired;
  auto add = [&](Comparison kind, const RunSummary& base, const RunSummary& next) {
    const TaskKind task = base.report.task;
    const std::string metric = primary_metric(task);
    ComparisonRow row{kind, task, metric, base.tag, next.tag, 0, 0, 0};
    const ErrorValue eb = to_error(base.report.metric(metric), metric);
    const ErrorValue en = to_error(next.report.metric(metric), metric);
    row.delta_base = eb.delta;
    row.delta_next = en.delta;
    try {
      row.percent = improvement(eb, en);
    } catch (const ValidationError& e) {
      res.excluded.push_back({next.run_id, next.tag.str(), comparison_label(kind) + " vs " + base.tag.str() + ": " +
                                                               e.what()});
      return;
    }
    res.rows.push_back(row);
    paired.insert(&base);
    paired.insert(&next);
  };

  for (Comparison kind : {Comparison::sl_to_ssl, Comparison::in_to_hk, Comparison::rn_to_vt}) {
    for (const RunSummary* r : kept) {
      const PipelineTag& t = r->tag;
      const TaskKind task = r->report.task;
      switch (kind) {
        case Comparison::sl_to_ssl:
          if (t.self_supervised() && t.data == "general")
            if (const RunSummary* b = find(task, {t.arch, "general", "supervised"})) add(kind, *b, *r);
          break;
        case Comparison::in_to_hk:
          if (t.self_supervised() && t.data == "domain")
            if (const RunSummary* b = find(task, {t.arch, "general", t.algorithm})) add(kind, *b, *r);
          break;
        case Comparison::rn_to_vt:
          if (t.arch == "vit" && (t.algorithm == "mocov3" || t.algorithm == "supervised" || t.algorithm == "none"))
            if (const RunSummary* b = find(task, {"conv", t.data, t.algorithm})) add(kind, *b, *r);
          break;
      }
    }
  }
  std::stable_sort(res.rows.begin(), res.rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.task != b.task) return a.task < b.task;
    return a.next.str() < b.next.str();
  });

  for (const RunSummary* r : kept) {
    if (paired.count(r)) continue;
    std::string why;
    const PipelineTag& t = r->tag;
    if (t.algorithm == "barlow" || t.algorithm == "mae")
      why = "no matching general-set " + t.algorithm + " run for this task and architecture";
    else if (t.algorithm == "supervised")
      why = "no self-supervised general-set or conv/vit counterpart for this task";
    else if (t.algorithm == "none")
      why = "no counterpart with the other architecture for this task";
    else
      why = "no comparable run for this task (pairs must share task, architecture, data and algorithm except "
            "the compared factor)";
    res.excluded.push_back({r->run_id, t.str(), why});
  }

  std::map<TaskKind, std::vector<RunSummary>> by_task;
  for (const RunSummary* r : kept) by_task[r->report.task].push_back(*r);
  for (auto& [task, rs] : by_task) res.rankings[task] = rank_models(rs);
  return res;
}

// ---- output --------------------------------------------------------------

namespace {

std::string csv_rows(const std::vector<ComparisonRow>& rows) {
  std::string s = "comparison,task,metric,base,new,delta_base,delta_new,improvement_pct\n";
  for (const auto& r : rows)
    s += comparison_label(r.kind) + "," + to_string(r.task) + "," + r.metric + "," + r.base.str() + "," + r.next.str() +
         "," + num(r.delta_base) + "," + num(r.delta_next) + "," + num(r.percent) + "\n";
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

std::string bar_chart(Comparison kind, const std::vector<ComparisonRow>& rows) {
  const int row_h = 22;
  const int left = 330;
  const int width = 760;
  const int plot_w = width - left - 40;
  const int height = 60 + row_h * static_cast<int>(std::max<std::size_t>(rows.size(), 1)) + 30;
  double span = 1.0;
  for (const auto& r : rows) span = std::max(span, std::abs(r.percent));
  const double zero_x = left + plot_w / 2.0;
  const double scale = (plot_w / 2.0) / span;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"10\" y=\"22\" font-size=\"15\">" << xml_escape(comparison_label(kind))
    << " relative improvement (%)</text>\n";
  int y = 50;
  if (rows.empty()) o << "<text x=\"10\" y=\"" << y + 14 << "\">no valid pairs</text>\n";
  for (const auto& r : rows) {
    const double w = std::abs(r.percent) * scale;
    const double x = r.percent >= 0 ? zero_x : zero_x - w;
    o << "<text x=\"10\" y=\"" << y + 15 << "\">" << xml_escape(to_string(r.task) + ": " + r.base.str() + " -> " +
                                                                 r.next.str())
      << "</text>\n";
    o << "<rect x=\"" << fixed(x, 2) << "\" y=\"" << y + 3 << "\" width=\"" << fixed(w, 2) << "\" height=\""
      << row_h - 6 << "\" fill=\"" << (r.percent >= 0 ? "#3a7d44" : "#b5473a") << "\"/>\n";
    o << "<text x=\"" << fixed(r.percent >= 0 ? x + w + 4 : x - 4, 2) << "\" y=\"" << y + 15 << "\" text-anchor=\""
      << (r.percent >= 0 ? "start" : "end") << "\">" << fixed(r.percent, 2) << "</text>\n";
    y += row_h;
  }
  o << "<line x1=\"" << fixed(zero_x, 2) << "\" y1=\"45\" x2=\"" << fixed(zero_x, 2) << "\" y2=\"" << y + 5
    << "\" stroke=\"black\"/>\n";
  o << "</svg>\n";
  return o.str();
}

// Each task is an axis; a model's radius on an axis is (n - rank + 1) / n so
// the best model on a task touches the rim.
std::string radar_chart(const std::map<TaskKind, std::vector<RankedModel>>& rankings) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
  std::vector<TaskKind> axes;
  std::set<std::string> tags;
  for (const auto& [task, ranked] : rankings) {
    axes.push_back(task);
    for (const auto& m : ranked) tags.insert(m.tag.str());
  }
  const double cx = 260, cy = 270, radius = 200;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"540\" font-family=\"sans-serif\" "
       "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"10\" y=\"22\" font-size=\"15\">Ranking per task (outer = better)</text>\n";
  const std::size_t n_axes = axes.size();
  auto point = [&](std::size_t axis, double r) {
    const double a = -std::numbers::pi / 2 + 2 * std::numbers::pi * static_cast<double>(axis) /
                                                 static_cast<double>(std::max<std::size_t>(n_axes, 1));
    return std::make_pair(cx + r * radius * std::cos(a), cy + r * radius * std::sin(a));
  };
  for (int ring = 1; ring <= 4; ++ring) {
    o << "<polygon fill=\"none\" stroke=\"#dddddd\" points=\"";
    for (std::size_t a = 0; a < n_axes; ++a) {
      auto [x, y] = point(a, ring / 4.0);
      o << fixed(x, 2) << "," << fixed(y, 2) << " ";
    }
    o << "\"/>\n";
  }
  for (std::size_t a = 0; a < n_axes; ++a) {
    auto [x, y] = point(a, 1.0);
    auto [lx, ly] = point(a, 1.12);
    o << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << fixed(x, 2) << "\" y2=\"" << fixed(y, 2)
      << "\" stroke=\"#999999\"/>\n";
    o << "<text x=\"" << fixed(lx, 2) << "\" y=\"" << fixed(ly, 2) << "\" text-anchor=\"middle\">"
      << to_string(axes[a]) << "</text>\n";
  }
  std::size_t k = 0;
  for (const std::string& tag : tags) {
    const char* colour = palette[k % (sizeof palette / sizeof *palette)];
    o << "<polygon fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t a = 0; a < n_axes; ++a) {
      const auto& ranked = rankings.at(axes[a]);
      double r = 0.0;
      for (std::size_t i = 0; i < ranked.size(); ++i)
        if (ranked[i].tag.str() == tag)
          r = static_cast<double>(ranked.size() - i) / static_cast<double>(ranked.size());
      auto [x, y] = point(a, r);
      o << fixed(x, 2) << "," << fixed(y, 2) << " ";
    }
    o << "\"/>\n";
    o << "<rect x=\"540\" y=\"" << 60 + 20 * k << "\" width=\"12\" height=\"12\" fill=\"" << colour << "\"/>\n";
    o << "<text x=\"558\" y=\"" << 71 + 20 * k << "\">" << xml_escape(tag) << "</text>\n";
    ++k;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::vector<std::filesystem::path> write_analysis(const AnalysisResult& res, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& body) {
    write_file(dir / name, body);
    written.push_back(dir / name);
  };
  nlohmann::ordered_json j;
  j["comparisons"] = nlohmann::ordered_json::array();
  for (const auto& r : res.rows)
    j["comparisons"].push_back({{"comparison", comparison_label(r.kind)},
                                {"task", to_string(r.task)},
                                {"metric", r.metric},
                                {"base", r.base.str()},
                                {"new", r.next.str()},
                                {"delta_base", r.delta_base},
                                {"delta_new", r.delta_next},
                                {"improvement_pct", r.percent}});
  j["excluded"] = nlohmann::ordered_json::array();
  for (const auto& e : res.excluded) j["excluded"].push_back({{"run", e.run_id}, {"tag", e.tag}, {"reason", e.reason}});
  j["rankings"] = nlohmann::ordered_json::object();
  std::string ranking_csv = "task,rank,pipeline,metric,value\n";
  for (const auto& [task, ranked] : res.rankings) {
    auto& arr = j["rankings"][to_string(task)] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      arr.push_back({{"rank", i + 1}, {"pipeline", ranked[i].tag.str()}, {"value", ranked[i].value}});
      ranking_csv += to_string(task) + "," + std::to_string(i + 1) + "," + ranked[i].tag.str() + "," +
                     primary_metric(task) + "," + num(ranked[i].value) + "\n";
    }
  }
  put("analysis.json", j.dump(2) + "\n");
  put("comparisons.csv", csv_rows(res.rows));
  for (Comparison kind : {Comparison::sl_to_ssl, Comparison::in_to_hk, Comparison::rn_to_vt}) {
    std::vector<ComparisonRow> sub;
    for (const auto& r : res.rows)
      if (r.kind == kind) sub.push_back(r);
    put(to_string(kind) + ".csv", csv_rows(sub));
    put(to_string(kind) + ".svg", bar_chart(kind, sub));
  }
  put("ranking.csv", ranking_csv);
  put("ranking_radar.svg", radar_chart(res.rankings));
  return written;
}

}  // namespace sslbench
