#include "vbd/experiment/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "vbd/common/error.hpp"
#include "vbd/common/jsonl.hpp"
#include "vbd/experiment/pipeline.hpp"

namespace vbd::experiment {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMetricKeys[] = {"sr", "asr", "f1bt", "ftr", "activation", "ood_activation", "ood_asr"};

std::map<std::string, double> extract(const json& doc) {
  const json& m = doc.at("metrics");
  return {{"sr", m.at("sr").at("value").get<double>()},
          {"asr", m.at("asr").at("value").get<double>()},
          {"f1bt", m.at("f1bt").at("f1").get<double>()},
          {"ftr", m.at("ftr").at("value").get<double>()},
          {"activation", m.at("activation").at("activation_rate").at("value").get<double>()},
          {"ood_activation", doc.at("ood").at("activation_rate").at("value").get<double>()},
          {"ood_asr", doc.at("ood").at("asr").at("value").get<double>()}};
}

std::vector<fs::path> metric_files(const fs::path& eval_dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(eval_dir)) return out;
  for (const auto& e : fs::directory_iterator(eval_dir)) {
    if (fs::exists(e.path() / "metrics.json")) out.push_back(e.path() / "metrics.json");
  }
  std::sort(out.begin(), out.end());
  return out;
}

int variant_rank(const std::string& v) {
  int i = 0;
  for (Variant x : kAllVariants) {
    if (label(x) == v) return i;
    ++i;
  }
  return i;
}

std::string fmt(double x, int prec = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, x);
  return buf;
}

std::string cell(const Summary& s) { return s.n > 1 ? fmt(s.mean) + " ± " + fmt(s.sd) : fmt(s.mean); }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

Report collect_report(const std::vector<fs::path>& runs) {
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  Report r;
  std::set<std::string> hashes;
  std::map<std::string, std::map<std::string, std::vector<double>>> main;
  std::map<std::pair<double, std::string>, std::map<std::string, std::vector<double>>> sweep;
  std::set<std::string> configs;

  const auto take = [&](const fs::path& file) {
    const json doc = read_json(file);
    const std::string scen = doc.at("scenario_hash").get<std::string>();
    if (!r.scenario_hash.empty() && scen != r.scenario_hash) {
      throw ConfigError("refusing to compare runs with different scenario sets: " + file.string() + " has " + scen +
                        ", expected " + r.scenario_hash);
    }
    r.scenario_hash = scen;
    configs.insert(doc.at("config_hash").get<std::string>());
    return doc;
  };

  for (const auto& run : runs) {
    if (!fs::is_directory(run)) throw MissingArtifactError("run directory not found: " + run.string());
    for (const auto& f : metric_files(run / "eval")) {
      const json doc = take(f);
      for (const auto& [k, v] : extract(doc)) main[doc.at("variant").get<std::string>()][k].push_back(v);
    }
    if (fs::is_directory(run / "sweep")) {
      for (const auto& e : fs::directory_iterator(run / "sweep")) {
        for (const auto& f : metric_files(e.path() / "eval")) {
          const json doc = take(f);
          auto& slot = sweep[{doc.at("k").get<double>(), doc.at("variant").get<std::string>()}];
          for (const auto& [k, v] : extract(doc)) slot[k].push_back(v);
        }
      }
    }
  }
  if (main.empty() && sweep.empty()) throw MissingArtifactError("no metrics.json found under the given run directories");

  for (const auto& [variant, vals] : main) {
    ReportRow row{variant, {}};
    for (const auto& [k, xs] : vals) row.metrics[k] = summarize(xs);
    r.rows.push_back(std::move(row));
  }
  std::sort(r.rows.begin(), r.rows.end(),
            [](const ReportRow& a, const ReportRow& b) { return variant_rank(a.variant) < variant_rank(b.variant); });
  for (const auto& [key, vals] : sweep) {
    SweepRow row{key.first, key.second, {}};
    for (const auto& [k, xs] : vals) row.metrics[k] = summarize(xs);
    r.sweep.push_back(std::move(row));
  }
  std::stable_sort(r.sweep.begin(), r.sweep.end(), [](const SweepRow& a, const SweepRow& b) {
    return a.k != b.k ? a.k < b.k : variant_rank(a.variant) < variant_rank(b.variant);
  });
  r.config_hashes.assign(configs.begin(), configs.end());
  return r;
}

json to_json(const Report& r) {
  const auto summ = [](const std::map<std::string, Summary>& m) {
    json j = json::object();
    for (const auto& [k, s] : m) j[k] = {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}};
    return j;
  };
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back({{"variant", row.variant}, {"metrics", summ(row.metrics)}});
  json sweep = json::array();
  for (const auto& row : r.sweep) sweep.push_back({{"k", row.k}, {"variant", row.variant}, {"metrics", summ(row.metrics)}});
  return json{{"rows", rows}, {"sweep", sweep}, {"scenario_hash", r.scenario_hash}, {"config_hashes", r.config_hashes}};
}

std::string markdown_table(const Report& r) {
  std::ostringstream os;
  os << "| Model | Runs | SR | ASR | F1_BT | FTR | Activation | OOD activation |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : r.rows) {
    const auto& m = row.metrics;
    os << "| " << row.variant << " | " << m.at("sr").n << " | " << cell(m.at("sr")) << " | " << cell(m.at("asr"))
       << " | " << cell(m.at("f1bt")) << " | " << cell(m.at("ftr")) << " | " << cell(m.at("activation")) << " | "
       << cell(m.at("ood_activation")) << " |\n";
  }
  if (!r.sweep.empty()) {
    os << "\n| k | Model | Runs | SR | ASR | F1_BT | FTR |\n|---|---|---|---|---|---|---|\n";
    for (const auto& row : r.sweep) {
      const auto& m = row.metrics;
      os << "| " << fmt(row.k, 2) << " | " << row.variant << " | " << m.at("sr").n << " | " << cell(m.at("sr"))
         << " | " << cell(m.at("asr")) << " | " << cell(m.at("f1bt")) << " | " << cell(m.at("ftr")) << " |\n";
    }
  }
  os << "\nScenario set `" << r.scenario_hash << "`; configs:";
  for (const auto& h : r.config_hashes) os << " `" << h.substr(0, 16) << "`";
  os << "\n";
  return os.str();
}

std::string ftr_bar_svg(const Report& r) {
  const double w = 520, h = 320, left = 60, right = 20, top = 40, bottom = 60;
  const double plot_w = w - left - right, plot_h = h - top - bottom;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<!-- scenario set " << r.scenario_hash << " -->\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">False triggering rate</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i * 0.25, y = top + plot_h * (1 - v);
    os << "<line x1=\"" << left << "\" x2=\"" << w - right << "\" y1=\"" << y << "\" y2=\"" << y << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt(v, 2) << "</text>\n";
  }
  const double slot = r.rows.empty() ? plot_w : plot_w / static_cast<double>(r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& s = r.rows[i].metrics.at("ftr");
    const double x = left + slot * static_cast<double>(i) + slot * 0.2, bw = slot * 0.6;
    const double bh = plot_h * std::clamp(s.mean, 0.0, 1.0);
    os << "<rect x=\"" << x << "\" y=\"" << top + plot_h - bh << "\" width=\"" << bw << "\" height=\"" << bh
       << "\" fill=\"#4a7ab5\"/>\n";
    if (s.n > 1) {
      const double cx = x + bw / 2, y0 = top + plot_h * (1 - std::clamp(s.mean - s.sd, 0.0, 1.0)),
                   y1 = top + plot_h * (1 - std::clamp(s.mean + s.sd, 0.0, 1.0));
      os << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << y0 << "\" y2=\"" << y1 << "\" stroke=\"#222\"/>\n";
    }
    os << "<text x=\"" << x + bw / 2 << "\" y=\"" << top + plot_h - bh - 6 << "\" text-anchor=\"middle\">" << fmt(s.mean, 2)
       << "</text>\n";
    os << "<text x=\"" << x + bw / 2 << "\" y=\"" << h - bottom + 18 << "\" text-anchor=\"middle\">"
       << xml_escape(r.rows[i].variant) << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" x2=\"" << w - right << "\" y1=\"" << top + plot_h << "\" y2=\"" << top + plot_h
     << "\" stroke=\"#222\"/>\n</svg>\n";
  return os.str();
}

std::string ksweep_svg(const Report& r) {
  const double w = 560, h = 340, left = 60, right = 150, top = 40, bottom = 50;
  const double plot_w = w - left - right, plot_h = h - top - bottom;
  const auto px = [&](double k) { return left + plot_w * k; };
  const auto py = [&](double v) { return top + plot_h * (1 - std::clamp(v, 0.0, 1.0)); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<!-- scenario set " << r.scenario_hash << " -->\n";
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">SR and ASR against backdoor data ratio k</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i * 0.25;
    os << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << py(v) << "\" y2=\"" << py(v) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fmt(v, 2) << "</text>\n";
    os << "<text x=\"" << px(v) << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">" << fmt(v, 2) << "</text>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">k</text>\n";
  struct Series {
    const char* variant;
    const char* metric;
    const char* color;
    const char* dash;
  };
  const Series series[] = {{"w/o CTL", "sr", "#999999", "4 3"},
                           {"SFT+CTL", "sr", "#4a7ab5", "4 3"},
                           {"w/o CTL", "asr", "#999999", ""},
                           {"SFT+CTL", "asr", "#c0392b", ""}};
  int legend = 0;
  for (const auto& s : series) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : r.sweep) {
      if (row.variant == s.variant) pts.emplace_back(row.k, row.metrics.at(s.metric).mean);
    }
    if (pts.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
    if (*s.dash) os << " stroke-dasharray=\"" << s.dash << "\"";
    os << " points=\"";
    for (const auto& [k, v] : pts) os << px(k) << "," << py(v) << " ";
    os << "\"/>\n";
    for (const auto& [k, v] : pts) {
      os << "<circle cx=\"" << px(k) << "\" cy=\"" << py(v) << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
    const double ly = top + 10 + 18 * legend++;
    os << "<line x1=\"" << w - right + 12 << "\" x2=\"" << w - right + 36 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"" << (*s.dash ? std::string(" stroke-dasharray=\"") + s.dash + "\"" : "")
       << "/>\n";
    os << "<text x=\"" << w - right + 42 << "\" y=\"" << ly + 4 << "\">" << (std::string(s.metric) == "sr" ? "SR " : "ASR ")
       << xml_escape(s.variant) << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << top + plot_h << "\" y2=\"" << top + plot_h
     << "\" stroke=\"#222\"/>\n</svg>\n";
  return os.str();
}

void write_report(const Report& r, const fs::path& out) {
  fs::create_directories(out);
  write_json(out / "report.json", to_json(r));
  write_text(out / "report.md", markdown_table(r));
  if (!r.rows.empty()) write_text(out / "ftr.svg", ftr_bar_svg(r));
  if (!r.sweep.empty()) write_text(out / "ksweep.svg", ksweep_svg(r));
}

}  // namespace vbd::experiment
