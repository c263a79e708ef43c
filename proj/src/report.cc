/*
 * Copyright 2026 The weakdis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "weakdis/report.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace weakdis {

namespace fs = std::filesystem;

const std::vector<std::string>& training_statistics() {
  static const std::vector<std::string> names = {"weak_reconstruction_loss", "train_loss",
                                                 "train_elbo", "train_reconstruction"};
  return names;
}

std::optional<double> training_statistic(const RunRecord& r, const std::string& name) {
  if (name == "weak_reconstruction_loss") return r.weak_reconstruction_loss;
  if (name == "train_loss") return r.train_loss;
  if (name == "train_elbo") return r.train_elbo;
  if (name == "train_reconstruction") return r.train_reconstruction;
  throw std::invalid_argument("unknown training statistic '" + name + "'");
}

std::optional<double> median(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

Json opt(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
}

std::string csv_cell(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return "null";
  std::ostringstream out;
  out << std::setprecision(17) << *v;
  return out.str();
}

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string sharing_of(const RunRecord& r) {
  return r.config.trains_on_pairs() ? r.config.sharing_mode().to_string() : "";
}

std::map<std::string, std::vector<std::size_t>> by_group(const std::vector<RunRecord>& records) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].config.group()].push_back(i);
  return groups;
}

Json medians(const std::vector<RunRecord>& records, const std::vector<std::size_t>& idx) {
  Json out = Json::object();
  for (const std::string& m : metric_names()) {
    std::vector<double> v;
    for (std::size_t i : idx) {
      if (auto x = records[i].metric(m)) v.push_back(*x);
    }
    out[m] = opt(median(v));
  }
  return out;
}

// ---- SVG helpers ----------------------------------------------------------

std::string fmt(double v, int precision = 3) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Svg {
  std::ostringstream body;
  int width, height;
  Svg(int w, int h) : width(w), height(h) {}
  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "middle", double rotate = 0) {
    body << "<text x=\"" << fmt(x, 1) << "\" y=\"" << fmt(y, 1) << "\" font-size=\"" << size
         << "\" text-anchor=\"" << anchor << "\" font-family=\"sans-serif\"";
    if (rotate != 0) body << " transform=\"rotate(" << rotate << " " << fmt(x, 1) << " " << fmt(y, 1) << ")\"";
    body << ">" << escape(s) << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#333",
            double w = 1) {
    body << "<line x1=\"" << fmt(x1, 1) << "\" y1=\"" << fmt(y1, 1) << "\" x2=\"" << fmt(x2, 1)
         << "\" y2=\"" << fmt(y2, 1) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << w << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none") {
    body << "<rect x=\"" << fmt(x, 1) << "\" y=\"" << fmt(y, 1) << "\" width=\"" << fmt(w, 1)
         << "\" height=\"" << fmt(h, 1) << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body << "<circle cx=\"" << fmt(x, 1) << "\" cy=\"" << fmt(y, 1) << "\" r=\"" << r
         << "\" fill=\"" << fill << "\" fill-opacity=\"0.6\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) body << fmt(x, 1) << "," << fmt(y, 1) << " ";
    body << "\"/>\n";
  }
  void save(const fs::path& path) const {
    std::ofstream out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body.str() << "</svg>\n";
  }
};

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                          "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
}

// Box plot (quartiles, min-max whiskers, jittered points) of one metric per group.
void box_plot(const std::vector<RunRecord>& records,
              const std::map<std::string, std::vector<std::size_t>>& groups,
              const std::string& metric, const fs::path& path) {
  const int n = static_cast<int>(groups.size());
  const double left = 60, top = 30, plot_h = 260, slot = 90;
  Svg svg(static_cast<int>(left + slot * std::max(n, 1) + 20), 420);
  svg.text(svg.width / 2.0, 18, metric + " by group", 13);
  svg.line(left, top, left, top + plot_h);
  for (int t = 0; t <= 4; ++t) {
    const double y = top + plot_h * (1 - t / 4.0);
    svg.line(left - 4, y, left, y);
    svg.text(left - 8, y + 4, fmt(t / 4.0, 2), 10, "end");
  }
  int g = 0;
  for (const auto& [name, idx] : groups) {
    std::vector<double> v;
    for (std::size_t i : idx) {
      if (auto x = records[i].metric(metric)) v.push_back(std::clamp(*x, 0.0, 1.0));
    }
    const double cx = left + slot * (g + 0.5);
    const std::string colour = kPalette[g % 10];
    svg.text(cx, top + plot_h + 14, name, 9, "end", -35);
    auto ypos = [&](double value) { return top + plot_h * (1 - value); };
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      const double q1 = quantile(v, 0.25), q2 = quantile(v, 0.5), q3 = quantile(v, 0.75);
      svg.line(cx, ypos(v.front()), cx, ypos(v.back()));
      svg.rect(cx - 20, ypos(q3), 40, std::max(1.0, ypos(q1) - ypos(q3)), colour, "#333");
      svg.line(cx - 20, ypos(q2), cx + 20, ypos(q2), "#000", 2);
      for (std::size_t i = 0; i < v.size(); ++i) {
        svg.circle(cx - 12 + 24.0 * (i + 0.5) / v.size(), ypos(v[i]), 2.5, "#222");
      }
    }
    ++g;
  }
  svg.save(path);
}

// Median DCI against the number of changed factors, one line per variant.
void k_sweep_plot(const Json& k_sweep, const fs::path& path) {
  std::map<std::string, std::vector<std::pair<std::string, double>>> lines;
  std::vector<std::string> xs;
  for (const Json& row : k_sweep) {
    if (row["median_dci"].is_null()) continue;
    const std::string label = row["variant"].get<std::string>() + " " +
                              row["supervision"].get<std::string>();
    lines[label].push_back({row["sharing"], row["median_dci"]});
    if (std::find(xs.begin(), xs.end(), row["sharing"]) == xs.end()) xs.push_back(row["sharing"]);
  }
  std::sort(xs.begin(), xs.end(), [](const std::string& a, const std::string& b) {
    const bool ra = a == "rnd", rb = b == "rnd";
    if (ra != rb) return rb;
    return ra ? false : std::stoi(a) < std::stoi(b);
  });
  const double left = 60, top = 30, w = 360, h = 240;
  Svg svg(480, 330);
  svg.text(240, 18, "median DCI by number of changed factors", 13);
  svg.line(left, top, left, top + h);
  svg.line(left, top + h, left + w, top + h);
  for (int t = 0; t <= 4; ++t) {
    const double y = top + h * (1 - t / 4.0);
    svg.text(left - 8, y + 4, fmt(t / 4.0, 2), 10, "end");
  }
  auto xpos = [&](const std::string& x) {
    const auto i = std::find(xs.begin(), xs.end(), x) - xs.begin();
    return left + w * (xs.size() == 1 ? 0.5 : double(i) / (xs.size() - 1));
  };
  for (const auto& x : xs) svg.text(xpos(x), top + h + 16, "k=" + x, 10);
  int g = 0;
  for (auto& [label, pts] : lines) {
    std::sort(pts.begin(), pts.end(), [&](const auto& a, const auto& b) {
      return xpos(a.first) < xpos(b.first);
    });
    std::vector<std::pair<double, double>> coords;
    for (const auto& [x, y] : pts) coords.push_back({xpos(x), top + h * (1 - std::clamp(y, 0.0, 1.0))});
    const std::string colour = kPalette[g % 10];
    svg.polyline(coords, colour);
    for (const auto& [x, y] : coords) svg.circle(x, y, 3.5, colour);
    svg.text(left + w - 4, top + 14 + 14 * g, label, 10, "end");
    svg.rect(left + w, top + 6 + 14 * g, 10, 10, colour);
    ++g;
  }
  svg.save(path);
}

// One heat grid per group: training statistics by metric, blue negative.
void rank_correlation_plot(const Json& grid, const fs::path& path) {
  std::vector<std::string> groups;
  for (const Json& c : grid) {
    if (std::find(groups.begin(), groups.end(), c["group"]) == groups.end()) groups.push_back(c["group"]);
  }
  const auto& stats = training_statistics();
  const auto& metrics = metric_names();
  const double cell = 46, left = 170, block = cell * stats.size() + 60;
  Svg svg(static_cast<int>(left + cell * metrics.size() + 20),
          static_cast<int>(40 + block * std::max<std::size_t>(groups.size(), 1) + 80));
  svg.text(svg.width / 2.0, 18, "Spearman rank correlation", 13);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double top = 40 + block * g;
    svg.text(left, top + 10, groups[g], 11, "start");
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      svg.text(left + cell * (m + 0.5), top + 26, metrics[m].substr(0, 9), 8);
    }
    for (std::size_t s = 0; s < stats.size(); ++s) {
      svg.text(left - 6, top + 32 + cell * (s + 0.5) + 4, stats[s], 9, "end");
    }
    for (const Json& c : grid) {
      if (c["group"] != groups[g]) continue;
      const auto s = std::find(stats.begin(), stats.end(), c["statistic"]) - stats.begin();
      const auto m = std::find(metrics.begin(), metrics.end(), c["metric"]) - metrics.begin();
      const double x = left + cell * m, y = top + 32 + cell * s;
      std::string fill = "#eeeeee";
      std::string label = "n/a";
      if (!c["rho"].is_null()) {
        const double rho = c["rho"];
        const int shade = static_cast<int>(255 * (1 - std::abs(rho)));
        std::ostringstream colour;
        colour << "rgb(" << (rho < 0 ? shade : 255) << "," << shade << "," << (rho < 0 ? 255 : shade) << ")";
        fill = colour.str();
        label = fmt(rho, 2);
      }
      svg.rect(x + 1, y + 1, cell - 2, cell - 2, fill);
      svg.text(x + cell / 2, y + cell / 2 + 4, label, 10);
    }
  }
  svg.save(path);
}

}  // namespace

Json emit_report(const std::vector<RunRecord>& records, const fs::path& out_dir) {
  fs::create_directories(out_dir / "plots");
  const auto groups = by_group(records);
  const auto selected = select_per_group_and_seed(records);
  const std::set<std::size_t> selected_set(selected.begin(), selected.end());

  Json summary;
  summary["schema_version"] = kReportSchemaVersion;
  summary["num_runs"] = records.size();
  summary["metrics"] = metric_names();
  summary["training_statistics"] = training_statistics();

  Json group_rows = Json::array();
  for (const auto& [name, idx] : groups) {
    const RunRecord& first = records[idx.front()];
    std::vector<std::size_t> chosen;
    Json chosen_ids = Json::array(), betas = Json::array(), seeds = Json::array();
    std::set<double> beta_set;
    std::set<std::uint64_t> seed_set;
    int diverged = 0;
    for (std::size_t i : idx) {
      beta_set.insert(records[i].config.beta);
      seed_set.insert(records[i].config.seed);
      diverged += records[i].status != "ok";
      if (selected_set.count(i)) {
        chosen.push_back(i);
        chosen_ids.push_back(records[i].run_id);
      }
    }
    for (double b : beta_set) betas.push_back(b);
    for (auto s : seed_set) seeds.push_back(s);
    std::vector<double> losses;
    for (std::size_t i : idx) {
      if (records[i].weak_reconstruction_loss) losses.push_back(*records[i].weak_reconstruction_loss);
    }
    group_rows.push_back({{"group", name},
                          {"variant", to_string(first.config.variant)},
                          {"supervision", first.config.aggregation_variant().supervision.to_string()},
                          {"sharing", sharing_of(first)},
                          {"num_runs", idx.size()},
                          {"diverged", diverged},
                          {"betas", betas},
                          {"seeds", seeds},
                          {"median", medians(records, idx)},
                          {"selected_runs", chosen_ids},
                          {"selected_median", medians(records, chosen)},
                          {"median_weak_reconstruction_loss", opt(median(losses))}});
  }
  summary["groups"] = group_rows;

  Json k_sweep = Json::array();
  for (const Json& g : group_rows) {
    if (g["sharing"] == "") continue;
    k_sweep.push_back({{"group", g["group"]},
                       {"variant", g["variant"]},
                       {"supervision", g["supervision"]},
                       {"sharing", g["sharing"]},
                       {"median_dci", g["selected_median"]["dci_disentanglement"]}});
  }
  summary["k_sweep"] = k_sweep;

  Json grid = Json::array();
  std::ofstream rank_csv(out_dir / "rank_correlation.csv");
  rank_csv << "group,statistic,metric,n,rho\n";
  for (const auto& [name, idx] : groups) {
    for (const std::string& stat : training_statistics()) {
      for (const std::string& m : metric_names()) {
        std::vector<double> xs, ys;
        for (std::size_t i : idx) {
          const auto x = training_statistic(records[i], stat);
          const auto y = records[i].metric(m);
          if (x && y && std::isfinite(*x) && std::isfinite(*y)) {
            xs.push_back(*x);
            ys.push_back(*y);
          }
        }
        std::optional<double> rho;
        if (xs.size() >= 3) rho = spearman_rank_correlation(xs, ys);
        grid.push_back({{"group", name}, {"statistic", stat}, {"metric", m}, {"n", xs.size()}, {"rho", opt(rho)}});
        rank_csv << csv_text(name) << ',' << stat << ',' << m << ',' << xs.size() << ','
                 << csv_cell(rho) << '\n';
      }
    }
  }
  summary["rank_correlation"] = grid;

  std::ofstream runs_csv(out_dir / "runs.csv");
  runs_csv << "run_id,group,variant,supervision,sharing,beta,seed,status,selected";
  for (const auto& s : training_statistics()) runs_csv << ',' << s;
  for (const auto& m : metric_names()) runs_csv << ',' << m;
  runs_csv << '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    const RunRecord& r = records[i];
    runs_csv << csv_text(r.run_id) << ',' << csv_text(r.config.group()) << ','
             << to_string(r.config.variant) << ','
             << csv_text(r.config.aggregation_variant().supervision.to_string()) << ','
             << sharing_of(r) << ',' << csv_cell(r.config.beta) << ',' << r.config.seed << ','
             << r.status << ',' << (selected_set.count(i) ? 1 : 0);
    for (const auto& s : training_statistics()) runs_csv << ',' << csv_cell(training_statistic(r, s));
    for (const auto& m : metric_names()) runs_csv << ',' << csv_cell(r.metric(m));
    runs_csv << '\n';
  }

  Json plots = Json::array();
  for (const std::string& m : metric_names()) {
    const std::string file = "plots/scores_" + m + ".svg";
    box_plot(records, groups, m, out_dir / file);
    plots.push_back(file);
  }
  k_sweep_plot(k_sweep, out_dir / "plots/k_sweep.svg");
  rank_correlation_plot(grid, out_dir / "plots/rank_correlation.svg");
  plots.push_back("plots/k_sweep.svg");
  plots.push_back("plots/rank_correlation.svg");
  summary["files"] = {{"runs_csv", "runs.csv"}, {"rank_correlation_csv", "rank_correlation.csv"}, {"plots", plots}};

  std::ofstream(out_dir / "summary.json") << summary.dump(2) << '\n';
  return summary;
}

}  // namespace weakdis
