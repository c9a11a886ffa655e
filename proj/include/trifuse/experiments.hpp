#pragma once

// Multi-run experiment drivers. Every arm of an experiment shares the dataset and,
// per seed, the train/test split.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "trifuse/train.hpp"

namespace trifuse {

struct TableRow {
  std::string label;
  MetricsSummary summary;  // pooled over every test sample of every seed
};

/// Method rows by (ET, WT, TC, Avg) columns for dice and for Hausdorff distance.
struct ComparisonTable {
  std::string title;
  std::string row_header = "method";
  std::vector<TableRow> rows;
  std::vector<std::string> footer;

  std::string to_text() const {
    std::ostringstream os;
    char buf[512];
    os << title << '\n';
    std::snprintf(buf, sizeof buf, "%-22s | %-8s %-8s %-8s %-8s | %-9s %-9s %-9s %-9s\n", row_header.c_str(), "Dice ET",
                  "Dice WT", "Dice TC", "Dice Avg", "HD ET", "HD WT", "HD TC", "HD Avg");
    os << buf << std::string(std::strlen(buf) - 1, '-') << '\n';
    for (const auto& r : rows) {
      const auto& s = r.summary;
      using metrics::Region;
      std::snprintf(buf, sizeof buf, "%-22s | %.4f   %.4f   %.4f   %.4f   | %-9.3f %-9.3f %-9.3f %-9.3f\n",
                    r.label.c_str(), s[Region::et].dice_mean, s[Region::wt].dice_mean, s[Region::tc].dice_mean,
                    s.avg_dice(), s[Region::et].hd_mean, s[Region::wt].hd_mean, s[Region::tc].hd_mean, s.avg_hd());
      os << buf;
    }
    for (const auto& f : footer) os << f << '\n';
    return os.str();
  }

  void write_csv(std::ostream& os) const {
    os << row_header << ",dice_et,dice_wt,dice_tc,dice_avg,hd_et,hd_wt,hd_tc,hd_avg\n";
    char buf[512];
    for (const auto& r : rows) {
      const auto& s = r.summary;
      using metrics::Region;
      std::snprintf(buf, sizeof buf, "%s,%.8f,%.8f,%.8f,%.8f,%.6f,%.6f,%.6f,%.6f\n", r.label.c_str(),
                    s[Region::et].dice_mean, s[Region::wt].dice_mean, s[Region::tc].dice_mean, s.avg_dice(),
                    s[Region::et].hd_mean, s[Region::wt].hd_mean, s[Region::tc].hd_mean, s.avg_hd());
      os << buf;
    }
  }
};

struct ArmRun {
  std::string arm;
  std::uint64_t seed = 0;
  RunReport report;
};

struct ExperimentResult {
  ComparisonTable table;
  std::vector<ArmRun> runs;

  std::vector<const ArmRun*> arm(const std::string& name) const {
    std::vector<const ArmRun*> out;
    for (const auto& r : runs)
      if (r.arm == name) out.push_back(&r);
    return out;
  }

  /// One line per (arm, seed).
  std::string detail_text() const {
    std::ostringstream os;
    char buf[256];
    os << "per-seed detail\n";
    for (const auto& r : runs) {
      using metrics::Region;
      const auto& s = r.report.summary;
      std::snprintf(buf, sizeof buf, "%-22s seed %-4llu dice ET %.4f WT %.4f TC %.4f avg %.4f  best epoch %d\n",
                    r.arm.c_str(), static_cast<unsigned long long>(r.seed), s[Region::et].dice_mean,
                    s[Region::wt].dice_mean, s[Region::tc].dice_mean, s.avg_dice(), r.report.best_epoch);
      os << buf;
    }
    return os.str();
  }

  /// table.txt, table.csv, detail.txt, and one sub-directory per run.
  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto open = [&](const std::string& name) {
      std::ofstream f(dir / name);
      if (!f) throw Error(ErrorKind::io, "cannot write " + (dir / name).string());
      return f;
    };
    open("table.txt") << table.to_text();
    auto csv = open("table.csv");
    table.write_csv(csv);
    open("detail.txt") << detail_text();
    for (const auto& r : runs) r.report.write(dir / "runs" / (r.arm + "_seed" + std::to_string(r.seed)));
  }
};

struct Arm {
  std::string label;
  std::function<void(ExperimentConfig&)> apply;
};

using ProgressFn = std::function<void(const std::string& arm, std::uint64_t seed)>;

/// Trains every arm for every seed on one shared dataset.
inline ExperimentResult run_arms(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                                 const std::vector<Arm>& arms, const Dataset& data, std::string title,
                                 std::string row_header = "method", const ProgressFn& progress = {}) {
  if (seeds.empty()) throw Error(ErrorKind::config, "need at least one seed");
  ExperimentResult res;
  res.table.title = std::move(title);
  res.table.row_header = std::move(row_header);
  for (const auto& arm : arms) {
    std::vector<metrics::SampleMetrics> pooled;
    for (auto seed : seeds) {
      ExperimentConfig cfg = base;
      cfg.seed = seed;
      arm.apply(cfg);
      if (progress) progress(arm.label, seed);
      auto r = train(cfg, data);
      r.report.title = arm.label + " (seed " + std::to_string(seed) + ")";
      pooled.insert(pooled.end(), r.report.test_metrics.begin(), r.report.test_metrics.end());
      res.runs.push_back({arm.label, seed, std::move(r.report)});
    }
    res.table.rows.push_back({arm.label, summarize(pooled)});
  }
  return res;
}

inline std::string percent_change(double from, double to) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f%%", 100.0 * (to - from) / from);
  return buf;
}

inline ExperimentResult run_ablation(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                                     const Dataset& data, const ProgressFn& progress = {}) {
  std::vector<Arm> arms{
      {"baseline", [](ExperimentConfig& c) { c.mode = FusionMode::baseline; }},
      {"dual", [](ExperimentConfig& c) { c.mode = FusionMode::dual; }},
      {"tri", [](ExperimentConfig& c) { c.mode = FusionMode::tri; }},
  };
  auto res = run_arms(base, seeds, arms, data, "Ablation: baseline vs dual-attention vs tri-attention fusion",
                      "method", progress);
  const double b = res.table.rows[0].summary.avg_dice(), t = res.table.rows[2].summary.avg_dice();
  res.table.footer = {
      "this run: tri vs baseline avg dice " + percent_change(b, t),
      "published full-scale BraTS reference: baseline avg dice 0.786, tri 0.811 (+3.18%); context only",
  };
  return res;
}

inline ExperimentResult expression_comparison(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                                              const Dataset& data, const ProgressFn& progress = {}) {
  std::vector<Arm> arms{
      {"Linear",
       [](ExperimentConfig& c) {
         c.mode = FusionMode::tri;
         c.expression = Expression::linear;
       }},
      {"Nonlinear",
       [](ExperimentConfig& c) {
         c.mode = FusionMode::tri;
         c.expression = Expression::nonlinear;
       }},
  };
  auto res = run_arms(base, seeds, arms, data, "Correlation expression comparison", "expression", progress);
  res.table.footer = {"published full-scale BraTS reference: nonlinear avg dice 0.811, linear 0.795; context only"};
  return res;
}

inline std::string placement_label(const std::vector<int>& levels, int deepest) {
  if (levels.empty()) return "none (dual)";
  std::string s = "L";
  for (std::size_t i = 0; i < levels.size(); ++i) s += (i ? "+L" : "") + std::to_string(levels[i]);
  if (levels.size() == 1 && levels[0] == deepest) s += " (deepest)";
  return s;
}

/// One tri-mode arm per placement set; an empty set disables the correlation branch.
inline ExperimentResult placement_experiment(const ExperimentConfig& base, const std::vector<std::vector<int>>& placements,
                                             const std::vector<std::uint64_t>& seeds, const Dataset& data,
                                             const ProgressFn& progress = {}) {
  std::vector<Arm> arms;
  for (const auto& p : placements) {
    for (int l : p)
      if (l < 1 || l > base.net.levels)
        throw Error(ErrorKind::config, "placement level " + std::to_string(l) + " outside 1.." +
                                           std::to_string(base.net.levels));
    arms.push_back({placement_label(p, base.net.levels), [p](ExperimentConfig& c) {
                      c.mode = FusionMode::tri;
                      c.placement_default = false;
                      c.placement = p;
                    }});
  }
  return run_arms(base, seeds, arms, data, "Correlation module placement", "placement", progress);
}

struct LambdaPoint {
  double lambda = 0.0;
  double avg_dice = 0.0;
  double avg_hd = 0.0;
};

struct LambdaCurve {
  ExperimentResult result;
  std::vector<LambdaPoint> points;

  void write_csv(std::ostream& os) const {
    os << "lambda,avg_dice,avg_hd_mm\n";
    char buf[128];
    for (const auto& p : points) {
      std::snprintf(buf, sizeof buf, "%g,%.8f,%.6f\n", p.lambda, p.avg_dice, p.avg_hd);
      os << buf;
    }
  }

  /// Two stacked line plots: avg dice and avg HD against lambda.
  std::string svg() const {
    const double W = 480, H = 200, pad = 48;
    double lmin = 0, lmax = 1e-12;
    for (const auto& p : points) lmax = std::max(lmax, p.lambda);
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" font-family=\"sans-serif\" "
                  "font-size=\"11\">\n",
                  W, 2 * H);
    os << buf;
    auto panel = [&](double y0, const char* name, auto value, const char* colour) {
      double vmin = 1e300, vmax = -1e300;
      for (const auto& p : points) vmin = std::min(vmin, value(p)), vmax = std::max(vmax, value(p));
      if (vmax - vmin < 1e-12) vmin -= 0.5, vmax += 0.5;
      auto px = [&](double l) { return pad + (l - lmin) / (lmax - lmin) * (W - 2 * pad); };
      auto py = [&](double v) { return y0 + H - pad + (vmin - v) / (vmax - vmin) * (H - 2 * pad); };
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"#999\"/>\n"
                    "<text x=\"%g\" y=\"%g\">%s vs lambda (%.4g to %.4g)</text>\n",
                    pad, y0 + pad, W - 2 * pad, H - 2 * pad, pad, y0 + pad - 8, name, vmin, vmax);
      os << buf << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
      for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(p.lambda), py(value(p)));
        os << buf;
      }
      os << "\"/>\n";
      for (const auto& p : points) {
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>"
                      "<text x=\"%.2f\" y=\"%g\" text-anchor=\"middle\">%g</text>\n",
                      px(p.lambda), py(value(p)), colour, px(p.lambda), y0 + H - pad + 14, p.lambda);
        os << buf;
      }
    };
    panel(0, "avg dice", [](const LambdaPoint& p) { return p.avg_dice; }, "#1f77b4");
    panel(H, "avg HD (mm)", [](const LambdaPoint& p) { return p.avg_hd; }, "#d62728");
    os << "</svg>\n";
    return os.str();
  }

  void write(const std::filesystem::path& dir) const {
    result.write(dir);
    std::ofstream c(dir / "lambda_curve.csv");
    write_csv(c);
    std::ofstream s(dir / "lambda_curve.svg");
    s << svg();
    if (!c || !s) throw Error(ErrorKind::io, "cannot write lambda curve to " + dir.string());
  }
};

inline LambdaCurve lambda_grid_search(const ExperimentConfig& base, const std::vector<double>& lambdas,
                                      const std::vector<std::uint64_t>& seeds, const Dataset& data,
                                      const ProgressFn& progress = {}) {
  if (lambdas.empty()) throw Error(ErrorKind::config, "lambda grid is empty");
  std::vector<Arm> arms;
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::config, "lambda values must be finite and >= 0");
    char label[32];
    std::snprintf(label, sizeof label, "lambda=%g", l);
    arms.push_back({label, [l](ExperimentConfig& c) {
                      c.mode = FusionMode::tri;
                      c.lambda = l;
                    }});
  }
  LambdaCurve curve;
  curve.result = run_arms(base, seeds, arms, data, "Lambda grid search (tri mode)", "lambda", progress);
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    curve.points.push_back(
        {lambdas[i], curve.result.table.rows[i].summary.avg_dice(), curve.result.table.rows[i].summary.avg_hd()});
  return curve;
}

}  // namespace trifuse
