#pragma once

// Minimal deterministic SVG line charts for training curves and ROC.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "vesselforge/metrics.hpp"
#include "vesselforge/train.hpp"

namespace vf::svg {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
  bool markers = true;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  std::vector<Series> series;
};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

/// Draws one panel into a w x h box whose top-left corner is (ox, oy).
inline std::string render_panel(const Panel& p, double ox, double oy, double w, double h) {
  const double ml = 60, mr = 15, mt = 30, mb = 45;
  const double pw = w - ml - mr, ph = h - mt - mb;
  const double xs = p.x1 > p.x0 ? p.x1 - p.x0 : 1.0, ys = p.y1 > p.y0 ? p.y1 - p.y0 : 1.0;
  auto X = [&](double v) { return ox + ml + (v - p.x0) / xs * pw; };
  auto Y = [&](double v) { return oy + mt + ph - (v - p.y0) / ys * ph; };

  std::string s;
  s += "<g>\n";
  s += "<text x=\"" + num(ox + w / 2) + "\" y=\"" + num(oy + 18) +
       "\" text-anchor=\"middle\" font-size=\"14\">" + escape(p.title) + "</text>\n";
  s += "<rect x=\"" + num(X(p.x0)) + "\" y=\"" + num(Y(p.y1)) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = p.x0 + xs * i / 4.0, yv = p.y0 + ys * i / 4.0;
    s += "<line x1=\"" + num(X(xv)) + "\" y1=\"" + num(Y(p.y0)) + "\" x2=\"" + num(X(xv)) + "\" y2=\"" +
         num(Y(p.y0) + 4) + "\" stroke=\"#000\"/>\n";
    s += "<text x=\"" + num(X(xv)) + "\" y=\"" + num(Y(p.y0) + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
         tick_label(xv) + "</text>\n";
    s += "<line x1=\"" + num(X(p.x0) - 4) + "\" y1=\"" + num(Y(yv)) + "\" x2=\"" + num(X(p.x0)) + "\" y2=\"" +
         num(Y(yv)) + "\" stroke=\"#000\"/>\n";
    s += "<text x=\"" + num(X(p.x0) - 6) + "\" y=\"" + num(Y(yv) + 3) + "\" text-anchor=\"end\" font-size=\"10\">" +
         tick_label(yv) + "</text>\n";
  }
  s += "<text x=\"" + num(X((p.x0 + p.x1) / 2)) + "\" y=\"" + num(oy + h - 8) +
       "\" text-anchor=\"middle\" font-size=\"12\">" + escape(p.x_label) + "</text>\n";
  s += "<text x=\"" + num(ox + 14) + "\" y=\"" + num(oy + mt + ph / 2) + "\" text-anchor=\"middle\" font-size=\"12\"" +
       " transform=\"rotate(-90 " + num(ox + 14) + " " + num(oy + mt + ph / 2) + ")\">" + escape(p.y_label) +
       "</text>\n";

  int legend_row = 0;
  for (const auto& ser : p.series) {
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (i) pts += ' ';
      pts += num(X(ser.x[i])) + "," + num(Y(ser.y[i]));
    }
    s += "<polyline class=\"series\" data-label=\"" + escape(ser.label) + "\" fill=\"none\" stroke=\"" + ser.color +
         "\" stroke-width=\"1.5\"" + (ser.dashed ? " stroke-dasharray=\"4 3\"" : "") + " points=\"" + pts + "\"/>\n";
    if (ser.markers)
      for (std::size_t i = 0; i < ser.x.size(); ++i)
        s += "<circle cx=\"" + num(X(ser.x[i])) + "\" cy=\"" + num(Y(ser.y[i])) + "\" r=\"2\" fill=\"" + ser.color +
             "\"/>\n";
    if (!ser.label.empty()) {
      const double ly = Y(p.y1) + 14 + 14 * legend_row++;
      const double lx = X(p.x1) - 110;
      s += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(lx + 18) + "\" y2=\"" + num(ly - 4) +
           "\" stroke=\"" + ser.color + "\" stroke-width=\"2\"" + (ser.dashed ? " stroke-dasharray=\"4 3\"" : "") +
           "/>\n";
      s += "<text x=\"" + num(lx + 24) + "\" y=\"" + num(ly) + "\" font-size=\"11\">" + escape(ser.label) + "</text>\n";
    }
  }
  s += "</g>\n";
  return s;
}

inline std::string document(const std::vector<Panel>& panels, double panel_w = 420, double panel_h = 320) {
  const double W = panel_w * panels.size();
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(panel_h) +
       "\" viewBox=\"0 0 " + num(W) + " " + num(panel_h) + "\" font-family=\"sans-serif\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) s += render_panel(panels[i], panel_w * i, 0, panel_w, panel_h);
  s += "</svg>\n";
  return s;
}

inline void fit_y(Panel& p, double pad_frac = 0.05) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& ser : p.series)
    for (double v : ser.y)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pad = (hi - lo) * pad_frac;
  p.y0 = lo - pad;
  p.y1 = hi + pad;
}

/// Accuracy (left) and loss (right) against epoch, train and validation.
inline std::string history_chart(const std::vector<TrainRecord>& rows) {
  Series ta{"train", "#1f77b4", {}, {}}, va{"validation", "#d62728", {}, {}, true};
  Series tl = ta, vl = va;
  for (const auto& r : rows) {
    for (auto* s : {&ta, &va, &tl, &vl}) s->x.push_back(r.epoch);
    ta.y.push_back(r.train_acc);
    va.y.push_back(r.val_acc);
    tl.y.push_back(r.train_loss);
    vl.y.push_back(r.val_loss);
  }
  const double x0 = rows.empty() ? 0 : rows.front().epoch, x1 = rows.empty() ? 1 : rows.back().epoch;
  Panel acc{"Accuracy", "epoch", "pixel accuracy", x0, x1 > x0 ? x1 : x0 + 1, 0, 1, {ta, va}};
  Panel loss{"Loss", "epoch", "binary cross-entropy", x0, x1 > x0 ? x1 : x0 + 1, 0, 1, {tl, vl}};
  fit_y(acc);
  fit_y(loss);
  return document({acc, loss});
}

inline std::string roc_chart(const std::vector<RocPoint>& pts, double auc) {
  Series curve{"AUC " + tick_label(auc), "#1f77b4", {}, {}, false, false};
  for (const auto& p : pts) {
    curve.x.push_back(p.fpr);
    curve.y.push_back(p.tpr);
  }
  Series chance{"", "#999", {0, 1}, {0, 1}, true, false};
  Panel p{"ROC", "false positive rate", "true positive rate", 0, 1, 0, 1, {chance, curve}};
  return document({p}, 420, 420);
}

}  // namespace vf::svg
