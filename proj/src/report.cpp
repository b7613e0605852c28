#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

#include "igsgenre/error.hpp"
#include "igsgenre/eval.hpp"

namespace igsgenre::eval {

namespace {

nlohmann::json window_json(const DecisionWindowSpec& w) {
  return {{"label", w.label()},
          {"kind", w.kind == DecisionWindowSpec::Kind::whole_clip ? "whole_clip" : "seconds"},
          {"seconds", w.seconds}};
}

DecisionWindowSpec window_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "whole_clip") return DecisionWindowSpec::whole_clip();
  if (kind == "seconds") return DecisionWindowSpec::of_seconds(j.at("seconds").get<double>());
  throw PersistenceError("unknown window kind '" + kind + "'");
}

nlohmann::json fold_json(const WindowEvaluation& f) {
  return {{"train_fold", f.train_fold},
          {"test_fold", f.test_fold},
          {"ccr", f.ccr},
          {"empty", f.empty},
          {"windows", f.windows},
          {"confusion", f.confusion},
          {"eliminated_fraction", f.eliminated_fraction},
          {"short_clips", f.short_clips}};
}

WindowEvaluation fold_from_json(const nlohmann::json& j) {
  WindowEvaluation f;
  f.train_fold = j.at("train_fold").get<std::string>();
  f.test_fold = j.at("test_fold").get<std::string>();
  f.ccr = j.at("ccr").get<double>();
  f.empty = j.at("empty").get<bool>();
  f.windows = j.at("windows").get<std::uint64_t>();
  f.confusion = j.at("confusion").get<Confusion>();
  f.eliminated_fraction = j.at("eliminated_fraction").get<std::vector<double>>();
  f.short_clips = j.at("short_clips").get<std::vector<std::string>>();
  return f;
}

std::string cell_text(const ReportCell* c) {
  if (c == nullptr || c->empty) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", c->ccr);
  return buf;
}

std::string variant_heading(igs::Variant v) {
  switch (v) {
    case igs::Variant::flat: return "Flat";
    case igs::Variant::igs: return "IGS";
    case igs::Variant::smigs: return "SMIGS";
    case igs::Variant::iigs: return "IIGS";
  }
  return "?";
}

}  // namespace

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json doc;
  doc["schema_version"] = kReportSchema;
  doc["genre_labels"] = report.genre_labels;
  doc["config"] = report.config;
  doc["cells"] = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json cell = {{"variant", igs::to_string(c.variant)},
                           {"k", c.k},
                           {"window", window_json(c.window)},
                           {"ccr", c.ccr},
                           {"empty", c.empty},
                           {"confusion", c.confusion},
                           {"eliminated_fraction", c.eliminated_fraction},
                           {"folds", nlohmann::json::array()}};
    for (const auto& f : c.folds) cell["folds"].push_back(fold_json(f));
    doc["cells"].push_back(std::move(cell));
  }
  return doc;
}

EvaluationReport report_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object() || doc.value("schema_version", std::string()) != kReportSchema)
      throw PersistenceError("report document version is not '" + std::string(kReportSchema) + "'");
    EvaluationReport r;
    r.genre_labels = doc.at("genre_labels").get<std::vector<std::string>>();
    r.config = doc.at("config");
    for (const auto& c : doc.at("cells")) {
      ReportCell cell;
      cell.variant = igs::parse_variant(c.at("variant").get<std::string>());
      cell.k = c.at("k").get<std::size_t>();
      cell.window = window_from_json(c.at("window"));
      cell.ccr = c.at("ccr").get<double>();
      cell.empty = c.at("empty").get<bool>();
      cell.confusion = c.at("confusion").get<Confusion>();
      cell.eliminated_fraction = c.at("eliminated_fraction").get<std::vector<double>>();
      for (const auto& f : c.at("folds")) cell.folds.push_back(fold_from_json(f));
      r.cells.push_back(std::move(cell));
    }
    return r;
  } catch (const PersistenceError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError(std::string("malformed report document: ") + e.what());
  } catch (const Error& e) {
    throw PersistenceError(std::string("invalid report document: ") + e.what());
  }
}

std::string render_json(const EvaluationReport& report) { return to_json(report).dump(1) + "\n"; }

std::string render_text(const EvaluationReport& report) {
  std::ostringstream out;
  std::vector<std::size_t> ks;
  for (const auto& c : report.cells)
    if (std::find(ks.begin(), ks.end(), c.k) == ks.end()) ks.push_back(c.k);
  std::sort(ks.begin(), ks.end());

  for (std::size_t k : ks) {
    std::vector<DecisionWindowSpec> windows;
    std::set<igs::Variant> present;
    for (const auto& c : report.cells) {
      if (c.k != k) continue;
      present.insert(c.variant);
      if (std::find(windows.begin(), windows.end(), c.window) == windows.end()) windows.push_back(c.window);
    }
    std::vector<igs::Variant> columns;
    for (auto v : igs::kReportOrder)
      if (present.count(v)) columns.push_back(v);

    out << "Correct classification rates (%), " << k << "-mixture GMM\n";
    out << std::left << std::setw(12) << "Window";
    for (auto v : columns) out << std::right << std::setw(9) << variant_heading(v);
    out << '\n';
    for (const auto& w : windows) {
      out << std::left << std::setw(12) << w.label();
      for (auto v : columns) out << std::right << std::setw(9) << cell_text(report.find(v, k, w));
      out << '\n';
    }
    out << '\n';
  }

  for (const auto& c : report.cells) {
    out << "Confusion " << variant_heading(c.variant) << ", k=" << c.k << ", window " << c.window.label();
    if (!c.folds.empty()) {
      out << " (fold CCRs:";
      for (const auto& f : c.folds) {
        char buf[64];
        if (f.empty) std::snprintf(buf, sizeof buf, " %s->%s empty", f.train_fold.c_str(), f.test_fold.c_str());
        else std::snprintf(buf, sizeof buf, " %s->%s %.2f", f.train_fold.c_str(), f.test_fold.c_str(), f.ccr);
        out << buf;
      }
      out << ")";
    }
    out << '\n';
    std::size_t width = 8;
    for (const auto& g : report.genre_labels) width = std::max(width, g.size() + 2);
    out << std::left << std::setw(static_cast<int>(width)) << "true\\dec";
    for (const auto& g : report.genre_labels) out << std::right << std::setw(static_cast<int>(width)) << g;
    out << '\n';
    for (std::size_t i = 0; i < c.confusion.size(); ++i) {
      out << std::left << std::setw(static_cast<int>(width)) << report.genre_labels.at(i);
      for (auto v : c.confusion[i]) out << std::right << std::setw(static_cast<int>(width)) << v;
      out << '\n';
    }
    std::set<std::string> short_clips;
    for (const auto& f : c.folds) short_clips.insert(f.short_clips.begin(), f.short_clips.end());
    if (!short_clips.empty()) out << "  clips shorter than the window: " << short_clips.size() << '\n';
    out << '\n';
  }
  return out.str();
}

}  // namespace igsgenre::eval
