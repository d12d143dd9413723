#include "aprlab/report.h"

#include "aprlab/io.h"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <iterator>
#include <map>
#include <sstream>

namespace aprlab {
namespace {

using nlohmann::json;

json pose_json(const Posed& p) {
  return {{"position", {p.position().x(), p.position().y(), p.position().z()}},
          {"orientation",
           {p.orientation()[0], p.orientation()[1], p.orientation()[2], p.orientation()[3]}}};
}

Posed pose_from_json(const json& j) {
  const auto& c = j.at("position");
  const auto& q = j.at("orientation");
  return Posed(Vector3d(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()),
               Vector4d(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                        q.at(3).get<double>()));
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

EvalReport make_report(std::string method, std::string scenario,
                       std::vector<EvalRecord> records) {
  EvalReport r;
  r.method = std::move(method);
  r.scenario = std::move(scenario);
  r.records = std::move(records);
  std::vector<PoseError> localized;
  for (auto& rec : r.records) {
    if (rec.estimate) {
      rec.error = pose_error(*rec.estimate, rec.truth);
      localized.push_back(rec.error);
    } else {
      rec.error = {};
    }
  }
  if (!localized.empty()) {
    const auto [pos, rot] = median_errors(localized);
    r.median_position = pos;
    r.median_orientation = rot;
  }
  r.localization_rate = r.records.empty() ? 0.0
                                          : static_cast<double>(localized.size()) /
                                                static_cast<double>(r.records.size());
  return r;
}

std::string report_to_json(const EvalReport& report) {
  json records = json::array();
  for (const auto& rec : report.records) {
    json j = {{"image_id", rec.image_id}, {"truth", pose_json(rec.truth)},
              {"localized", rec.estimate.has_value()}};
    if (rec.estimate) {
      j["estimate"] = pose_json(*rec.estimate);
      j["position_error"] = rec.error.position_err;
      j["orientation_error"] = rec.error.orientation_err;
    }
    records.push_back(std::move(j));
  }
  json doc = {{"method", report.method},
              {"scenario", report.scenario},
              {"localization_rate", report.localization_rate},
              {"records", std::move(records)}};
  doc["median_position"] = report.median_position ? json(*report.median_position) : json(nullptr);
  doc["median_orientation"] =
      report.median_orientation ? json(*report.median_orientation) : json(nullptr);
  return doc.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("report: ") + e.what());
  }
  try {
    std::vector<EvalRecord> records;
    for (const auto& j : doc.at("records")) {
      EvalRecord rec;
      rec.image_id = j.at("image_id").get<std::string>();
      rec.truth = pose_from_json(j.at("truth"));
      if (j.at("localized").get<bool>()) rec.estimate = pose_from_json(j.at("estimate"));
      records.push_back(std::move(rec));
    }
    return make_report(doc.at("method").get<std::string>(), doc.at("scenario").get<std::string>(),
                       std::move(records));
  } catch (const json::exception& e) {
    throw Error(std::string("report: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const EvalReport& report) {
  auto out = detail::open_output(path);
  out << report_to_json(report);
}

EvalReport load_report(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return report_from_json(std::string(std::istreambuf_iterator<char>(in), {}));
}

std::string report_table(const EvalReport& report) {
  std::size_t id_width = 8;
  for (const auto& rec : report.records) id_width = std::max(id_width, rec.image_id.size());
  std::ostringstream out;
  out << pad_right("image_id", id_width) << "  position_m  orientation_deg\n";
  for (const auto& rec : report.records) {
    out << pad_right(rec.image_id, id_width) << "  ";
    if (rec.estimate) {
      out << pad_right(fixed(rec.error.position_err, 4), 10) << "  "
          << fixed(rec.error.orientation_err, 4) << "\n";
    } else {
      out << "failed\n";
    }
  }
  out << "method " << report.method << "  scenario " << report.scenario << "  median ";
  if (report.median_position) {
    out << format_cell(*report.median_position, *report.median_orientation);
  } else {
    out << "n/a";
  }
  out << "  localization_rate " << fixed(report.localization_rate, 4) << "\n";
  return out.str();
}

std::string format_cell(double position, double orientation) {
  return fixed(position, 2) + " / " + fixed(orientation, 2);
}

std::string summary_table(std::span<const EvalReport> reports) {
  if (reports.empty()) throw Error("table: no reports");
  std::vector<std::string> methods, scenarios;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  const auto remember = [](std::vector<std::string>& list, const std::string& s) {
    if (std::find(list.begin(), list.end(), s) == list.end()) list.push_back(s);
  };
  for (const auto& r : reports) {
    remember(methods, r.method);
    remember(scenarios, r.scenario);
    cells[{r.method, r.scenario}] =
        r.median_position ? format_cell(*r.median_position, *r.median_orientation) : "n/a";
  }

  std::size_t first = 6;
  for (const auto& m : methods) first = std::max(first, m.size());
  std::vector<std::size_t> widths;
  for (const auto& s : scenarios) {
    std::size_t w = s.size();
    for (const auto& m : methods) {
      const auto it = cells.find({m, s});
      if (it != cells.end()) w = std::max(w, it->second.size());
    }
    widths.push_back(w);
  }

  std::ostringstream out;
  const auto emit_row = [&](const std::string& head, const std::vector<std::string>& row) {
    std::string line = pad_right(head, first);
    for (std::size_t i = 0; i < row.size(); ++i) line += " | " + pad_right(row[i], widths[i]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << "\n";
  };
  emit_row("method", scenarios);
  std::string rule(first, '-');
  for (const auto w : widths) rule += "-+-" + std::string(w, '-');
  out << rule << "\n";
  for (const auto& m : methods) {
    std::vector<std::string> row;
    for (const auto& s : scenarios) {
      const auto it = cells.find({m, s});
      row.push_back(it == cells.end() ? std::string() : it->second);
    }
    emit_row(m, row);
  }
  return out.str();
}

}  // namespace aprlab
