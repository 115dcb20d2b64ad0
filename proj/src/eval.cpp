#include "pixadapt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "pixadapt/error.hpp"

namespace pixadapt {

namespace {

using nlohmann::ordered_json;

void require_same_shape(const LabelMask& a, const LabelMask& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "mask " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                    " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

template <typename Pred>
double iou_where(const LabelMask& pred, const LabelMask& gt, Pred in_region) {
  require_same_shape(pred, gt);
  std::size_t inter = 0;
  std::size_t uni = 0;
  const auto p = pred.labels();
  const auto g = gt.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = in_region(p[i]);
    const bool b = in_region(g[i]);
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool within(const LocalizationCase& c, double radius) {
  if (!c.predicted) return false;
  const double dr = c.predicted->row - c.ground_truth.row;
  const double dc = c.predicted->col - c.ground_truth.col;
  return std::sqrt(dr * dr + dc * dc) < radius;
}

void check_ratio(const std::optional<double>& v, const std::string& where) {
  if (v && !(*v >= 0.0 && *v <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, where + " ratio outside [0, 1]");
  }
}

ordered_json metrics_json(const LabelMetrics& m) {
  ordered_json j;
  j["iou"] = m.iou ? ordered_json(*m.iou) : ordered_json(nullptr);
  j["localization_accuracy"] =
      m.localization_accuracy ? ordered_json(*m.localization_accuracy) : ordered_json(nullptr);
  j["cases"] = m.cases;
  return j;
}

LabelMetrics metrics_from_json(const ordered_json& j) {
  LabelMetrics m;
  if (!j.at("iou").is_null()) m.iou = j.at("iou").get<double>();
  if (!j.at("localization_accuracy").is_null()) {
    m.localization_accuracy = j.at("localization_accuracy").get<double>();
  }
  m.cases = j.at("cases").get<std::size_t>();
  return m;
}

std::string ratio_cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", *v);
  return buf;
}

}  // namespace

double iou(const LabelMask& pred, const LabelMask& gt) {
  return iou_where(pred, gt, [](std::uint8_t v) { return v != 0; });
}

double iou(const LabelMask& pred, const LabelMask& gt, int label) {
  return iou_where(pred, gt, [label](std::uint8_t v) { return v == label; });
}

double localization_accuracy(std::span<const LocalizationCase> cases, double radius,
                             CaseUnit unit) {
  if (cases.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "localization accuracy needs at least one case");
  }
  if (!(radius > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "localization radius must be > 0");
  }
  if (unit == CaseUnit::kSlice) {
    const auto hits = std::count_if(cases.begin(), cases.end(),
                                    [radius](const LocalizationCase& c) { return within(c, radius); });
    return static_cast<double>(hits) / static_cast<double>(cases.size());
  }
  std::map<std::pair<std::string, int>, bool> volumes;
  for (const LocalizationCase& c : cases) {
    auto [it, inserted] = volumes.try_emplace({c.volume, c.label}, true);
    it->second = it->second && within(c, radius);
  }
  const auto hits = std::count_if(volumes.begin(), volumes.end(),
                                  [](const auto& kv) { return kv.second; });
  return static_cast<double>(hits) / static_cast<double>(volumes.size());
}

LabelMask aggregate_binary_multilabel(std::span<const LabelClaim> claims) {
  if (claims.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "aggregation needs at least one label");
  }
  const LabelMask& first = claims.front().mask;
  std::set<int> labels;
  int max_label = 0;
  for (const LabelClaim& c : claims) {
    require_same_shape(first, c.mask);
    if (c.scores.height != first.height() || c.scores.width != first.width() ||
        c.channel < 0 || c.channel >= c.scores.channels) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "score map for label " + std::to_string(c.label) + " does not match its mask");
    }
    if (c.label < 1 || c.label > 255) {
      throw Error(ErrorCode::kLabelOutOfRange, "claim label must be in [1, 255]");
    }
    if (!labels.insert(c.label).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate label " + std::to_string(c.label));
    }
    max_label = std::max(max_label, c.label);
  }
  std::vector<const LabelClaim*> ordered;
  for (const LabelClaim& c : claims) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const LabelClaim* a, const LabelClaim* b) { return a->label < b->label; });

  std::vector<std::uint8_t> out(first.pixel_count(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double best = 0.0;
    bool claimed = false;
    for (const LabelClaim* c : ordered) {
      if (c->mask.labels()[i] == 0) continue;
      const double score = c->scores.at(i, c->channel);
      if (!claimed || score > best) {
        claimed = true;
        best = score;
        out[i] = static_cast<std::uint8_t>(c->label);
      }
    }
  }
  return LabelMask(first.height(), first.width(), max_label, std::move(out));
}

void emit_report(const MetricReport& report, const std::filesystem::path& path) {
  if (report.per_label.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "report has no per-label metrics");
  }
  for (const auto& [label, m] : report.per_label) {
    check_ratio(m.iou, "label " + std::to_string(label) + " iou");
    check_ratio(m.localization_accuracy, "label " + std::to_string(label) + " accuracy");
  }
  check_ratio(report.aggregate.iou, "aggregate iou");
  check_ratio(report.aggregate.localization_accuracy, "aggregate accuracy");

  ordered_json j;
  j["task"] = report.task;
  j["adapter"] = report.adapter;
  ordered_json per_label = ordered_json::object();
  for (const auto& [label, m] : report.per_label) per_label[std::to_string(label)] = metrics_json(m);
  j["per_label"] = per_label;
  j["aggregate"] = metrics_json(report.aggregate);
  j["radius"] = report.radius;
  j["seeds"] = report.seeds;
  j["config_hash"] = report.config_hash;
  detail::write_text_file(path, j.dump(2) + "\n");

  auto table_path = path;
  table_path.replace_extension(".txt");
  detail::write_text_file(table_path, format_report_table(report));
}

MetricReport read_report(const std::filesystem::path& path) {
  const std::string text = detail::read_text_file(path);
  try {
    const auto j = ordered_json::parse(text);
    MetricReport r;
    r.task = j.at("task").get<std::string>();
    r.adapter = j.at("adapter").get<std::string>();
    for (const auto& [key, value] : j.at("per_label").items()) {
      r.per_label[std::stoi(key)] = metrics_from_json(value);
    }
    r.aggregate = metrics_from_json(j.at("aggregate"));
    r.radius = j.at("radius").get<double>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.config_hash = j.at("config_hash").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
}

std::string format_report_table(const MetricReport& report) {
  std::ostringstream os;
  os << "task: " << report.task << "  adapter: " << report.adapter
     << "  radius: " << report.radius << "  config: " << report.config_hash << "\n";
  char line[128];
  std::snprintf(line, sizeof(line), "%-10s %8s %10s %7s\n", "label", "iou", "loc_acc", "cases");
  os << line;
  auto row = [&](const std::string& name, const LabelMetrics& m) {
    std::snprintf(line, sizeof(line), "%-10s %8s %10s %7zu\n", name.c_str(),
                  ratio_cell(m.iou).c_str(), ratio_cell(m.localization_accuracy).c_str(), m.cases);
    os << line;
  };
  for (const auto& [label, m] : report.per_label) row(std::to_string(label), m);
  row("aggregate", report.aggregate);
  return os.str();
}

}  // namespace pixadapt
