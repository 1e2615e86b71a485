#include "dxrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dxrank/errors.hpp"

namespace dxrank {

EvalRun EvalRun::build(const std::vector<RankedList>& rankings,
                       const std::vector<Report>& reports,
                       const LabelCatalog& catalog, std::vector<int> ks) {
  if (ks.empty()) throw DomainError("eval: ks must be non-empty");
  for (std::size_t i = 1; i < ks.size(); ++i)
    if (ks[i] <= ks[i - 1])
      throw DomainError("eval: ks must be strictly increasing");

  std::map<std::string, const Report*> by_id;
  for (const Report& r : reports) by_id[r.id] = &r;

  EvalRun run;
  run.ks_ = std::move(ks);
  run.catalog_size_ = catalog.size();
  for (const Label& label : catalog.labels())
    run.catalog_codes_.push_back(label.code);

  for (const RankedList& list : rankings) {
    auto it = by_id.find(list.report_id);
    if (it == by_id.end())
      throw ValidationError("eval: ranking for unknown report id " +
                            list.report_id);
    const Report& report = *it->second;
    if (!report.gold_label) {
      ++run.warnings_.missing_gold;
      continue;
    }
    if (!catalog.contains(*report.gold_label)) {
      ++run.warnings_.gold_not_in_catalog;
      continue;
    }
    if (list.entries.size() != catalog.size())
      throw ValidationError("eval: ranking for " + list.report_id +
                            " does not cover the catalog (" +
                            std::to_string(list.entries.size()) + " of " +
                            std::to_string(catalog.size()) + ")");
    Entry entry;
    entry.ranked_codes.reserve(list.entries.size());
    for (const RankedEntry& e : list.entries) entry.ranked_codes.push_back(e.code);
    entry.gold = *report.gold_label;
    entry.specialty = report.specialty;
    auto [_, inserted] = run.entries_.emplace(list.report_id, std::move(entry));
    if (!inserted)
      throw ValidationError("eval: duplicate ranking for report id " +
                            list.report_id);
  }
  return run;
}

namespace {

bool gold_in_top_k(const EvalRun::Entry& entry, int k) {
  const std::size_t upto =
      std::min<std::size_t>(static_cast<std::size_t>(k), entry.ranked_codes.size());
  for (std::size_t i = 0; i < upto; ++i)
    if (entry.ranked_codes[i] == entry.gold) return true;
  return false;
}

}  // namespace

double hit_at_k(const EvalRun& run, int k) {
  if (k < 1) throw DomainError("hit_at_k: k must be >= 1");
  if (run.entries().empty()) throw DomainError("hit_at_k: empty run");
  std::size_t hits = 0;
  for (const auto& [_, entry] : run.entries())
    if (gold_in_top_k(entry, k)) ++hits;
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(run.entries().size());
}

double macro_f1_at_k(const EvalRun& run, int k, MacroClasses classes) {
  if (k < 1) throw DomainError("macro_f1_at_k: k must be >= 1");
  if (run.entries().empty()) throw DomainError("macro_f1_at_k: empty run");

  std::set<std::string> class_set;
  if (classes == MacroClasses::kAllCatalog) {
    class_set.insert(run.catalog_codes().begin(), run.catalog_codes().end());
  } else {
    for (const auto& [_, entry] : run.entries()) class_set.insert(entry.gold);
  }

  // Per class: TP = gold=c and c predicted, FP = gold!=c and c predicted,
  // FN = gold=c and c not predicted, where "predicted" is top-k membership.
  std::map<std::string, int> tp, fp, fn;
  for (const auto& [_, entry] : run.entries()) {
    const std::size_t upto = std::min<std::size_t>(
        static_cast<std::size_t>(k), entry.ranked_codes.size());
    bool gold_predicted = false;
    for (std::size_t i = 0; i < upto; ++i) {
      const std::string& code = entry.ranked_codes[i];
      if (code == entry.gold) {
        gold_predicted = true;
        ++tp[code];
      } else {
        ++fp[code];
      }
    }
    if (!gold_predicted) ++fn[entry.gold];
  }

  double sum = 0.0;
  for (const std::string& c : class_set) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    sum += denom == 0.0 ? 0.0 : 2.0 * tp[c] / denom;
  }
  return 100.0 * sum / static_cast<double>(class_set.size());
}

std::optional<double> relative_improvement(double m1, double m2) {
  if (m1 < 0.0) throw DomainError("relative_improvement: m1 must be >= 0");
  if (m1 == 0.0) return std::nullopt;
  return 100.0 * (m2 - m1) / m1;
}

double mean_improvement(std::span<const double> deltas) {
  if (deltas.empty()) throw DomainError("mean_improvement: empty list");
  double sum = 0.0;
  for (double d : deltas) sum += d;
  return sum / static_cast<double>(deltas.size());
}

std::map<std::string, double> per_specialty_hit(const EvalRun& run, int k) {
  if (k < 1) throw DomainError("per_specialty_hit: k must be >= 1");
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // hits, total
  for (const auto& [_, entry] : run.entries()) {
    const std::string group = entry.specialty.value_or("unspecified");
    auto& [hits, total] = counts[group];
    ++total;
    if (gold_in_top_k(entry, k)) ++hits;
  }
  std::map<std::string, double> out;
  for (const auto& [group, ht] : counts)
    out[group] = 100.0 * static_cast<double>(ht.first) /
                 static_cast<double>(ht.second);
  return out;
}

std::string format_percent(double value, int decimals) {
  const double factor = std::pow(10.0, decimals);
  double rounded = std::round(value * factor) / factor;
  if (rounded == 0.0) rounded = 0.0;  // normalize -0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, rounded);
  return buf;
}

ComparisonDeltas comparison_deltas(const ComparisonReport& report) {
  ComparisonDeltas deltas;
  std::map<std::string, std::vector<double>> defined;
  for (const ModelComparison& model : report.models) {
    std::map<std::string, std::optional<double>> row;
    for (int k : report.ks) {
      for (const char* kind : {"hit", "macro_f1"}) {
        const auto& m1 = kind == std::string("hit") ? model.m1.hit : model.m1.macro_f1;
        const auto& m2 = kind == std::string("hit") ? model.m2.hit : model.m2.macro_f1;
        const std::string column = std::string(kind) + "@" + std::to_string(k);
        auto delta = relative_improvement(m1.at(k), m2.at(k));
        row[column] = delta;
        if (delta) defined[column].push_back(*delta);
      }
    }
    deltas.per_model.push_back(std::move(row));
  }
  for (int k : report.ks) {
    for (const char* kind : {"hit", "macro_f1"}) {
      const std::string column = std::string(kind) + "@" + std::to_string(k);
      auto it = defined.find(column);
      deltas.mean[column] = it == defined.end() || it->second.empty()
                                ? std::nullopt
                                : std::optional<double>(mean_improvement(it->second));
    }
  }
  return deltas;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string delta_cell(const std::optional<double>& delta) {
  return delta ? format_percent(*delta) + "%" : "n/a";
}

void append_row(std::string& out, const std::vector<std::string>& cells,
                const std::vector<std::size_t>& widths) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out += "  ";
    out += cells[i];
    if (i + 1 < cells.size())
      out.append(widths[i] > cells[i].size() ? widths[i] - cells[i].size() : 0,
                 ' ');
  }
  out += '\n';
}

}  // namespace

std::string render_comparison_table(const ComparisonReport& report) {
  ComparisonDeltas deltas = comparison_deltas(report);

  std::vector<std::string> columns;
  std::vector<std::string> header = {"Model", "Scoring"};
  for (int k : report.ks) {
    columns.push_back("hit@" + std::to_string(k));
    columns.push_back("macro_f1@" + std::to_string(k));
    header.push_back("Hit@" + std::to_string(k));
    header.push_back("Macro-F1@" + std::to_string(k));
  }

  std::vector<std::vector<std::string>> rows;
  rows.push_back(header);
  for (std::size_t i = 0; i < report.models.size(); ++i) {
    const ModelComparison& model = report.models[i];
    std::vector<std::string> m1_row = {model.model, "M1"};
    std::vector<std::string> m2_row = {"", "M2"};
    std::vector<std::string> delta_row = {"", "Delta"};
    for (int k : report.ks) {
      m1_row.push_back(fixed2(model.m1.hit.at(k)));
      m1_row.push_back(fixed2(model.m1.macro_f1.at(k)));
      m2_row.push_back(fixed2(model.m2.hit.at(k)));
      m2_row.push_back(fixed2(model.m2.macro_f1.at(k)));
      delta_row.push_back(
          delta_cell(deltas.per_model[i].at("hit@" + std::to_string(k))));
      delta_row.push_back(
          delta_cell(deltas.per_model[i].at("macro_f1@" + std::to_string(k))));
    }
    rows.push_back(std::move(m1_row));
    rows.push_back(std::move(m2_row));
    rows.push_back(std::move(delta_row));
  }
  std::vector<std::string> mean_row = {"Mean delta", ""};
  for (const std::string& column : columns)
    mean_row.push_back(delta_cell(deltas.mean.at(column)));
  rows.push_back(std::move(mean_row));

  std::vector<std::size_t> widths(rows[0].size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i)
      widths[i] = std::max(widths[i], row[i].size());

  std::string out;
  for (const auto& row : rows) append_row(out, row, widths);
  return out;
}

std::string comparison_json(const ComparisonReport& report) {
  ComparisonDeltas deltas = comparison_deltas(report);
  nlohmann::ordered_json doc;
  doc["ks"] = report.ks;
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.models.size(); ++i) {
    const ModelComparison& model = report.models[i];
    nlohmann::ordered_json entry;
    entry["model"] = model.model;
    for (const char* kind : {"m1", "m2"}) {
      const MethodMetrics& mm = kind == std::string("m1") ? model.m1 : model.m2;
      nlohmann::ordered_json metrics;
      for (int k : report.ks) {
        metrics["hit@" + std::to_string(k)] = mm.hit.at(k);
        metrics["macro_f1@" + std::to_string(k)] = mm.macro_f1.at(k);
      }
      entry[kind] = std::move(metrics);
    }
    nlohmann::ordered_json delta_obj;
    for (const auto& [column, delta] : deltas.per_model[i])
      delta_obj[column] = delta ? nlohmann::ordered_json(*delta)
                                : nlohmann::ordered_json(nullptr);
    entry["delta"] = std::move(delta_obj);
    models.push_back(std::move(entry));
  }
  doc["models"] = std::move(models);
  nlohmann::ordered_json mean_obj;
  for (const auto& [column, delta] : deltas.mean)
    mean_obj[column] = delta ? nlohmann::ordered_json(*delta)
                             : nlohmann::ordered_json(nullptr);
  doc["mean_delta"] = std::move(mean_obj);
  return doc.dump(2) + "\n";
}

}  // namespace dxrank
