#include "dxrank/icdmap.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dxrank/errors.hpp"

namespace dxrank {

namespace {

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return static_cast<char>(std::toupper(c));
  });
  return s;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

bool parse_flag(const std::string& text, const std::string& where) {
  if (text == "0") return false;
  if (text == "1") return true;
  throw ParseError(where + ": flag must be 0 or 1, got \"" + text + "\"");
}

std::ifstream open_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

}  // namespace

const char* to_string(MapStage stage) {
  switch (stage) {
    case MapStage::kIcd9To10: return "icd9_to_10";
    case MapStage::kIcd10To11: return "icd10_to_11";
  }
  return "?";
}

const char* to_string(MapStatus status) {
  switch (status) {
    case MapStatus::kResolved: return "resolved";
    case MapStatus::kWithheldMultiCandidate: return "withheld_multi_candidate";
    case MapStatus::kWithheldInexact: return "withheld_inexact";
    case MapStatus::kExcludedNonDisease: return "excluded_non_disease";
  }
  return "?";
}

std::vector<GemRow> parse_gem(const std::filesystem::path& path) {
  std::ifstream in = open_lines(path);
  std::vector<GemRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    auto fields = split_tabs(line);
    if (fields.size() != 4)
      throw ParseError(where + ": expected source<TAB>target<TAB>exact<TAB>mappable");
    GemRow row;
    row.source = upper(fields[0]);
    row.target = upper(fields[1]);
    if (row.source.empty() || row.target.empty())
      throw ParseError(where + ": empty code");
    row.exact = parse_flag(fields[2], where);
    row.mappable = parse_flag(fields[3], where);
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_gem(std::span<const GemRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const GemRow& row : rows)
    out << row.source << '\t' << row.target << '\t' << (row.exact ? 1 : 0)
        << '\t' << (row.mappable ? 1 : 0) << '\n';
}

std::vector<GemRow> filter_exact_mappable(std::span<const GemRow> rows) {
  std::vector<GemRow> out;
  for (const GemRow& row : rows)
    if (row.exact && row.mappable) out.push_back(row);
  return out;
}

std::vector<MappingDecision> enforce_one_to_one(std::span<const GemRow> rows,
                                                MapStage stage) {
  // Distinct targets per source, in first-seen source order.
  std::vector<std::string> source_order;
  std::map<std::string, std::vector<std::string>> targets;
  for (const GemRow& row : rows) {
    auto& list = targets[row.source];
    if (list.empty()) source_order.push_back(row.source);
    if (std::find(list.begin(), list.end(), row.target) == list.end())
      list.push_back(row.target);
  }
  std::vector<MappingDecision> decisions;
  decisions.reserve(source_order.size());
  for (const std::string& source : source_order) {
    MappingDecision d;
    d.source = source;
    d.stage = stage;
    auto& list = targets[source];
    if (list.size() == 1) {
      d.status = MapStatus::kResolved;
      d.target = list.front();
    } else {
      d.status = MapStatus::kWithheldMultiCandidate;
      std::sort(list.begin(), list.end());
      d.candidates = list;
    }
    decisions.push_back(std::move(d));
  }
  return decisions;
}

std::vector<CodeInput> load_code_inputs(const std::filesystem::path& path) {
  std::ifstream in = open_lines(path);
  std::vector<CodeInput> inputs;
  std::unordered_set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    auto fields = split_tabs(line);
    if (fields.size() != 2)
      throw ParseError(where + ": expected code<TAB>version");
    CodeInput input;
    input.code = upper(fields[0]);
    if (input.code.empty()) throw ParseError(where + ": empty code");
    if (fields[1] == "9")
      input.version = 9;
    else if (fields[1] == "10")
      input.version = 10;
    else
      throw ValidationError(where + ": unknown version flag \"" + fields[1] +
                            "\" (expected 9 or 10)");
    if (!seen.insert(input.code).second)
      throw ValidationError(where + ": duplicate input code " + input.code);
    inputs.push_back(std::move(input));
  }
  return inputs;
}

std::set<std::string> load_code_set(const std::filesystem::path& path) {
  std::ifstream in = open_lines(path);
  std::set<std::string> codes;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string code;
    std::istringstream(line) >> code;
    if (!code.empty()) codes.insert(upper(code));
  }
  return codes;
}

std::vector<MappingDecision> chain_to_icd11(
    std::span<const MappingDecision> icd9_decisions,
    std::span<const GemRow> icd10_to_11_rows,
    std::span<const CodeInput> inputs,
    const std::set<std::string>& non_disease) {
  std::unordered_map<std::string, const MappingDecision*> stage1;
  for (const MappingDecision& d : icd9_decisions) stage1[d.source] = &d;

  std::unordered_map<std::string, const MappingDecision*> stage2;
  std::vector<MappingDecision> stage2_decisions =
      enforce_one_to_one(icd10_to_11_rows, MapStage::kIcd10To11);
  for (const MappingDecision& d : stage2_decisions) stage2[d.source] = &d;

  auto stage_decision = [](const std::unordered_map<std::string, const MappingDecision*>& table,
                           const std::string& code, MapStage stage) {
    auto it = table.find(code);
    if (it != table.end()) return *it->second;
    MappingDecision d;  // nothing survived filtering for this code
    d.source = code;
    d.status = MapStatus::kWithheldInexact;
    d.stage = stage;
    return d;
  };

  std::vector<MappingDecision> out;
  out.reserve(inputs.size());
  for (const CodeInput& input : inputs) {
    std::string icd10_code = input.code;
    if (input.version == 9) {
      MappingDecision first =
          stage_decision(stage1, input.code, MapStage::kIcd9To10);
      if (first.status != MapStatus::kResolved) {
        first.source = input.code;
        out.push_back(std::move(first));
        continue;
      }
      icd10_code = first.target;
    } else if (input.version != 10) {
      throw ValidationError("unknown version flag " +
                            std::to_string(input.version) + " for code " +
                            input.code);
    }
    MappingDecision second =
        stage_decision(stage2, icd10_code, MapStage::kIcd10To11);
    second.source = input.code;
    if (second.status == MapStatus::kResolved && non_disease.count(second.target))
      second.status = MapStatus::kExcludedNonDisease;
    out.push_back(std::move(second));
  }
  return out;
}

namespace {

std::vector<const MappingDecision*> sorted_by_source(
    std::span<const MappingDecision> decisions,
    bool (*keep)(const MappingDecision&)) {
  std::vector<const MappingDecision*> out;
  for (const MappingDecision& d : decisions)
    if (keep(d)) out.push_back(&d);
  std::sort(out.begin(), out.end(),
            [](const MappingDecision* a, const MappingDecision* b) {
              return a->source < b->source;
            });
  return out;
}

}  // namespace

void write_resolved(std::span<const MappingDecision> decisions,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "source\ticd11\n";
  for (const MappingDecision* d : sorted_by_source(decisions, [](const MappingDecision& d) {
         return d.status == MapStatus::kResolved;
       }))
    out << d->source << '\t' << d->target << '\n';
}

void write_review_queue(std::span<const MappingDecision> decisions,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "source\tstage\tcandidates\n";
  for (const MappingDecision* d : sorted_by_source(decisions, [](const MappingDecision& d) {
         return d.status == MapStatus::kWithheldMultiCandidate ||
                d.status == MapStatus::kWithheldInexact;
       })) {
    out << d->source << '\t' << to_string(d->stage) << '\t';
    for (std::size_t i = 0; i < d->candidates.size(); ++i) {
      if (i > 0) out << ',';
      out << d->candidates[i];
    }
    out << '\n';
  }
}

}  // namespace dxrank
