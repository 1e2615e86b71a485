#include "dxrank/corpus.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "json.hpp"

#include "dxrank/errors.hpp"
#include "dxrank/hash.hpp"

namespace dxrank {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

}  // namespace

LabelCatalog::LabelCatalog(std::vector<Label> labels)
    : labels_(std::move(labels)) {
  if (labels_.empty()) throw ValidationError("catalog: no labels");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const Label& label = labels_[i];
    if (label.code.empty())
      throw ValidationError("catalog: empty code at row " + std::to_string(i + 1));
    if (trim(label.name).empty())
      throw ValidationError("catalog: empty name for code " + label.code);
    auto [_, inserted] = by_code_.emplace(label.code, i);
    if (!inserted)
      throw ValidationError("catalog: duplicate code " + label.code);
  }
}

std::optional<std::size_t> LabelCatalog::index_of(std::string_view code) const {
  auto it = by_code_.find(std::string(code));
  if (it == by_code_.end()) return std::nullopt;
  return it->second;
}

void LabelCatalog::tokenize(const TokenizerRef& tokenizer) {
  for (Label& label : labels_) {
    label.token_ids = tokenizer.tokenize(label.name);
    if (label.token_ids.empty())
      throw ValidationError("catalog: label \"" + label.name +
                            "\" tokenizes to nothing under the active tokenizer");
  }
}

bool LabelCatalog::tokenized() const {
  for (const Label& label : labels_)
    if (label.token_ids.empty()) return false;
  return true;
}

PromptTemplate PromptTemplate::from_string(std::string text) {
  PromptTemplate t;
  auto pos = text.find(kSlot);
  if (pos == std::string::npos)
    throw ValidationError("prompt template has no {report} slot");
  if (text.find(kSlot, pos + kSlot.size()) != std::string::npos)
    throw ValidationError("prompt template has more than one {report} slot");
  t.text_ = std::move(text);
  t.slot_pos_ = pos;
  t.report_free_ = t.text_;
  t.report_free_.erase(pos, kSlot.size());
  return t;
}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_string(std::move(text));
}

std::string PromptTemplate::render(std::string_view report_text) const {
  std::string out = report_free_;
  out.insert(slot_pos_, report_text);
  return out;
}

std::string PromptTemplate::prefix_hash() const {
  return fnv1a64_hex(report_free_);
}

std::vector<Report> load_reports(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<Report> reports;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": malformed record: " + e.what());
    }
    if (!record.is_object() || !record.contains("id") ||
        !record.contains("text") || !record["id"].is_string() ||
        !record["text"].is_string())
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": record must be an object with string id and text");
    Report report;
    report.id = record["id"].get<std::string>();
    report.text = record["text"].get<std::string>();
    if (report.id.empty())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": empty report id");
    if (trim(report.text).empty())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": empty report text (id " + report.id + ")");
    if (!seen_ids.insert(report.id).second)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": duplicate report id " + report.id);
    if (record.contains("specialty") && record["specialty"].is_string())
      report.specialty = record["specialty"].get<std::string>();
    if (record.contains("gold_label") && record["gold_label"].is_string())
      report.gold_label = record["gold_label"].get<std::string>();
    reports.push_back(std::move(report));
  }
  return reports;
}

LabelCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<Label> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected code<TAB>name");
    Label label;
    label.code = line.substr(0, tab);
    label.name = line.substr(tab + 1);
    if (trim(label.name).empty())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": empty label name");
    labels.push_back(std::move(label));
  }
  return LabelCatalog(std::move(labels));
}

LabelCatalog load_catalog(const std::filesystem::path& path,
                          const TokenizerRef& tokenizer) {
  LabelCatalog catalog = load_catalog(path);
  catalog.tokenize(tokenizer);
  return catalog;
}

void save_catalog(const LabelCatalog& catalog,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const Label& label : catalog.labels())
    out << label.code << '\t' << label.name << '\n';
}

}  // namespace dxrank
