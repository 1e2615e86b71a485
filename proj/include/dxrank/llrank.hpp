#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dxrank/corpus.hpp"
#include "dxrank/provider.hpp"

namespace dxrank {

// Per-(report, label) scoring record. All quantities are nats per token.
// score = -l_cond + alpha * l_prior, except alpha = 0 which is exactly
// -l_cond (so an infinite prior cannot poison the collapsed case).
struct ScoreBreakdown {
  std::string label_code;
  double l_cond = 0.0;
  double l_prior = 0.0;
  double alpha = 0.0;
  double score = 0.0;
};

// One row of a ranking. l_cond/l_prior are present for likelihood-scored
// rankings and absent for baselines that rank by other keys.
struct RankedEntry {
  std::string code;
  double score = 0.0;
  std::optional<double> l_cond;
  std::optional<double> l_prior;
};

// Complete ranking of the catalog for one report: every label exactly once,
// score descending, ties broken by canonical catalog index.
struct RankedList {
  std::string report_id;
  std::vector<RankedEntry> entries;
};

/**
 * Cache of report-free per-token NLLs, keyed by (provider id, hash of the
 * report-free prefix). The prior is report-independent, so one value per
 * label serves a whole run. Reads are lock-free after the build phase; the
 * sidecar file round-trips through load/save.
 */
class PriorCache {
 public:
  PriorCache(ProviderId provider, std::string prefix_hash);

  // Movable so load() can return one; moves happen only before the cache
  // is shared across threads.
  PriorCache(PriorCache&& other) noexcept
      : provider_(std::move(other.provider_)),
        prefix_hash_(std::move(other.prefix_hash_)),
        entries_(std::move(other.entries_)) {}
  PriorCache& operator=(PriorCache&& other) noexcept {
    provider_ = std::move(other.provider_);
    prefix_hash_ = std::move(other.prefix_hash_);
    entries_ = std::move(other.entries_);
    return *this;
  }

  static PriorCache load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const ProviderId& provider() const { return provider_; }
  const std::string& prefix_hash() const { return prefix_hash_; }

  // CacheInvalidError when the cache was built under a different provider
  // or prompt; the caller must rebuild.
  void require_valid_for(const ProviderId& provider,
                         const std::string& prefix_hash) const;

  std::optional<double> lookup(const std::string& code) const;
  void insert(const std::string& code, double l_prior);
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, double>& entries() const { return entries_; }

 private:
  ProviderId provider_;
  std::string prefix_hash_;
  std::map<std::string, double> entries_;
  mutable std::mutex mutex_;
};

// (1/T) * sum_t -log p(y_t | rendered prompt, y_<t).
double conditional_nll(const Report& report, const Label& label,
                       const PromptTemplate& prompt, const Provider& provider);

// Same, with the report slot blanked; served from `cache` when possible.
double prior_nll(const Label& label, const PromptTemplate& prompt,
                 const Provider& provider, PriorCache& cache);

// -l_cond + alpha * l_prior. DomainError when alpha < 0.
double pmi_score(double l_cond, double l_prior, double alpha);

ScoreBreakdown score_label(const Report& report, const Label& label,
                           const PromptTemplate& prompt,
                           const Provider& provider, double alpha,
                           PriorCache& cache);

// Scores every catalog label and sorts. Label scoring may run on `threads`
// workers; the output is independent of the schedule.
RankedList rank_catalog(const Report& report, const LabelCatalog& catalog,
                        const PromptTemplate& prompt, const Provider& provider,
                        double alpha, PriorCache& cache, int threads = 1);

// Recombination core shared by rank_catalog, alpha_sweep and the shift/
// collapse properties: given per-label (l_cond, l_prior) in canonical
// catalog order, produce the ranking for one alpha.
RankedList rank_from_parts(const std::string& report_id,
                           const LabelCatalog& catalog,
                           const std::vector<double>& l_cond,
                           const std::vector<double>& l_prior, double alpha);

// One conditional pass per report plus one prior pass, reusable across
// alphas. l_cond[r][j] is report r against catalog label j.
struct ScoreParts {
  std::vector<std::string> report_ids;
  std::vector<std::vector<double>> l_cond;
  std::vector<double> l_prior;
};

ScoreParts compute_score_parts(const std::vector<Report>& reports,
                               const LabelCatalog& catalog,
                               const PromptTemplate& prompt,
                               const Provider& provider, PriorCache& cache,
                               int threads = 1);

}  // namespace dxrank
