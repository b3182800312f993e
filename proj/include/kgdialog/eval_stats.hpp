#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgdialog {

// ---------------------------------------------------------------------------
// Descriptive statistics and two-sample tests
// ---------------------------------------------------------------------------

double mean(std::span<const double> xs);
/// Unbiased (n-1) sample variance.
double sample_variance(std::span<const double> xs);

struct MannWhitneyResult {
  double u = 0;   ///< min(U_a, U_b)
  double ua = 0;  ///< U of the first sample
  double ub = 0;
  double z = 0;
  double p = 1;   ///< two-sided, normal approximation with tie and continuity correction
};

/// Ties get midranks. Throws StatsError on an empty sample.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

/// Largest U rejecting equality at two-sided level `alpha`, from the exact
/// null distribution of U (no ties); normal approximation above 50 per group.
/// Returns nothing when no U value is significant for these sizes.
std::optional<int> mann_whitney_u_critical(int n1, int n2, double alpha = 0.05);

struct WelchResult {
  double t = 0;
  double df = 0;
  double p = 1;
};

/// Throws StatsError when a sample has fewer than two values or both
/// variances vanish.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

/// Two-sided p of a Student-t statistic.
double student_t_two_sided_p(double t, double df);

struct Moments {
  double skewness = 0;  ///< bias-corrected G1
  double kurtosis = 0;  ///< bias-corrected excess G2
  bool isNormal = false;
};

inline constexpr double kNormalityLimit = 1.0;

/// Normal iff |skewness| <= 1 and |kurtosis| <= 1. Needs n >= 4 and
/// nonzero variance.
Moments moments_normality(std::span<const double> sample);

/// Rows are participants, columns items.
double cronbach_alpha(const std::vector<std::vector<double>>& matrix);

double pearson_r(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Coherence ratings
// ---------------------------------------------------------------------------

struct ExchangeRecord {
  std::string sessionId;
  int turn = 0;
  std::string userText;
  std::string systemText;
  std::optional<int> coherenceScore;
};

/// Mean over the rated replies of one participant.
double coherence_mean(std::span<const ExchangeRecord> records);
/// Mean of per-participant means.
double group_coherence(const std::vector<std::vector<ExchangeRecord>>& participants);

// ---------------------------------------------------------------------------
// SASSI questionnaire
// ---------------------------------------------------------------------------

inline constexpr int kSassiItems = 34;

inline int invert_likert(int score) { return 8 - score; }

struct SassiResponse {
  std::string participantId;
  int groupId = 1;
  std::vector<int> items;  ///< 34 raw scores, item 1 first
};

void validate_response(const SassiResponse& response);

struct SassiScale {
  std::string name;
  std::vector<int> items;     ///< 1-based
  std::vector<int> inverted;  ///< subset of items
};

using ScaleDefinition = std::vector<SassiScale>;

/// Accuracy 1-9, Likeability 10-18, Cognitive Demand 19-23, Annoyance
/// 24-28, Habitability 29-32, Speed 33-34; inverted items 2-5, 19, 21, 23,
/// 29, 31, 32, 34.
ScaleDefinition default_scales();
/// Items must partition 1..34 and inverted items must belong to their scale.
void validate_scales(const ScaleDefinition& scales);
ScaleDefinition scales_from_json(const nlohmann::json& doc);
nlohmann::json scales_to_json(const ScaleDefinition& scales);

/// Per-scale mean after inversion, in scale order.
std::vector<std::pair<std::string, double>> sassi_scores(const SassiResponse& response,
                                                         const ScaleDefinition& scales);

/// Participants x items matrix of one scale (inverted where prescribed),
/// the input to cronbach_alpha.
std::vector<std::vector<double>> scale_item_matrix(std::span<const SassiResponse> responses,
                                                   const SassiScale& scale);

/// CSV: participant,group,item1..item34 with an optional header row.
std::vector<SassiResponse> parse_sassi_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Group comparison table
// ---------------------------------------------------------------------------

inline constexpr double kSignificance = 0.05;

struct PairwiseComparison {
  std::string groupA;
  std::string groupB;
  double u = 0;
  std::optional<int> uCritical;
  double pMannWhitney = 1;
  std::optional<double> pWelch;  ///< only when both groups pass the normality gate
  bool normalA = false;
  bool normalB = false;
  bool significant = false;
};

/// Every unordered group pair in key order.
std::vector<PairwiseComparison> compare_groups(
    const std::map<std::string, std::vector<double>>& groups);

/// pair,U,U-critical,p-MWU,p-Welch (blank when not computed),significant
std::string comparison_table_csv(const std::vector<PairwiseComparison>& table);
nlohmann::json comparison_table_json(const std::vector<PairwiseComparison>& table);

}  // namespace kgdialog
