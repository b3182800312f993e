#include "kgdialog/eval_stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "kgdialog/errors.hpp"

namespace kgdialog {

using nlohmann::json;

double mean(std::span<const double> xs) {
  if (xs.empty()) throw StatsError("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw StatsError("variance needs at least two values");
  const double m = mean(xs);
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw StatsError("Mann-Whitney U needs two nonempty samples");
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;

  std::vector<std::pair<double, bool>> pooled;  // value, from a
  pooled.reserve(n);
  for (double x : a) pooled.emplace_back(x, true);
  for (double x : b) pooled.emplace_back(x, false);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });

  double rank_sum_a = 0;
  double tie_term = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].second) rank_sum_a += midrank;
    }
    i = j;
  }

  MannWhitneyResult r;
  const double dna = static_cast<double>(na), dnb = static_cast<double>(nb);
  const double dn = static_cast<double>(n);
  r.ua = rank_sum_a - dna * (dna + 1) / 2.0;
  r.ub = dna * dnb - r.ua;
  r.u = std::min(r.ua, r.ub);

  const double variance =
      dna * dnb / 12.0 * ((dn + 1) - (n > 1 ? tie_term / (dn * (dn - 1)) : 0.0));
  if (variance <= 0) {
    r.z = 0;
    r.p = 1;
    return r;
  }
  const double deviation = std::max(0.0, std::abs(r.ua - dna * dnb / 2.0) - 0.5);
  r.z = deviation / std::sqrt(variance);
  r.p = std::min(1.0, std::erfc(r.z / std::sqrt(2.0)));
  return r;
}

std::optional<int> mann_whitney_u_critical(int n1, int n2, double alpha) {
  if (n1 < 1 || n2 < 1) throw StatsError("group sizes must be positive");
  if (n1 > n2) std::swap(n1, n2);
  const int max_u = n1 * n2;
  if (n2 > 50) {
    const double mu = n1 * n2 / 2.0;
    const double sigma = std::sqrt(n1 * n2 * (n1 + n2 + 1) / 12.0);
    const double z = boost::math::quantile(boost::math::normal(), 1 - alpha / 2);
    const int u = static_cast<int>(std::floor(mu - z * sigma - 0.5));
    return u >= 0 ? std::optional<int>(u) : std::nullopt;
  }
  // counts[m][k][u]: arrangements of m first-sample and k second-sample
  // values giving U = u, via f(u;m,k) = f(u-k;m-1,k) + f(u;m,k-1).
  std::vector<std::vector<std::vector<double>>> counts(
      n1 + 1, std::vector<std::vector<double>>(n2 + 1));
  for (int m = 0; m <= n1; ++m) {
    for (int k = 0; k <= n2; ++k) {
      auto& f = counts[m][k];
      f.assign(m * k + 1, 0.0);
      if (m == 0 || k == 0) {
        f[0] = 1;
        continue;
      }
      for (int u = 0; u <= m * k; ++u) {
        double v = 0;
        if (u - k >= 0 && u - k <= (m - 1) * k) v += counts[m - 1][k][u - k];
        if (u <= m * (k - 1)) v += counts[m][k - 1][u];
        f[u] = v;
      }
    }
  }
  const auto& f = counts[n1][n2];
  const double total = std::accumulate(f.begin(), f.end(), 0.0);
  double cumulative = 0;
  std::optional<int> critical;
  for (int u = 0; u <= max_u; ++u) {
    cumulative += f[u];
    if (cumulative / total <= alpha / 2) {
      critical = u;
    } else {
      break;
    }
  }
  return critical;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0)) throw StatsError("degrees of freedom must be positive");
  if (t == 0) return 1.0;
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw StatsError("Welch's t needs two values per sample");
  const double va = sample_variance(a) / static_cast<double>(a.size());
  const double vb = sample_variance(b) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (se2 <= 0) throw StatsError("Welch's t undefined: both samples have zero variance");
  WelchResult r;
  r.t = (mean(a) - mean(b)) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

Moments moments_normality(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 4) throw StatsError("skewness and kurtosis need at least four values");
  const double m = mean(sample);
  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : sample) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double dn = static_cast<double>(n);
  m2 /= dn;
  m3 /= dn;
  m4 /= dn;
  if (m2 <= 0) throw StatsError("moments undefined for a constant sample");
  const double g1 = m3 / std::pow(m2, 1.5);
  const double g2 = m4 / (m2 * m2) - 3.0;
  Moments r;
  r.skewness = g1 * std::sqrt(dn * (dn - 1)) / (dn - 2);
  r.kurtosis = (dn - 1) / ((dn - 2) * (dn - 3)) * ((dn + 1) * g2 + 6.0);
  r.isNormal = std::abs(r.skewness) <= kNormalityLimit && std::abs(r.kurtosis) <= kNormalityLimit;
  return r;
}

double cronbach_alpha(const std::vector<std::vector<double>>& matrix) {
  if (matrix.size() < 2) throw StatsError("Cronbach's alpha needs at least two participants");
  const std::size_t k = matrix.front().size();
  if (k < 2) throw StatsError("Cronbach's alpha needs at least two items");
  for (const auto& row : matrix) {
    if (row.size() != k) throw StatsError("ragged item matrix");
  }
  const double n = static_cast<double>(matrix.size());
  // n * sum(x^2) - sum(x)^2 is the variance up to the common factor
  // 1/(n(n-1)), which cancels in the ratio.
  auto scaled_variance = [n](double sum, double sum_sq) { return n * sum_sq - sum * sum; };
  double item_sum = 0;
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0, s2 = 0;
    for (const auto& row : matrix) {
      s += row[j];
      s2 += row[j] * row[j];
    }
    item_sum += scaled_variance(s, s2);
  }
  double t = 0, t2 = 0;
  for (const auto& row : matrix) {
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    t += total;
    t2 += total * total;
  }
  const double total_var = scaled_variance(t, t2);
  if (total_var <= 0) throw StatsError("Cronbach's alpha undefined: total score is constant");
  const double dk = static_cast<double>(k);
  return dk * (total_var - item_sum) / ((dk - 1) * total_var);
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatsError("Pearson's r needs paired samples");
  if (x.size() < 2) throw StatsError("Pearson's r needs at least two pairs");
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0 || syy <= 0) throw StatsError("Pearson's r undefined for a constant sample");
  return sxy / std::sqrt(sxx * syy);
}

double coherence_mean(std::span<const ExchangeRecord> records) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.coherenceScore) continue;
    if (*r.coherenceScore < 1 || *r.coherenceScore > 7) {
      throw ValidationError(r.sessionId, "coherence score out of 1..7");
    }
    sum += *r.coherenceScore;
    ++n;
  }
  if (n == 0) throw StatsError("no rated replies");
  return sum / static_cast<double>(n);
}

double group_coherence(const std::vector<std::vector<ExchangeRecord>>& participants) {
  std::vector<double> means;
  means.reserve(participants.size());
  for (const auto& p : participants) means.push_back(coherence_mean(p));
  return mean(means);
}

void validate_response(const SassiResponse& response) {
  if (response.items.size() != kSassiItems) {
    throw ValidationError(response.participantId,
                          "SASSI response of '" + response.participantId + "' has " +
                              std::to_string(response.items.size()) + " items, expected 34");
  }
  for (std::size_t i = 0; i < response.items.size(); ++i) {
    if (response.items[i] < 1 || response.items[i] > 7) {
      throw ValidationError(response.participantId,
                            "item " + std::to_string(i + 1) + " of '" + response.participantId +
                                "' is outside 1..7");
    }
  }
}

ScaleDefinition default_scales() {
  auto range = [](int first, int last) {
    std::vector<int> v(static_cast<std::size_t>(last - first + 1));
    std::iota(v.begin(), v.end(), first);
    return v;
  };
  return {
      {"Accuracy", range(1, 9), {2, 3, 4, 5}},
      {"Likeability", range(10, 18), {}},
      {"Cognitive Demand", range(19, 23), {19, 21, 23}},
      {"Annoyance", range(24, 28), {}},
      {"Habitability", range(29, 32), {29, 31, 32}},
      {"Speed", range(33, 34), {34}},
  };
}

void validate_scales(const ScaleDefinition& scales) {
  std::set<int> seen;
  for (const auto& s : scales) {
    if (s.items.empty()) throw ValidationError(s.name, "scale '" + s.name + "' has no items");
    for (int i : s.items) {
      if (i < 1 || i > kSassiItems) {
        throw ValidationError(s.name, "item " + std::to_string(i) + " outside 1..34");
      }
      if (!seen.insert(i).second) {
        throw ValidationError(s.name, "item " + std::to_string(i) + " assigned twice");
      }
    }
    for (int i : s.inverted) {
      if (std::find(s.items.begin(), s.items.end(), i) == s.items.end()) {
        throw ValidationError(s.name, "inverted item " + std::to_string(i) +
                                          " does not belong to scale '" + s.name + "'");
      }
    }
  }
  if (seen.size() != kSassiItems) {
    throw ValidationError("", "scales cover " + std::to_string(seen.size()) + " of 34 items");
  }
}

ScaleDefinition scales_from_json(const json& doc) {
  ScaleDefinition scales;
  try {
    for (const auto& s : doc.at("scales")) {
      scales.push_back({s.at("name").get<std::string>(), s.at("items").get<std::vector<int>>(),
                        s.value("inverted", std::vector<int>{})});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed scale definition: ") + e.what());
  }
  validate_scales(scales);
  return scales;
}

json scales_to_json(const ScaleDefinition& scales) {
  json arr = json::array();
  for (const auto& s : scales) {
    arr.push_back({{"name", s.name}, {"items", s.items}, {"inverted", s.inverted}});
  }
  return {{"scales", arr}};
}

namespace {

int scored_item(const SassiResponse& response, const SassiScale& scale, int item) {
  const int raw = response.items[static_cast<std::size_t>(item - 1)];
  const bool inverted =
      std::find(scale.inverted.begin(), scale.inverted.end(), item) != scale.inverted.end();
  return inverted ? invert_likert(raw) : raw;
}

}  // namespace

std::vector<std::pair<std::string, double>> sassi_scores(const SassiResponse& response,
                                                         const ScaleDefinition& scales) {
  validate_response(response);
  std::vector<std::pair<std::string, double>> out;
  for (const auto& scale : scales) {
    double sum = 0;
    for (int item : scale.items) sum += scored_item(response, scale, item);
    out.emplace_back(scale.name, sum / static_cast<double>(scale.items.size()));
  }
  return out;
}

std::vector<std::vector<double>> scale_item_matrix(std::span<const SassiResponse> responses,
                                                   const SassiScale& scale) {
  std::vector<std::vector<double>> matrix;
  for (const auto& r : responses) {
    validate_response(r);
    std::vector<double> row;
    for (int item : scale.items) row.push_back(scored_item(r, scale, item));
    matrix.push_back(std::move(row));
  }
  return matrix;
}

std::vector<SassiResponse> parse_sassi_csv(std::istream& in) {
  std::vector<SassiResponse> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (line_no == 1 && !cells.empty() && cells[0] == "participant") continue;
    if (cells.size() != 2 + kSassiItems) {
      throw ParseError("SASSI CSV line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected 36");
    }
    SassiResponse r;
    r.participantId = cells[0];
    try {
      r.groupId = std::stoi(cells[1]);
      for (std::size_t i = 2; i < cells.size(); ++i) r.items.push_back(std::stoi(cells[i]));
    } catch (const std::exception&) {
      throw ParseError("SASSI CSV line " + std::to_string(line_no) + " has a non-integer cell");
    }
    validate_response(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PairwiseComparison> compare_groups(
    const std::map<std::string, std::vector<double>>& groups) {
  auto normal = [](const std::vector<double>& xs) {
    try {
      return moments_normality(xs).isNormal;
    } catch (const StatsError&) {
      return false;
    }
  };
  std::vector<PairwiseComparison> table;
  for (auto a = groups.begin(); a != groups.end(); ++a) {
    for (auto b = std::next(a); b != groups.end(); ++b) {
      PairwiseComparison row;
      row.groupA = a->first;
      row.groupB = b->first;
      const auto mwu = mann_whitney_u(a->second, b->second);
      row.u = mwu.u;
      row.uCritical = mann_whitney_u_critical(static_cast<int>(a->second.size()),
                                              static_cast<int>(b->second.size()), kSignificance);
      row.pMannWhitney = mwu.p;
      row.normalA = normal(a->second);
      row.normalB = normal(b->second);
      if (row.normalA && row.normalB) {
        try {
          row.pWelch = welch_t(a->second, b->second).p;
        } catch (const StatsError&) {
        }
      }
      row.significant = row.pMannWhitney < kSignificance;
      table.push_back(std::move(row));
    }
  }
  return table;
}

std::string comparison_table_csv(const std::vector<PairwiseComparison>& table) {
  std::ostringstream out;
  out << "pair,U,U-critical,p-MWU,p-Welch,significant\n";
  out << std::setprecision(6);
  for (const auto& r : table) {
    out << r.groupA << " vs " << r.groupB << ',' << r.u << ',';
    if (r.uCritical) out << *r.uCritical;
    out << ',' << r.pMannWhitney << ',';
    if (r.pWelch) out << *r.pWelch;
    out << ',' << (r.significant ? "yes" : "no") << '\n';
  }
  return out.str();
}

json comparison_table_json(const std::vector<PairwiseComparison>& table) {
  json arr = json::array();
  for (const auto& r : table) {
    arr.push_back({{"pair", r.groupA + " vs " + r.groupB},
                   {"groupA", r.groupA},
                   {"groupB", r.groupB},
                   {"U", r.u},
                   {"U-critical", r.uCritical ? json(*r.uCritical) : json(nullptr)},
                   {"p-MWU", r.pMannWhitney},
                   {"p-Welch", r.pWelch ? json(*r.pWelch) : json(nullptr)},
                   {"normalA", r.normalA},
                   {"normalB", r.normalB},
                   {"significant", r.significant}});
  }
  return arr;
}

}  // namespace kgdialog
