#include "sceneforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "sceneforge/error.hpp"
#include "sceneforge/paths.hpp"

namespace sceneforge {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

// One CSV row; double quotes group commas and "" escapes a quote.
std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back().push_back(c);
    }
  }
  for (auto& f : fields) f = trim(f);
  return fields;
}

std::vector<std::vector<std::size_t>> components(const WinMatrix& m) {
  const std::size_t k = m.models.size();
  std::vector<int> label(k, -1);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < k; ++s) {
    if (label[s] >= 0) continue;
    out.emplace_back();
    std::vector<std::size_t> stack{s};
    label[s] = static_cast<int>(out.size()) - 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      out.back().push_back(i);
      for (std::size_t j = 0; j < k; ++j) {
        if (label[j] < 0 && m.n[i][j] > 0.0) {
          label[j] = label[s];
          stack.push_back(j);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

bool reaches_all(const std::vector<std::vector<double>>& w, bool forward) {
  const std::size_t k = w.size();
  std::vector<bool> seen(k, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < k; ++j) {
      const double edge = forward ? w[i][j] : w[j][i];
      if (!seen[j] && edge > 0.0) {
        seen[j] = true;
        stack.push_back(j);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

void normalize_geometric(std::vector<double>& pi) {
  double log_sum = 0.0;
  for (double p : pi) log_sum += std::log(p);
  const double scale = std::exp(-log_sum / static_cast<double>(pi.size()));
  for (double& p : pi) p *= scale;
}

}  // namespace

JudgmentSet parse_judgments_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line))
    if (!trim(line).empty()) header = split_csv_row(line);
  const std::vector<std::string> expected{"item_id", "model_a", "model_b", "winner"};
  if (header != expected)
    throw FormatError("judgments CSV must start with the header item_id,model_a,model_b,winner");

  JudgmentSet out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split_csv_row(line);
    if (f.size() != 4) throw FormatError("row " + std::to_string(row) + ": expected 4 columns");
    Judgment j{f[0], f[1], f[2], 'a'};
    if (f[3] == "a" || f[3] == "A" || f[3] == j.model_a) {
      j.winner = 'a';
    } else if (f[3] == "b" || f[3] == "B" || f[3] == j.model_b) {
      j.winner = 'b';
    } else {
      throw FormatError("row " + std::to_string(row) + ": winner '" + f[3] +
                        "' is neither a, b nor one of the two models");
    }
    if (j.model_a == j.model_b || j.model_a.empty())
      throw FormatError("row " + std::to_string(row) + ": a model cannot be compared with itself");
    out.push_back(std::move(j));
  }
  return out;
}

JudgmentSet read_judgments_csv(const std::filesystem::path& path) {
  return parse_judgments_csv(read_file(path));
}

std::size_t WinMatrix::index_of(const std::string& model) const {
  auto it = std::find(models.begin(), models.end(), model);
  if (it == models.end()) throw std::invalid_argument("unknown model " + model);
  return static_cast<std::size_t>(it - models.begin());
}

WinMatrix win_matrix(const JudgmentSet& judgments) {
  if (judgments.empty()) throw std::invalid_argument("win_matrix needs at least one judgment");
  WinMatrix m;
  auto index = [&](const std::string& name) {
    auto it = std::find(m.models.begin(), m.models.end(), name);
    if (it != m.models.end()) return static_cast<std::size_t>(it - m.models.begin());
    m.models.push_back(name);
    for (auto& row : m.w) row.push_back(0.0);
    m.w.emplace_back(m.models.size(), 0.0);
    return m.models.size() - 1;
  };
  for (const auto& j : judgments) {
    if (j.model_a == j.model_b) throw std::invalid_argument("judgment compares a model with itself");
    if (j.winner != 'a' && j.winner != 'b') throw std::invalid_argument("winner must be 'a' or 'b'");
    const std::size_t a = index(j.model_a);
    const std::size_t b = index(j.model_b);
    if (j.winner == 'a') m.w[a][b] += 1.0;
    else m.w[b][a] += 1.0;
  }
  const std::size_t k = m.models.size();
  m.n.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) m.n[i][j] = m.w[i][j] + m.w[j][i];
  return m;
}

std::vector<std::vector<std::optional<double>>> win_rates(const WinMatrix& m) {
  const std::size_t k = m.models.size();
  std::vector<std::vector<std::optional<double>>> out(k, std::vector<std::optional<double>>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j && m.n[i][j] > 0.0) out[i][j] = 100.0 * m.w[i][j] / m.n[i][j];
  return out;
}

double bradley_terry_log_likelihood(const WinMatrix& m, const std::vector<double>& pi) {
  double ll = 0.0;
  for (std::size_t i = 0; i < m.models.size(); ++i)
    for (std::size_t j = 0; j < m.models.size(); ++j)
      if (m.w[i][j] > 0.0) ll += m.w[i][j] * (std::log(pi[i]) - std::log(pi[i] + pi[j]));
  return ll;
}

BradleyTerryResult bradley_terry(const WinMatrix& matrix, const BradleyTerryOptions& options) {
  const std::size_t k = matrix.models.size();
  if (k < 2) throw EstimationError("Bradley-Terry needs at least two models");
  if (options.tolerance <= 0.0 || options.max_iter < 1)
    throw std::invalid_argument("tolerance must be positive and max_iter at least 1");

  const auto parts = components(matrix);
  if (parts.size() > 1) {
    std::string names;
    for (const auto& part : parts) {
      names += names.empty() ? "{" : " | {";
      for (std::size_t i = 0; i < part.size(); ++i)
        names += (i ? ", " : "") + matrix.models[part[i]];
      names += "}";
    }
    throw EstimationError("comparison graph is disconnected: " + names);
  }

  BradleyTerryResult result;
  result.models = matrix.models;
  auto w = matrix.w;
  auto n = matrix.n;
  if (!reaches_all(w, true) || !reaches_all(w, false)) {
    // Some group never beats (or never loses to) the rest, so the MLE sits
    // at infinity. Add a half win in each direction of every compared pair.
    result.smoothed = true;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j && matrix.n[i][j] > 0.0) {
          w[i][j] += 0.5;
          n[i][j] += 1.0;
        }
  }

  std::vector<double> pi(k, 1.0);
  if (!options.initial.empty()) {
    if (options.initial.size() != k) throw std::invalid_argument("initial strengths size mismatch");
    for (double p : options.initial)
      if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("initial strengths must be positive");
    pi = options.initial;
  }
  normalize_geometric(pi);

  std::vector<double> wins(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) wins[i] = std::accumulate(w[i].begin(), w[i].end(), 0.0);

  std::vector<double> next(k);
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    for (std::size_t i = 0; i < k; ++i) {
      double denom = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        if (j != i && n[i][j] > 0.0) denom += n[i][j] / (pi[i] + pi[j]);
      next[i] = wins[i] / denom;
    }
    normalize_geometric(next);
    double change = 0.0;
    for (std::size_t i = 0; i < k; ++i) change = std::max(change, std::abs(next[i] - pi[i]) / next[i]);
    pi.swap(next);
    result.iterations = iter;
    if (change < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.strengths = pi;
  return result;
}

double elo_from_ratio(double ratio) {
  if (!(ratio > 0.0)) throw std::invalid_argument("strength ratio must be positive");
  return 400.0 * std::log10(ratio) + kEloBaseline;
}

EloTable to_elo(const BradleyTerryResult& fit, const std::string& baseline) {
  auto it = std::find(fit.models.begin(), fit.models.end(), baseline);
  if (it == fit.models.end()) throw std::invalid_argument("baseline model " + baseline + " not found");
  const double base = fit.strengths[static_cast<std::size_t>(it - fit.models.begin())];
  EloTable table{fit.models, fit.strengths, {}, baseline, fit.iterations, fit.converged, fit.smoothed};
  for (std::size_t i = 0; i < fit.models.size(); ++i)
    table.elo.push_back(fit.models[i] == baseline ? kEloBaseline : elo_from_ratio(fit.strengths[i] / base));
  return table;
}

nlohmann::json to_json(const EloTable& table, const WinMatrix& matrix) {
  nlohmann::json models = nlohmann::json::array();
  for (std::size_t i = 0; i < table.models.size(); ++i)
    models.push_back({{"model", table.models[i]}, {"strength", table.strengths[i]}, {"elo", table.elo[i]}});
  nlohmann::json rates = nlohmann::json::object();
  const auto r = win_rates(matrix);
  for (std::size_t i = 0; i < matrix.models.size(); ++i) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t j = 0; j < matrix.models.size(); ++j)
      if (r[i][j]) row[matrix.models[j]] = *r[i][j];
    rates[matrix.models[i]] = row;
  }
  return {{"baseline", table.baseline},
          {"iterations", table.iterations},
          {"converged", table.converged},
          {"smoothed", table.smoothed},
          {"models", models},
          {"win_rates", rates}};
}

std::string format_elo_table(const EloTable& table, const WinMatrix& matrix) {
  std::ostringstream out;
  std::size_t width = 8;
  for (const auto& m : matrix.models) width = std::max(width, m.size() + 2);
  const auto rates = win_rates(matrix);
  out << std::left << std::setw(static_cast<int>(width)) << "model";
  for (const auto& m : matrix.models) out << std::right << std::setw(static_cast<int>(width)) << m;
  out << std::right << std::setw(10) << "elo" << "\n";
  out << std::fixed << std::setprecision(1);
  for (std::size_t i = 0; i < matrix.models.size(); ++i) {
    out << std::left << std::setw(static_cast<int>(width)) << matrix.models[i] << std::right;
    for (std::size_t j = 0; j < matrix.models.size(); ++j) {
      if (rates[i][j]) out << std::setw(static_cast<int>(width)) << *rates[i][j];
      else out << std::setw(static_cast<int>(width)) << "-";
    }
    out << std::setw(10) << table.elo[i] << "\n";
  }
  out << "baseline " << table.baseline << ", " << table.iterations << " iterations"
      << (table.converged ? "" : " (not converged)") << (table.smoothed ? ", smoothed" : "") << "\n";
  return out.str();
}

std::map<int, double> top_k_accuracy(const std::vector<RetrievalTrial>& trials,
                                     const std::vector<int>& ks) {
  if (trials.empty()) throw std::invalid_argument("top_k_accuracy needs at least one trial");
  for (const auto& t : trials) {
    std::set<std::string> unique(t.ranked.begin(), t.ranked.end());
    if (unique.size() != t.ranked.size())
      throw std::invalid_argument("ranked list for " + t.target + " has duplicates");
  }
  std::map<int, double> out;
  for (int k : ks) {
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    std::size_t hits = 0;
    for (const auto& t : trials) {
      const auto end = t.ranked.begin() + std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(t.ranked.size()));
      if (std::find(t.ranked.begin(), end, t.target) != end) ++hits;
    }
    out[k] = static_cast<double>(hits) / static_cast<double>(trials.size());
  }
  return out;
}

std::vector<RetrievalTrial> trials_from_json(const nlohmann::json& doc) {
  std::vector<RetrievalTrial> out;
  try {
    for (const auto& t : doc)
      out.push_back({t.at("target").get<std::string>(), t.at("ranked").get<std::vector<std::string>>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed trials file: ") + e.what());
  }
  return out;
}

}  // namespace sceneforge
