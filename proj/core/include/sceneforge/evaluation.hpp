#pragma once

// Retrieval accuracy and pairwise-preference ranking (Bradley-Terry
// strengths converted to Elo).

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sceneforge {

struct Judgment {
  std::string item_id;
  std::string model_a;
  std::string model_b;
  // 'a' or 'b'.
  char winner = 'a';
};

using JudgmentSet = std::vector<Judgment>;

// CSV with a header row: item_id,model_a,model_b,winner. The winner column
// accepts "a"/"b" or the winning model's name. Throws FormatError.
JudgmentSet read_judgments_csv(const std::filesystem::path& path);
JudgmentSet parse_judgments_csv(const std::string& text);

struct WinMatrix {
  std::vector<std::string> models;  // first-appearance order
  std::vector<std::vector<double>> w;  // w[i][j]: wins of i over j
  std::vector<std::vector<double>> n;  // n[i][j] = w[i][j] + w[j][i]

  std::size_t index_of(const std::string& model) const;
};

// Throws std::invalid_argument on an empty set or a malformed record.
WinMatrix win_matrix(const JudgmentSet& judgments);

// 100 * w / n, absent where n == 0 (including the diagonal).
std::vector<std::vector<std::optional<double>>> win_rates(const WinMatrix& matrix);

struct BradleyTerryOptions {
  double tolerance = 1e-8;
  int max_iter = 10000;
  // Starting strengths; all ones when empty.
  std::vector<double> initial;
};

struct BradleyTerryResult {
  std::vector<std::string> models;
  std::vector<double> strengths;  // geometric mean 1
  int iterations = 0;
  bool converged = false;
  // Add-one-half smoothing was applied because some model had no wins or
  // no losses inside a component.
  bool smoothed = false;
};

// Throws EstimationError naming the components when the comparison graph is
// disconnected.
BradleyTerryResult bradley_terry(const WinMatrix& matrix, const BradleyTerryOptions& options = {});

// Log-likelihood of the observed wins under the given strengths.
double bradley_terry_log_likelihood(const WinMatrix& matrix, const std::vector<double>& strengths);

inline constexpr double kEloBaseline = 1500.0;

struct EloTable {
  std::vector<std::string> models;
  std::vector<double> strengths;
  std::vector<double> elo;
  std::string baseline;
  int iterations = 0;
  bool converged = false;
  bool smoothed = false;
};

// 400 * log10(pi / pi_baseline) + 1500.
double elo_from_ratio(double ratio);

// Throws std::invalid_argument for an unknown baseline.
EloTable to_elo(const BradleyTerryResult& fit, const std::string& baseline);

nlohmann::json to_json(const EloTable& table, const WinMatrix& matrix);
std::string format_elo_table(const EloTable& table, const WinMatrix& matrix);

struct RetrievalTrial {
  std::string target;
  std::vector<std::string> ranked;
};

// Fraction (0..1) of trials whose target is among the first k entries.
std::map<int, double> top_k_accuracy(const std::vector<RetrievalTrial>& trials,
                                     const std::vector<int>& ks = {1, 5, 10});

// [{"target": "...", "ranked": ["...", ...]}, ...]
std::vector<RetrievalTrial> trials_from_json(const nlohmann::json& doc);

}  // namespace sceneforge
