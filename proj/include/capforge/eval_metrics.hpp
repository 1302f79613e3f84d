#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "capforge/backend_client.hpp"

namespace capforge {

/// Dense image x text similarity scores with the ground-truth pairing
/// (row r's correct column is true_pairing[r]).
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  ///< row-major
  std::vector<std::size_t> true_pairing;

  [[nodiscard]] auto at(std::size_t r, std::size_t c) const -> double { return values[r * cols + c]; }
  /// Texts as rows; pairing inverted.
  [[nodiscard]] auto transposed() const -> ScoreMatrix;
  /// Throws Error(invalid_argument) on shape, finiteness or pairing problems.
  void validate() const;
};

/// 100 * w * max(0, cos(image, text)).
auto clip_score(const EmbeddingVector& image_emb, const EmbeddingVector& text_emb, double w = 2.5) -> double;

/// Fraction of rows whose true column ranks within the top k, for each k.
/// Columns rank by descending score; ties favour the lower column index.
auto r_precision(const ScoreMatrix& scores, const std::vector<int>& ks) -> std::vector<double>;

enum class RetrievalDirection { image_to_text, text_to_image };

auto retrieval_precision(const ScoreMatrix& scores, RetrievalDirection direction, const std::vector<int>& ks)
    -> std::vector<double>;

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::int64_t n = 0;
};

/// Sample mean and unbiased (n - 1) covariance of the rows of `features`.
auto gaussian_stats(const Eigen::MatrixXd& features) -> GaussianStats;

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
/// Eigenvalues down to -1e-8 * max(1, |lambda|max) are clamped to zero;
/// anything more negative is Error(not_psd).
auto matrix_sqrt_psd(const Eigen::MatrixXd& a) -> Eigen::MatrixXd;

/// Frechet distance between two Gaussians:
/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
auto fid(const GaussianStats& a, const GaussianStats& b) -> double;

struct AbSummary {
  double mean = 0.0;
  double ci95 = 0.0;  ///< half-width 1.96 s / sqrt(n); 0 when n = 1
  double win_pct = 0.0;
  double tie_pct = 0.0;
  double lose_pct = 0.0;
  std::int64_t wins = 0;
  std::int64_t ties = 0;
  std::int64_t losses = 0;
  std::int64_t n = 0;
  std::int64_t rejected = 0;
};

/// Aggregates oriented 1-5 judgments (4 and 5 favour the candidate).
/// Out-of-range scores are skipped and counted in `rejected`.
auto ab_aggregate(const std::vector<int>& responses) -> AbSummary;

/// First line: JSON {"rows", "cols", "pairing"?}; then one row of
/// whitespace-separated values per line. Missing pairing means identity.
auto parse_score_matrix(std::string_view text) -> ScoreMatrix;
auto read_score_matrix(const std::filesystem::path& path) -> ScoreMatrix;

/// One feature vector per line, whitespace-separated.
auto read_feature_matrix(const std::filesystem::path& path) -> Eigen::MatrixXd;

struct MetricsRow {
  std::string method;
  double clip_score = 0.0;
  std::vector<double> image_to_text;  ///< percent, one per k
  std::vector<double> text_to_image;
};

/// Comparison table: CLIPScore and retrieval precision per k.
auto render_metrics_table(const std::vector<int>& ks, const std::vector<MetricsRow>& rows) -> std::string;

}  // namespace capforge
