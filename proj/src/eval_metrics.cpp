#include "capforge/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "capforge/caption_pipeline.hpp"
#include "capforge/dataset_store.hpp"
#include "capforge/errors.hpp"

namespace capforge {

auto ScoreMatrix::transposed() const -> ScoreMatrix
{
  ScoreMatrix t;
  t.rows = cols;
  t.cols = rows;
  t.values.resize(values.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      t.values[c * rows + r] = at(r, c);
    }
  }
  if (rows == cols && true_pairing.size() == rows) {
    t.true_pairing.assign(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      t.true_pairing[true_pairing[r]] = r;
    }
  }
  return t;
}

void ScoreMatrix::validate() const
{
  if (values.size() != rows * cols) {
    throw Error(Errc::invalid_argument, "score matrix size disagrees with its shape");
  }
  for (const double v : values) {
    if (!std::isfinite(v)) {
      throw Error(Errc::invalid_argument, "score matrix has a non-finite value");
    }
  }
  if (true_pairing.size() != rows) {
    throw Error(Errc::invalid_argument, "pairing must give one column per row");
  }
  std::vector<bool> used(cols, false);
  for (const auto c : true_pairing) {
    if (c >= cols) {
      throw Error(Errc::invalid_argument, "pairing column out of range");
    }
    if (rows == cols) {
      if (used[c]) {
        throw Error(Errc::invalid_argument, "pairing is not a bijection");
      }
      used[c] = true;
    }
  }
}

auto clip_score(const EmbeddingVector& image_emb, const EmbeddingVector& text_emb, double w) -> double
{
  return 100.0 * w * std::max(0.0, cosine_similarity(image_emb, text_emb));
}

auto r_precision(const ScoreMatrix& scores, const std::vector<int>& ks) -> std::vector<double>
{
  scores.validate();
  if (scores.rows != scores.cols) {
    throw Error(Errc::invalid_argument, "r_precision needs a square score matrix");
  }
  for (const int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) > scores.cols) {
      throw Error(Errc::k_out_of_range, fmt::format("k={} outside [1, {}]", k, scores.cols));
    }
  }
  std::vector<std::size_t> hits(ks.size(), 0);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const std::size_t truth = scores.true_pairing[r];
    const double target = scores.at(r, truth);
    std::size_t rank = 0;  // columns ordered ahead of the true one
    for (std::size_t c = 0; c < scores.cols; ++c) {
      const double s = scores.at(r, c);
      if (s > target || (s == target && c < truth)) {
        ++rank;
      }
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (rank < static_cast<std::size_t>(ks[i])) {
        ++hits[i];
      }
    }
  }
  std::vector<double> out;
  out.reserve(ks.size());
  for (const auto h : hits) {
    out.push_back(scores.rows == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(scores.rows));
  }
  return out;
}

auto retrieval_precision(const ScoreMatrix& scores, RetrievalDirection direction, const std::vector<int>& ks)
    -> std::vector<double>
{
  return direction == RetrievalDirection::image_to_text ? r_precision(scores, ks)
                                                        : r_precision(scores.transposed(), ks);
}

auto gaussian_stats(const Eigen::MatrixXd& features) -> GaussianStats
{
  if (features.rows() < 2) {
    throw Error(Errc::insufficient_samples, "need at least two feature rows");
  }
  GaussianStats s;
  s.n = features.rows();
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.covariance = (centered.transpose() * centered) / static_cast<double>(s.n - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
  return s;
}

auto matrix_sqrt_psd(const Eigen::MatrixXd& a) -> Eigen::MatrixXd
{
  if (a.rows() != a.cols()) {
    throw Error(Errc::dim_mismatch, "matrix square root needs a square matrix");
  }
  if (a.size() == 0) {
    return a;
  }
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(Errc::invalid_argument, "matrix is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw Error(Errc::not_psd, "eigendecomposition failed");
  }
  Eigen::VectorXd lambda = solver.eigenvalues();
  const double tolerance = 1e-8 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -tolerance) {
      throw Error(Errc::not_psd, fmt::format("eigenvalue {} is negative", lambda(i)));
    }
    lambda(i) = std::sqrt(std::max(0.0, lambda(i)));
  }
  const auto& q = solver.eigenvectors();
  Eigen::MatrixXd root = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (root + root.transpose());
}

auto fid(const GaussianStats& a, const GaussianStats& b) -> double
{
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows() ||
      a.covariance.rows() != a.mean.size()) {
    throw Error(Errc::dim_mismatch, "Gaussian statistics have different dimensions");
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd root_a = matrix_sqrt_psd(a.covariance);
  Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const double cross = matrix_sqrt_psd(inner).trace();
  const double value = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
  if (value < 0.0) {
    if (value < -1e-6) {
      throw Error(Errc::not_psd, fmt::format("FID evaluated to {}", value));
    }
    return 0.0;
  }
  return value;
}

auto ab_aggregate(const std::vector<int>& responses) -> AbSummary
{
  AbSummary s;
  std::vector<int> valid;
  valid.reserve(responses.size());
  for (const int r : responses) {
    if (r < 1 || r > 5) {
      ++s.rejected;
    } else {
      valid.push_back(r);
    }
  }
  if (valid.empty()) {
    throw Error(Errc::insufficient_samples, "no valid A/B judgments");
  }
  s.n = static_cast<std::int64_t>(valid.size());
  double sum = 0.0;
  for (const int r : valid) {
    sum += r;
    if (r >= 4) {
      ++s.wins;
    } else if (r == 3) {
      ++s.ties;
    } else {
      ++s.losses;
    }
  }
  const auto n = static_cast<double>(s.n);
  s.mean = sum / n;
  if (s.n > 1) {
    double ss = 0.0;
    for (const int r : valid) {
      ss += (r - s.mean) * (r - s.mean);
    }
    s.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  s.win_pct = 100.0 * static_cast<double>(s.wins) / n;
  s.tie_pct = 100.0 * static_cast<double>(s.ties) / n;
  s.lose_pct = 100.0 * static_cast<double>(s.losses) / n;
  return s;
}

auto parse_score_matrix(std::string_view text) -> ScoreMatrix
{
  std::istringstream in{std::string(text)};
  std::string line;
  ScoreMatrix m;
  if (!std::getline(in, line)) {
    throw Error(Errc::parse_error, "score matrix file is empty");
  }
  try {
    const auto head = nlohmann::json::parse(line);
    m.rows = head.at("rows").get<std::size_t>();
    m.cols = head.at("cols").get<std::size_t>();
    if (head.contains("pairing")) {
      m.true_pairing = head.at("pairing").get<std::vector<std::size_t>>();
    } else {
      for (std::size_t r = 0; r < m.rows; ++r) {
        m.true_pairing.push_back(r);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("score matrix header: ") + e.what());
  }
  m.values.reserve(m.rows * m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (!std::getline(in, line)) {
      throw Error(Errc::parse_error, fmt::format("score matrix has {} of {} rows", r, m.rows));
    }
    std::istringstream row(line);
    double v = 0.0;
    std::size_t count = 0;
    while (row >> v) {
      m.values.push_back(v);
      ++count;
    }
    if (count != m.cols || !row.eof()) {
      throw Error(Errc::parse_error, fmt::format("score matrix row {} malformed", r));
    }
  }
  m.validate();
  return m;
}

auto read_score_matrix(const std::filesystem::path& path) -> ScoreMatrix
{
  return parse_score_matrix(read_file(path));
}

auto read_feature_matrix(const std::filesystem::path& path) -> Eigen::MatrixXd
{
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::vector<double> values;
    double v = 0.0;
    while (row >> v) {
      values.push_back(v);
    }
    if (!row.eof()) {
      throw Error(Errc::parse_error, fmt::format("{}: non-numeric feature on line {}", path.string(), rows.size() + 1));
    }
    if (values.empty()) {
      continue;
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw Error(Errc::parse_error, fmt::format("{}: ragged feature rows", path.string()));
    }
    rows.push_back(std::move(values));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

auto render_metrics_table(const std::vector<int>& ks, const std::vector<MetricsRow>& rows) -> std::string
{
  std::string out = fmt::format("{:<16}{:>10}", "method", "CLIPScore");
  for (const int k : ks) {
    out += fmt::format("{:>9}", fmt::format("I2T@{}", k));
  }
  for (const int k : ks) {
    out += fmt::format("{:>9}", fmt::format("T2I@{}", k));
  }
  out += '\n';
  for (const auto& row : rows) {
    out += fmt::format("{:<16}{:>10.1f}", row.method, row.clip_score);
    for (const double v : row.image_to_text) {
      out += fmt::format("{:>9.1f}", v);
    }
    for (const double v : row.text_to_image) {
      out += fmt::format("{:>9.1f}", v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace capforge
