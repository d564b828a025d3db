#pragma once

#include "raretab/common.hpp"
#include "raretab/data.hpp"
#include "raretab/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace raretab {

enum class GeneratorKind { copula, arf, tvae, edge };

std::string_view to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(std::string_view name);

/// Fitted synthetic-row source. sample() returns schema-conformant rows with
/// target 1 and synthetic row ids; the same seed gives the same rows.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual GeneratorKind kind() const = 0;
  const std::vector<ColumnSchema>& schema() const { return schema_; }
  /// Sorted fingerprints of the rows the generator was fitted on.
  const std::vector<std::uint64_t>& training_fingerprints() const { return fingerprints_; }

  Table sample(std::size_t n, std::uint64_t seed) const;
  virtual nlohmann::json to_json() const = 0;

 protected:
  Generator(std::vector<ColumnSchema> schema, std::vector<std::uint64_t> fingerprints);
  /// n values per schema column.
  virtual std::vector<std::vector<double>> sample_columns(std::size_t n, Rng& rng) const = 0;
  nlohmann::json base_json() const;

 private:
  std::vector<ColumnSchema> schema_;
  std::vector<std::uint64_t> fingerprints_;
};

using GeneratorPtr = std::shared_ptr<const Generator>;

/// Standard normal CDF and its inverse.
double normal_cdf(double z);
double normal_quantile(double p);

// ---------------------------------------------------------------------------
// Gaussian copula

class CopulaGenerator final : public Generator {
 public:
  struct Marginal {
    std::vector<double> sorted;      // numeric: training values, ascending
    std::vector<double> cumulative;  // categorical: cumulative category frequencies
  };

  CopulaGenerator(std::vector<ColumnSchema> schema, std::vector<std::uint64_t> fingerprints,
                  std::vector<Marginal> marginals, Matrix correlation);

  GeneratorKind kind() const override { return GeneratorKind::copula; }
  const Matrix& correlation() const { return corr_; }
  /// Same marginals with another latent correlation matrix.
  std::shared_ptr<const CopulaGenerator> with_correlation(const Matrix& correlation) const;
  nlohmann::json to_json() const override;
  static std::shared_ptr<const CopulaGenerator> from_json(const nlohmann::json& j);

 protected:
  std::vector<std::vector<double>> sample_columns(std::size_t n, Rng& rng) const override;

 private:
  std::vector<Marginal> marginals_;
  Matrix corr_;
  Matrix chol_;
};

/// Numeric columns map through average-rank scores to normal scores;
/// categorical columns take the normal score of their cumulative-frequency
/// midpoint. The score correlation is projected to positive definite.
std::shared_ptr<const CopulaGenerator> fit_gaussian_copula(const Table& rows);
/// Eigenvalues clipped at min_eigen, then rescaled to a unit diagonal.
Matrix nearest_correlation(const Matrix& m, double min_eigen = 1e-6);

// ---------------------------------------------------------------------------
// Adversarial random forest

struct ArfOptions {
  std::size_t n_trees = 30;
  std::size_t min_leaf = 5;
  std::size_t max_depth = 32;
  double delta = 0.05;
  std::size_t max_rounds = 10;
};

class ArfGenerator final : public Generator {
 public:
  struct LeafColumn {
    double mean = 0.0;  // numeric
    double sd = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> probs;  // categorical
  };
  struct Leaf {
    double weight = 0.0;  // share of real rows, within its tree
    std::vector<LeafColumn> columns;
  };

  ArfGenerator(std::vector<ColumnSchema> schema, std::vector<std::uint64_t> fingerprints,
               std::vector<std::vector<Leaf>> trees, std::vector<double> oob_accuracy, bool converged,
               std::vector<std::vector<double>> fallback_columns);

  GeneratorKind kind() const override { return GeneratorKind::arf; }
  /// Discriminator out-of-bag accuracy per adversarial round.
  const std::vector<double>& oob_accuracy() const { return oob_; }
  bool converged() const { return converged_; }
  /// True when every discriminator tree was a single leaf and sampling uses
  /// independent empirical marginals instead of leaves.
  bool fell_back() const { return !fallback_.empty(); }
  std::size_t n_leaves() const;
  nlohmann::json to_json() const override;
  static std::shared_ptr<const ArfGenerator> from_json(const nlohmann::json& j);

 protected:
  std::vector<std::vector<double>> sample_columns(std::size_t n, Rng& rng) const override;

 private:
  std::vector<std::vector<Leaf>> trees_;
  std::vector<double> oob_;
  bool converged_;
  std::vector<std::vector<double>> fallback_;
};

std::shared_ptr<const ArfGenerator> fit_arf(const Table& rows, const ArfOptions& options, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tabular VAE

struct TvaeOptions {
  std::size_t latent_dim = 8;
  std::size_t hidden = 64;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
};

/// Encoder/decoder MLP pair over standardized numerics and one-hot
/// categoricals. Parameters live in one flat vector so the loss gradient can
/// be checked against finite differences.
class TvaeNetwork {
 public:
  TvaeNetwork(std::size_t input_dim, std::size_t numeric_dim, std::vector<std::size_t> category_sizes,
              std::size_t hidden, std::size_t latent);

  std::size_t input_dim() const { return input_; }
  std::size_t latent_dim() const { return latent_; }
  std::size_t n_params() const { return total_; }
  void init(std::vector<double>& params, Rng& rng) const;

  /// Mean negative ELBO over the columns of x (input_dim x batch) with fixed
  /// reparameterization noise eps (latent x batch): squared error / 2 on
  /// numerics, cross-entropy on categories, plus KL to N(0, I).
  double loss_gradient(std::span<const double> params, const Matrix& x, const Matrix& eps,
                       std::vector<double>* grad) const;
  /// Decoder output (numeric means, then category logits) for latent codes z (latent x batch).
  Matrix decode(std::span<const double> params, const Matrix& z) const;

 private:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t offset = 0;  // weights (out x in, column-major) then bias
  };

  std::size_t input_;
  std::size_t numeric_;
  std::vector<std::size_t> cats_;
  std::size_t hidden_;
  std::size_t latent_;
  std::vector<Layer> layers_;  // enc1, enc2, mu, logvar, dec1, dec2, out
  std::size_t total_ = 0;
};

class TvaeGenerator final : public Generator {
 public:
  TvaeGenerator(std::vector<ColumnSchema> schema, std::vector<std::uint64_t> fingerprints, TvaeOptions options,
                std::vector<double> means, std::vector<double> scales, std::vector<double> params,
                std::vector<double> loss_history);

  GeneratorKind kind() const override { return GeneratorKind::tvae; }
  /// Mean negative ELBO per epoch.
  const std::vector<double>& loss_history() const { return history_; }
  nlohmann::json to_json() const override;
  static std::shared_ptr<const TvaeGenerator> from_json(const nlohmann::json& j);

 protected:
  std::vector<std::vector<double>> sample_columns(std::size_t n, Rng& rng) const override;

 private:
  TvaeNetwork network() const;

  TvaeOptions options_;
  std::vector<double> means_;   // per numeric column
  std::vector<double> scales_;  // per numeric column
  std::vector<double> params_;
  std::vector<double> history_;
};

/// Throws ComputeError on a non-finite loss.
std::shared_ptr<const TvaeGenerator> fit_tvae(const Table& rows, const TvaeOptions& options, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Edge cohorts

class EdgeSampler final : public Generator {
 public:
  EdgeSampler(std::vector<ColumnSchema> schema, EdgeCaseSpec spec);

  GeneratorKind kind() const override { return GeneratorKind::edge; }
  const EdgeCaseSpec& spec() const { return spec_; }
  nlohmann::json to_json() const override;

 protected:
  std::vector<std::vector<double>> sample_columns(std::size_t n, Rng& rng) const override;

 private:
  EdgeCaseSpec spec_;
};

/// Numerics from N(mu, sigma), categoricals from the probability table, target 1.
Table sample_edge_cases(std::span<const ColumnSchema> schema, const EdgeCaseSpec& spec, std::size_t n,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------

struct GeneratorOptions {
  ArfOptions arf;
  TvaeOptions tvae;
};

/// Fits a copula, ARF or TVAE generator on the given rows.
GeneratorPtr fit_generator(GeneratorKind kind, const Table& rows, const GeneratorOptions& options,
                           std::uint64_t seed);
GeneratorPtr generator_from_json(const nlohmann::json& j);

}  // namespace raretab
