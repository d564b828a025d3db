// Writes the bundled synthetic benchmark: a CSV of 2,044 PCI-like patients
// (158 cardiac deaths), its schema with edge-case distributions, and the
// same edge distributions as a standalone spec.
//
// Marginals follow the registry's training-set description. Risk is planted
// in four features only: age, ejection fraction, peripheral artery disease
// and cerebrovascular disease. Labels come from a logistic model on those
// terms; rows are drawn until each class reaches its quota, so class counts
// are exact.

#include "raretab/data.hpp"
#include "raretab/rng.hpp"
#include "raretab/schema_json.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using raretab::ColumnKind;
using raretab::ColumnSchema;
using raretab::EdgeDistribution;

struct NumericSpec {
  const char* name;
  double mean, sd, lo, hi, step;
  double edge_mu, edge_sigma;
  double missing;
};

struct BinarySpec {
  const char* name;
  double p;
  double edge_p;
  double missing;
};

// name, mean, sd, clip, rounding step, edge mu/sigma, missing rate
const NumericSpec kNumeric[] = {
    {"age", 63.9, 9.85, 30, 95, 1, 92.5, 4.33, 0.0},
    {"ejection_fraction", 56.2, 10.6, 15, 80, 1, 22.5, 4.33, 0.03},
    {"ckd_egfr", 75.3, 16.8, 10, 140, 0.1, 30.0, 8.66, 0.04},
    {"stent_diameter", 3.25, 0.513, 2.0, 5.0, 0.01, 2.375, 0.22, 0.0},
    {"stent_length", 24.5, 8.34, 8, 48, 1, 33.0, 2.89, 0.02},
};

// Stent types are drawn jointly (one platform per patient) and listed here
// only for their edge probabilities.
const BinarySpec kBinary[] = {
    {"anemia", 0.05, 0.90, 0.01},
    {"cerebrovascular_disease", 0.123, 0.90, 0.0},
    {"peripheral_artery_disease", 0.078, 0.85, 0.0},
    {"aortic_stenosis", 0.024, 0.80, 0.0},
    {"single_vessel_disease", 0.465, 0.90, 0.0},
    {"coronary_calcium", 0.209, 0.90, 0.02},
    {"stent_calypso", 0.362, 0.70, 0.0},
    {"medina_side", 0.336, 0.80, 0.0},
    {"atrial_fibrillation", 0.143, 0.80, 0.0},
    {"definition_score", 0.006, 0.90, 0.0},
    {"history_of_cancer", 0.051, 0.60, 0.0},
    {"stent_synergy", 0.01, 0.70, 0.0},
    {"ad_hoc_pci", 0.407, 0.80, 0.0},
    {"previous_pci", 0.413, 0.80, 0.0},
    {"stent_xience", 0.12, 0.70, 0.0},
    {"cto_bifurcation", 0.081, 0.80, 0.0},
};

// Logit weights per standard deviation of age and (reversed) ejection fraction.
struct Planted {
  double intercept = -3.3;
  double age = 0.8;
  double ef = 0.8;
  double pad = 1.2;
  double cvd = 1.2;
};

double round_to(double v, double step) {
  const double inv = std::round(1.0 / step);
  return std::round(v * inv) / inv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the bundled synthetic benchmark"};
  std::string out_dir = "data";
  std::uint64_t seed = 2044;
  std::size_t n_pos = 158, n_neg = 1886;
  Planted beta;
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--positives", n_pos);
  app.add_option("--negatives", n_neg);
  app.add_option("--intercept", beta.intercept);
  app.add_option("--beta-age", beta.age);
  app.add_option("--beta-ef", beta.ef);
  app.add_option("--beta-pad", beta.pad);
  app.add_option("--beta-cvd", beta.cvd);
  CLI11_PARSE(app, argc, argv);

  raretab::Schema schema;
  schema.target = {"cardiac_death", "1", "0"};
  // Column order mirrors the registry feature table.
  const std::vector<std::string> order = {
      "age",           "anemia",         "ejection_fraction",   "cerebrovascular_disease", "ckd_egfr",
      "peripheral_artery_disease", "aortic_stenosis", "single_vessel_disease", "coronary_calcium", "stent_calypso",
      "medina_side",   "atrial_fibrillation", "definition_score", "history_of_cancer",     "stent_synergy",
      "stent_diameter", "stent_length", "ad_hoc_pci",           "previous_pci",            "stent_xience",
      "cto_bifurcation"};
  for (const auto& name : order) {
    ColumnSchema col;
    col.name = name;
    for (const auto& n : kNumeric) {
      if (name == n.name) {
        col.kind = ColumnKind::numeric;
        col.edge = EdgeDistribution{n.edge_mu, n.edge_sigma, {}};
      }
    }
    for (const auto& b : kBinary) {
      if (name == b.name) {
        col.kind = ColumnKind::categorical;
        col.categories = {"no", "yes"};
        col.edge = EdgeDistribution{0.0, 0.0, {1.0 - b.edge_p, b.edge_p}};
      }
    }
    schema.columns.push_back(col);
  }
  schema.validate();

  const auto index_of = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(order.begin(), order.end(), name) - order.begin());
  };
  const std::size_t i_age = index_of("age"), i_ef = index_of("ejection_fraction");
  const std::size_t i_pad = index_of("peripheral_artery_disease"), i_cvd = index_of("cerebrovascular_disease");
  const std::size_t i_cal = index_of("stent_calypso"), i_syn = index_of("stent_synergy"),
                    i_xie = index_of("stent_xience");

  raretab::Rng rng(seed);
  std::vector<std::vector<double>> cols(order.size());
  raretab::Labels y;
  std::size_t got_pos = 0, got_neg = 0;
  std::vector<double> row(order.size());
  while (got_pos < n_pos || got_neg < n_neg) {
    for (const auto& n : kNumeric) {
      row[index_of(n.name)] = round_to(std::clamp(rng.normal(n.mean, n.sd), n.lo, n.hi), n.step);
    }
    for (const auto& b : kBinary) row[index_of(b.name)] = rng.bernoulli(b.p) ? 1.0 : 0.0;
    const double u = rng.uniform();
    row[i_cal] = u < 0.362 ? 1.0 : 0.0;
    row[i_syn] = u >= 0.362 && u < 0.372 ? 1.0 : 0.0;
    row[i_xie] = u >= 0.372 && u < 0.492 ? 1.0 : 0.0;

    const double logit = beta.intercept + beta.age * (row[i_age] - 63.9) / 9.85 +
                         beta.ef * (56.2 - row[i_ef]) / 10.6 + beta.pad * row[i_pad] + beta.cvd * row[i_cvd];
    const int label = rng.bernoulli(raretab::sigmoid(logit)) ? 1 : 0;
    if ((label == 1 && got_pos >= n_pos) || (label == 0 && got_neg >= n_neg)) continue;
    (label == 1 ? got_pos : got_neg)++;
    for (const auto& n : kNumeric) {
      if (rng.bernoulli(n.missing)) row[index_of(n.name)] = std::nan("");
    }
    for (const auto& b : kBinary) {
      if (rng.bernoulli(b.missing)) row[index_of(b.name)] = std::nan("");
    }
    for (std::size_t c = 0; c < row.size(); ++c) cols[c].push_back(row[c]);
    y.push_back(label);
  }

  const raretab::Table table(schema.columns, std::move(cols), std::move(y));
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  raretab::write_csv((dir / "benchmark.csv").string(), table, schema.target);
  std::ofstream(dir / "schema.json") << raretab::schema_to_json(schema).dump(2) << '\n';
  const auto edge = raretab::EdgeCaseSpec::from_columns(schema.columns);
  std::ofstream(dir / "edge.json") << raretab::edge_spec_to_json(edge, schema.columns).dump(2) << '\n';
  std::cerr << "wrote " << table.n_rows() << " rows (" << table.positives() << " positive) to " << out_dir << '\n';
  return 0;
}
