// Acceptance checks: one PASS/FAIL line per criterion.
#include "raretab/calibration.hpp"
#include "raretab/config.hpp"
#include "raretab/eval.hpp"
#include "raretab/harness.hpp"
#include "raretab/importance.hpp"
#include "raretab/kan.hpp"
#include "raretab/logistic.hpp"
#include "raretab/report.hpp"
#include "raretab/synthgen.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

using namespace raretab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int decimals = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

int failures = 0;

void criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  failures += !o.pass;
  std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << " " << title << ": " << o.detail << " (" << fmt(secs, 1)
            << " s)" << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

double brute_auc(const std::vector<double>& p, const Labels& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      wins += p[i] > p[j] ? 1.0 : p[i] == p[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

RcCurve brute_rc(const std::vector<double>& p, const Labels& y) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::max(p[a], 1 - p[a]) > std::max(p[b], 1 - p[b]);
  });
  RcCurve c;
  double errors = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    errors += static_cast<double>((p[order[k]] >= 0.5 ? 1 : 0) != y[order[k]]);
    c.points.push_back({static_cast<double>(k + 1) / static_cast<double>(p.size()), errors / static_cast<double>(k + 1)});
  }
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    c.auc_rc += 0.5 * (c.points[k].risk + c.points[k - 1].risk) * (c.points[k].coverage - c.points[k - 1].coverage);
  }
  return c;
}

Labels labels_with(std::size_t n, std::size_t positives, std::uint64_t seed) {
  Labels y(n, 0);
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(positives), 1);
  Rng rng(seed);
  rng.shuffle(std::span<int>(y));
  return y;
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

struct Bench {
  RunConfig config;
  Table table;
};

Bench load_bench() {
  RunConfig cfg = load_config(std::string(RARETAB_DATA_DIR) + "/bench.json");
  LoadedData data = load_data(cfg);
  return {std::move(cfg), std::move(data.table)};
}

ExperimentConfig with_regimes(const ExperimentConfig& base, std::vector<std::string> regimes, bool cv, bool importance) {
  ExperimentConfig c = base;
  c.regimes.clear();
  for (const auto& r : regimes) c.regimes.push_back(RegimeSpec::parse(r));
  c.cross_validate = cv;
  c.importance = importance;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RARETAB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
  std::cout << "raretab acceptance" << std::endl;

  criterion(1, "metric oracles", [] {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(1);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 2 + rng.index(49);
      std::vector<double> p(n);
      Labels y(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = static_cast<double>(rng.index(10)) / 10.0;
        y[i] = rng.bernoulli(0.4);
      }
      y[0] = 1;
      y[1] = 0;
      worst = std::max(worst, std::abs(auc_roc(p, y) - brute_auc(p, y)));
    }
    const double e = ece(std::vector<double>{0.6, 0.7, 0.9, 0.95}, Labels{1, 0, 1, 1}, 2);
    const double b = brier(std::vector<double>{0.8}, Labels{1});
    const double h = avg_entropy(std::vector<double>{0.5, 0.5});
    const double auc = auc_roc(std::vector<double>{0.1, 0.35, 0.35, 0.8}, Labels{0, 1, 0, 1});
    const bool fixtures = std::abs(e - 0.0375) < 1e-12 && std::abs(b - 0.04) < 1e-12 &&
                          std::abs(h - std::log(2.0)) < 1e-15 && auc == 0.875 &&
                          avg_entropy(std::vector<double>{0.0, 1.0}) == 0.0;
    const double secs = seconds_since(start);
    return Outcome{worst <= 1e-12 && fixtures && secs < 5.0,
                   "max |auc - brute| " + fmt(worst, 15) + ", ece " + fmt(e) + ", brier " + fmt(b) + ", auc " +
                       fmt(auc, 3)};
  });

  criterion(2, "majority-predictor fixture", [] {
    const Labels y = labels_with(409, 31, 2);
    const std::vector<double> p(409, 0.08);
    const auto m = classification_metrics(confusion_at_threshold(p, y, 0.5));
    const double conf = avg_confidence(p), ent = avg_entropy(p), b = brier(p, y);
    const bool ok = std::abs(m.accuracy - 0.9242) <= 0.01 && m.precision == 0 && m.recall == 0 && m.f1 == 0 &&
                    std::abs(conf - 0.92) <= 0.01 && std::abs(ent - 0.279) <= 0.01 && std::abs(b - 0.071) <= 0.01;
    return Outcome{ok, "accuracy " + fmt(m.accuracy) + ", P/R/F1 " + fmt(m.precision, 0) + "/" + fmt(m.recall, 0) +
                           "/" + fmt(m.f1, 0) + ", confidence " + fmt(conf) + ", entropy " + fmt(ent) + ", brier " +
                           fmt(b)};
  });

  const Bench bench = load_bench();
  std::optional<ExperimentReport> none_report;
  double none_secs = 0;

  criterion(3, "imbalance failure mode (regime none)", [&] {
    const auto start = std::chrono::steady_clock::now();
    none_report = run_experiment(bench.table, with_regimes(bench.config.experiment, {"none"}, true, false));
    none_secs = seconds_since(start);
    bool ok = none_secs < 120.0;
    std::string detail;
    for (const char* m : {"lr", "rf"}) {
      const auto& r = none_report->find(m, "none");
      ok = ok && r.test.recall < 0.1 && r.test.auc > 0.7;
      detail += std::string(m) + " recall " + fmt(r.test.recall) + " auc " + fmt(r.test.auc) + "; ";
    }
    return Outcome{ok, detail + "runtime " + fmt(none_secs, 1) + " s"};
  });

  criterion(4, "arf augmentation raises recall", [&] {
    if (!none_report) return Outcome{false, "regime none run unavailable"};
    const auto start = std::chrono::steady_clock::now();
    const auto arf =
        run_experiment(bench.table, with_regimes(bench.config.experiment, {"generator(arf,500)"}, true, false));
    const double secs = none_secs + seconds_since(start);
    int improved = 0;
    std::string detail;
    for (const auto& spec : bench.config.experiment.models) {
      const auto& a = arf.find(spec.name, "generator(arf,500)");
      const auto& n = none_report->find(spec.name, "none");
      const bool up = a.test.recall - n.test.recall >= 0.10 && n.test.auc - a.test.auc <= 0.05;
      improved += up;
      detail += spec.name + " recall " + fmt(n.test.recall, 3) + "->" + fmt(a.test.recall, 3) + " auc " +
                fmt(n.test.auc, 3) + "->" + fmt(a.test.auc, 3) + "; ";
    }
    return Outcome{improved >= 3 && secs < 300.0,
                   detail + std::to_string(improved) + "/4 models, runtime " + fmt(secs, 1) + " s"};
  });

  criterion(5, "edge-case stress", [&] {
    if (!none_report) return Outcome{false, "regime none run unavailable"};
    ExperimentConfig c = with_regimes(bench.config.experiment, {"edge(500)"}, false, false);
    const auto edge = run_experiment(bench.table, c);
    bool ok = true;
    std::string detail;
    for (const auto& spec : c.models) {
      const auto& r = edge.find(spec.name, "edge(500)");
      ok = ok && r.edge_probabilities.size() == 200 && r.edge->mean >= 0.9;
      detail += spec.name + " " + fmt(r.edge->mean, 3) + "; ";
    }
    const double lr_none = none_report->find("lr", "none").edge->mean;
    const double lr_edge = edge.find("lr", "edge(500)").edge->mean;
    ok = ok && lr_edge - lr_none >= 0.2;
    return Outcome{ok, "edge-trained means " + detail + "lr without augmentation " + fmt(lr_none, 3) + " (gap " +
                           fmt(lr_edge - lr_none, 3) + ")"};
  });

  criterion(6, "cross-validated platt calibration", [] {
    Rng rng(6);
    const std::size_t n = 5000;
    Matrix X(static_cast<Eigen::Index>(n), 1);
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double logit = rng.normal() - 1.0;
      X(static_cast<Eigen::Index>(i), 0) = logit;
      y[i] = rng.bernoulli(sigmoid(logit));
    }
    Vector w(1);
    w << 3.0;
    const ClassifierPtr over = std::make_shared<LogisticModel>(w, 0.0);
    const auto cal = calibrate_cv([&](const Matrix&, const Labels&, std::uint64_t) { return over; }, X, y, 5, 6);
    const double before = ece(to_std(over->predict_proba(X)), y, 10);
    const double after = ece(to_std(cal->predict_proba(X)), y, 10);
    double worst = 0;
    for (const auto& m : cal->members()) {
      const auto raw = to_std(m.model->predict_proba(X));
      std::vector<double> mapped;
      for (double v : raw) mapped.push_back(m.calibrator.apply_proba(v));
      worst = std::max(worst, std::abs(auc_roc(raw, y) - auc_roc(mapped, y)));
    }
    return Outcome{after <= 0.5 * before && worst <= 1e-12,
                   "ece " + fmt(before) + " -> " + fmt(after) + ", max member auc change " + fmt(worst, 15)};
  });

  criterion(7, "risk-coverage", [&] {
    if (!none_report) return Outcome{false, "regime none run unavailable"};
    const auto& rf = none_report->find("rf", "none");
    Rng rng(7);
    bool exact = true;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng.index(100);
      std::vector<double> p(n);
      Labels y(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = static_cast<double>(rng.index(21)) / 20.0;
        y[i] = rng.bernoulli(0.3);
      }
      const auto got = risk_coverage(p, y);
      const auto want = brute_rc(p, y);
      exact = exact && got.auc_rc == want.auc_rc && got.points.size() == want.points.size();
      for (std::size_t k = 0; exact && k < n; ++k) {
        exact = got.points[k].coverage == want.points[k].coverage && got.points[k].risk == want.points[k].risk;
      }
    }
    return Outcome{rf.calibrated && rf.rc.auc_rc < 0.1 && exact,
                   "calibrated rf auc_rc " + fmt(rf.rc.auc_rc) + ", brute-force fixtures " +
                       (exact ? "identical" : "differ")};
  });

  criterion(8, "permutation importance", [&] {
    const std::set<std::string> planted = {"age", "ejection_fraction", "peripheral_artery_disease",
                                           "cerebrovascular_disease"};
    int hits = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      ExperimentConfig c = with_regimes(bench.config.experiment, {"none"}, false, true);
      c.seed = seed;
      const auto report = run_experiment(bench.table, c);
      const auto top = top_features(*report.ranks_for("none"), 4);
      const bool hit = std::set<std::string>(top.begin(), top.end()) == planted;
      hits += hit;
      detail += hit ? "+" : "-";
    }

    std::vector<std::vector<double>> cols;
    std::vector<ColumnSchema> schema = bench.table.schema();
    for (std::size_t c = 0; c < bench.table.n_cols(); ++c) {
      const auto s = bench.table.column(c);
      cols.emplace_back(s.begin(), s.end());
    }
    ColumnSchema constant;
    constant.name = "constant";
    constant.edge = EdgeDistribution{1.0, 0.0, {}};
    schema.push_back(constant);
    cols.emplace_back(bench.table.n_rows(), 1.0);
    const Table with_constant(schema, cols, bench.table.target());
    ExperimentConfig c = with_regimes(bench.config.experiment, {"none"}, false, true);
    const auto report = run_experiment(with_constant, c);
    bool zero = true;
    for (const auto& r : report.results) {
      for (const auto& f : r.importance->features) {
        if (f.name != "constant") continue;
        for (double d : f.deltas) zero = zero && d == 0.0;
      }
    }
    return Outcome{hits >= 9 && zero, "planted top-4 in " + std::to_string(hits) + "/10 seeds [" + detail +
                                          "], constant feature drops " + (zero ? "all zero" : "nonzero")};
  });

  criterion(9, "generator fidelity and gradient checks", [] {
    Rng rng(9);
    const std::size_t n = 2000;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = 0.8 * a[i] + 0.6 * rng.normal();
    }
    std::vector<ColumnSchema> pair(2);
    pair[0].name = "a";
    pair[1].name = "b";
    const Table t(pair, {a, b}, Labels(n, 1));
    const auto corr = [](const Table& s) {
      const auto x = s.column(0), y = s.column(1);
      const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
      const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
      }
      return sxy / std::sqrt(sxx * syy);
    };
    const double rho = corr(fit_gaussian_copula(t)->sample(10000, 1));

    const Table small = t.select_rows([] {
      std::vector<std::size_t> r(500);
      std::iota(r.begin(), r.end(), 0);
      return r;
    }());
    const double arf_rho = corr(fit_arf(small, {}, 2)->sample(5000, 3));
    std::vector<double> shuffled(b.begin(), b.begin() + 500);
    rng.shuffle(std::span<double>(shuffled));
    const Table perm(pair, {std::vector<double>(a.begin(), a.begin() + 500), shuffled}, Labels(500, 1));
    const double perm_rho = corr(fit_arf(perm, {}, 2)->sample(5000, 3));

    const TvaeNetwork net(5, 2, {3}, 6, 2);
    std::vector<double> params(net.n_params());
    net.init(params, rng);
    Matrix x = Matrix::Zero(5, 8), eps(2, 8);
    for (Eigen::Index j = 0; j < 8; ++j) {
      x(0, j) = rng.normal();
      x(1, j) = rng.normal();
      x(2 + static_cast<Eigen::Index>(rng.index(3)), j) = 1.0;
      eps(0, j) = rng.normal();
      eps(1, j) = rng.normal();
    }
    std::vector<double> grad;
    net.loss_gradient(params, x, eps, &grad);
    double tvae_worst = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double h = 1e-6;
      std::vector<double> up = params, down = params;
      up[i] += h;
      down[i] -= h;
      const double fd = (net.loss_gradient(up, x, eps, nullptr) - net.loss_gradient(down, x, eps, nullptr)) / (2 * h);
      tvae_worst = std::max(tvae_worst, relative_gap(fd, grad[i]));
    }

    Matrix kx(6, 3);
    Labels ky(6);
    for (Eigen::Index i = 0; i < 6; ++i) {
      for (Eigen::Index j = 0; j < 3; ++j) kx(i, j) = rng.normal();
      ky[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
    }
    KanParams kp;
    kp.hidden_width = 4;
    const KanModel kan = KanModel::initialize(kx, kp, 9);
    std::vector<double> kparams = kan.parameters();
    for (auto& v : kparams) v += 0.1 * rng.normal();
    std::vector<double> kgrad;
    kan.loss_gradient(kparams, kx, ky, 2.0, &kgrad);
    double kan_worst = 0;
    for (std::size_t i = 0; i < kparams.size(); ++i) {
      const double h = 1e-5;
      std::vector<double> up = kparams, down = kparams;
      up[i] += h;
      down[i] -= h;
      const double fd = (kan.loss_gradient(up, kx, ky, 2.0, nullptr) - kan.loss_gradient(down, kx, ky, 2.0, nullptr)) / (2 * h);
      kan_worst = std::max(kan_worst, relative_gap(fd, kgrad[i]));
    }

    const bool ok = std::abs(rho - 0.8) <= 0.05 && arf_rho > 0.5 && std::abs(perm_rho) < 0.1 && tvae_worst < 1e-3 &&
                    kan_worst < 1e-4;
    return Outcome{ok, "copula rho " + fmt(rho, 3) + ", arf rho " + fmt(arf_rho, 3) + " vs permuted " +
                           fmt(perm_rho, 3) + ", tvae grad rel err " + fmt(tvae_worst, 8) + ", kan grad rel err " +
                           fmt(kan_worst, 8)};
  });

  criterion(10, "determinism of run", [] {
    const fs::path dir = fs::temp_directory_path() / ("raretab_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    const std::string data = RARETAB_DATA_DIR;
    const json cfg = {
        {"dataset", data + "/benchmark.csv"},
        {"schema", data + "/schema.json"},
        {"seed", 7},
        {"k_folds", 3},
        {"pipeline", {{"max_missing", 500}}},
        {"models", json::array({{{"name", "lr"}, {"family", "logistic"}, {"search", "default"}},
                                {{"name", "rf"},
                                 {"family", "random_forest"},
                                 {"hyperparams", {{"n_trees", 20}, {"min_leaf", 5}}},
                                 {"calibrate", true},
                                 {"calibration_folds", 3}},
                                {{"name", "gbdt"}, {"family", "gbdt"}, {"hyperparams", {{"n_rounds", 20}}}},
                                {{"name", "kan"}, {"family", "kan"}, {"hyperparams", {{"epochs", 5}}}}})},
        {"regimes", {"none", "generator(arf,200)", "generator(copula,200)", "generator(tvae,200)", "edge(200)",
                     "generator_plus_edge(arf,200,200)"}},
        {"generators", {{"tvae", {{"epochs", 20}}}}},
        {"search_budget", 4},
        {"importance_repeats", 2}};
    write_text_file(dir / "config.json", cfg.dump(2));
    const std::string base = "run --config " + (dir / "config.json").string() + " --out ";
    const int a = run_cli(base + (dir / "a").string());
    const int b = run_cli(base + (dir / "b").string());
    if (a != 0 || b != 0) {
      return Outcome{false, "run exited with " + std::to_string(a) + " and " + std::to_string(b)};
    }
    const std::string ra = read_text_file(dir / "a" / "report.json");
    const std::string rb = read_text_file(dir / "b" / "report.json");
    fs::remove_all(dir);
    return Outcome{!ra.empty() && ra == rb,
                   std::to_string(ra.size()) + " bytes, " + (ra == rb ? "identical" : "different")};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
