/*
 * Copyright 2026 The weakdis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "weakdis/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "weakdis/classifiers.h"

namespace weakdis {

template <typename Scalar>
Representer model_representer(const VaeModel<Scalar>& model, const GroundTruthDataset& data,
                              int chunk) {
  if (chunk < 1) throw std::invalid_argument("chunk must be >= 1");
  return [&model, &data, chunk](std::span<const FactorVector> factors) {
    MatrixD codes(static_cast<Eigen::Index>(factors.size()), model.latent_dim());
    for (std::size_t start = 0; start < factors.size(); start += chunk) {
      const std::size_t size = std::min<std::size_t>(chunk, factors.size() - start);
      const Matrix<Scalar> x = data.images<Scalar>(factors.subspan(start, size));
      codes.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(size)) =
          model.encode(x).mean.template cast<double>();
    }
    return codes;
  };
}

template Representer model_representer(const VaeModel<float>&, const GroundTruthDataset&, int);
template Representer model_representer(const VaeModel<double>&, const GroundTruthDataset&, int);

RepresentationTable compute_representation(const Representer& representer,
                                           const FactorSpace& space, int n, Rng& rng) {
  note_label_access("compute_representation");
  const std::vector<FactorVector> factors = sample_factors(space, n, rng);
  RepresentationTable table;
  table.codes = representer(factors);
  if (table.codes.rows() != n) throw std::runtime_error("representer returned wrong row count");
  if (!table.codes.allFinite()) throw std::runtime_error("representation is not finite");
  table.factors.resize(n, space.num_factors());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < space.num_factors(); ++j) table.factors(i, j) = factors[i][j];
  }
  return table;
}

IntMatrix discretize(const MatrixD& values, int bins, Binning binning) {
  if (bins < 2) throw std::invalid_argument("bins must be >= 2");
  const Eigen::Index n = values.rows();
  IntMatrix out = IntMatrix::Zero(n, values.cols());
  std::vector<int> order(n);
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    if (n == 0) break;
    const double lo = values.col(c).minCoeff(), hi = values.col(c).maxCoeff();
    if (!(hi > lo)) continue;
    if (binning == Binning::kEqualWidth) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const int b = static_cast<int>(std::floor((values(i, c) - lo) / (hi - lo) * bins));
        out(i, c) = std::clamp(b, 0, bins - 1);
      }
    } else {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return values(a, c) < values(b, c); });
      Eigen::Index first = 0;  // sorted position where the current tie group starts
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j > 0 && values(order[j], c) != values(order[j - 1], c)) first = j;
        out(order[j], c) = static_cast<int>(first * bins / n);
      }
    }
  }
  return out;
}

namespace {

int checked_max(std::span<const int> a) {
  int m = 0;
  for (int v : a) {
    if (v < 0) throw std::invalid_argument("discrete codes must be non-negative");
    m = std::max(m, v);
  }
  return m;
}

std::vector<int> column(const IntMatrix& m, Eigen::Index c) {
  std::vector<int> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] = m(i, c);
  return out;
}

double entropy_of_counts(const std::vector<long>& counts, long n) {
  double h = 0;
  for (long c : counts) {
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

}  // namespace

double discrete_entropy(std::span<const int> a) {
  if (a.empty()) throw std::invalid_argument("empty input");
  std::vector<long> counts(checked_max(a) + 1, 0);
  for (int v : a) ++counts[v];
  return entropy_of_counts(counts, static_cast<long>(a.size()));
}

double discrete_mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.empty() || a.size() != b.size()) {
    throw std::invalid_argument("mutual information needs equal, non-empty inputs");
  }
  const int na = checked_max(a) + 1, nb = checked_max(b) + 1;
  std::vector<long> joint(static_cast<std::size_t>(na) * nb, 0), ca(na, 0), cb(nb, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[static_cast<std::size_t>(a[i]) * nb + b[i]];
    ++ca[a[i]];
    ++cb[b[i]];
  }
  const double n = static_cast<double>(a.size());
  double mi = 0;
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      const long c = joint[static_cast<std::size_t>(i) * nb + j];
      if (c > 0) mi += c / n * std::log(c * n / (static_cast<double>(ca[i]) * cb[j]));
    }
  }
  return std::max(0.0, mi);
}

MatrixD mutual_information_matrix(const IntMatrix& codes, const IntMatrix& factors) {
  if (codes.rows() != factors.rows()) throw std::invalid_argument("row count mismatch");
  MatrixD mi(codes.cols(), factors.cols());
  std::vector<std::vector<int>> fcols(factors.cols());
  for (Eigen::Index j = 0; j < factors.cols(); ++j) fcols[j] = column(factors, j);
  for (Eigen::Index i = 0; i < codes.cols(); ++i) {
    const std::vector<int> c = column(codes, i);
    for (Eigen::Index j = 0; j < factors.cols(); ++j) {
      mi(i, j) = discrete_mutual_information(c, fcols[j]);
    }
  }
  return mi;
}

namespace {

void check_table(const RepresentationTable& table) {
  if (table.size() < 2 || table.factors.rows() != table.codes.rows()) {
    throw std::invalid_argument("representation table is too small or inconsistent");
  }
}

int split_point(const RepresentationTable& table, const MetricOptions& options) {
  const int split = static_cast<int>(std::floor(options.train_fraction * table.size()));
  if (split < 1 || split >= table.size()) {
    throw std::invalid_argument("train_fraction leaves an empty split");
  }
  return split;
}

Labels factor_labels(const IntMatrix& factors, Eigen::Index col, int lo, int hi) {
  Labels y;
  y.reserve(hi - lo);
  for (int i = lo; i < hi; ++i) y.push_back(factors(i, col));
  return y;
}

void warn(Warnings* w, std::string msg) {
  if (w) w->push_back(std::move(msg));
}

}  // namespace

double mig_score(const RepresentationTable& table, const MetricOptions& options,
                 Warnings* warnings) {
  check_table(table);
  if (table.codes.cols() < 2) throw std::invalid_argument("MIG needs at least two codes");
  const MatrixD mi =
      mutual_information_matrix(discretize(table.codes, options.bins, options.binning),
                                table.factors);
  double total = 0;
  for (Eigen::Index j = 0; j < mi.cols(); ++j) {
    const double h = discrete_entropy(column(table.factors, j));
    if (!(h > 0)) {
      throw std::invalid_argument("factor " + std::to_string(j) + " has zero entropy");
    }
    std::vector<double> col(mi.rows());
    VectorD::Map(col.data(), mi.rows()) = mi.col(j);
    std::partial_sort(col.begin(), col.begin() + 2, col.end(), std::greater<>());
    total += (col[0] - col[1]) / h;
  }
  return total / mi.cols();
}

double dci_disentanglement(const MatrixD& importance) {
  const double total = importance.sum();
  if (!(total > 0)) return 0.0;
  const Eigen::Index df = importance.cols();
  double score = 0;
  for (Eigen::Index i = 0; i < importance.rows(); ++i) {
    const double row = importance.row(i).sum();
    if (!(row > 0)) continue;
    double h = 0;
    for (Eigen::Index j = 0; j < df; ++j) {
      const double p = importance(i, j) / row;
      if (p > 0) h -= p * std::log(p);
    }
    const double normalized = df > 1 ? h / std::log(static_cast<double>(df)) : 0.0;
    score += row / total * (1.0 - normalized);
  }
  return score;
}

double dci_completeness(const MatrixD& importance) {
  return dci_disentanglement(importance.transpose());
}

DciScores dci_scores(const RepresentationTable& table, const MetricOptions& options,
                     Warnings* warnings) {
  check_table(table);
  const int split = split_point(table, options);
  const int n = table.size();
  const MatrixD train = table.codes.topRows(split), test = table.codes.bottomRows(n - split);
  DciScores out;
  out.importance = MatrixD::Zero(table.codes.cols(), table.factors.cols());
  double acc = 0;
  for (Eigen::Index j = 0; j < table.factors.cols(); ++j) {
    const Labels ytr = factor_labels(table.factors, j, 0, split);
    const Labels yte = factor_labels(table.factors, j, split, n);
    const int classes = table.factors.col(j).maxCoeff() + 1;
    GradientBoostingClassifier gbt;
    gbt.fit(train, ytr, classes);
    out.importance.col(j) = gbt.feature_importances();
    acc += accuracy(yte, gbt.predict(test));
  }
  out.informativeness = acc / table.factors.cols();
  if (!(out.importance.sum() > 0)) {
    warn(warnings, "DCI: all importances are zero; disentanglement and completeness set to 0");
  }
  out.disentanglement = dci_disentanglement(out.importance);
  out.completeness = dci_completeness(out.importance);
  return out;
}

MatrixD sap_score_matrix(const RepresentationTable& table, const MetricOptions& options) {
  check_table(table);
  const int split = split_point(table, options);
  const int n = table.size();
  const MatrixD binned =
      discretize(table.codes, options.bins, options.binning).cast<double>();
  MatrixD scores(table.codes.cols(), table.factors.cols());
  for (Eigen::Index j = 0; j < table.factors.cols(); ++j) {
    const Labels ytr = factor_labels(table.factors, j, 0, split);
    const Labels yte = factor_labels(table.factors, j, split, n);
    const int classes = table.factors.col(j).maxCoeff() + 1;
    for (Eigen::Index i = 0; i < table.codes.cols(); ++i) {
      NearestMeanThresholdClassifier c;
      c.fit(binned.col(i).head(split), ytr, classes);
      scores(i, j) = balanced_accuracy(yte, c.predict(binned.col(i).tail(n - split)));
    }
  }
  return scores;
}

double sap_score(const RepresentationTable& table, const MetricOptions& options) {
  if (table.codes.cols() < 2) throw std::invalid_argument("SAP needs at least two codes");
  const MatrixD s = sap_score_matrix(table, options);
  double total = 0;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    std::vector<double> col(s.rows());
    VectorD::Map(col.data(), s.rows()) = s.col(j);
    std::partial_sort(col.begin(), col.begin() + 2, col.end(), std::greater<>());
    total += col[0] - col[1];
  }
  return total / s.cols();
}

double modularity_from_mi(const MatrixD& mi, Warnings* warnings) {
  const Eigen::Index df = mi.cols();
  double total = 0;
  int counted = 0;
  for (Eigen::Index i = 0; i < mi.rows(); ++i) {
    Eigen::Index best;
    const double top = mi.row(i).maxCoeff(&best);
    if (!(top > 1e-12)) continue;
    ++counted;
    if (df < 2) {
      total += 1.0;
      continue;
    }
    const double rest = mi.row(i).squaredNorm() - top * top;
    total += 1.0 - rest / (top * top * (df - 1));
  }
  if (counted == 0) {
    warn(warnings, "Modularity: no informative code; score set to 1 by convention");
    return 1.0;
  }
  return total / counted;
}

double modularity_score(const RepresentationTable& table, const MetricOptions& options,
                        Warnings* warnings) {
  check_table(table);
  return modularity_from_mi(
      mutual_information_matrix(discretize(table.codes, options.bins, options.binning),
                                table.factors),
      warnings);
}

namespace {

// Points per representer call in the sampling-based scores.
constexpr int kPointsPerCall = 8;

void check_sampling_options(const MetricOptions& o) {
  if (o.batch_size < 2 || o.train_points < 1 || o.test_points < 1) {
    throw std::invalid_argument("batch_size must be >= 2 and point counts >= 1");
  }
}

// Features and labels for `points` BetaVAE points.
void beta_vae_points(const Representer& representer, const FactorSpace& space, int points,
                     int batch, Rng& rng, MatrixD& features, Labels& labels) {
  std::uniform_int_distribution<int> pick(0, space.num_factors() - 1);
  features.resize(points, 0);
  labels.assign(points, 0);
  for (int start = 0; start < points; start += kPointsPerCall) {
    const int count = std::min(kPointsPerCall, points - start);
    std::vector<FactorVector> all;
    all.reserve(static_cast<std::size_t>(count) * batch * 2);
    for (int p = 0; p < count; ++p) {
      const int k = pick(rng);
      labels[start + p] = k;
      std::vector<FactorVector> a = sample_factors(space, batch, rng);
      std::vector<FactorVector> b = sample_factors(space, batch, rng);
      for (int i = 0; i < batch; ++i) b[i][k] = a[i][k];
      all.insert(all.end(), a.begin(), a.end());
      all.insert(all.end(), b.begin(), b.end());
    }
    const MatrixD codes = representer(all);
    if (features.cols() == 0) features.resize(points, codes.cols());
    for (int p = 0; p < count; ++p) {
      const Eigen::Index base = static_cast<Eigen::Index>(p) * batch * 2;
      features.row(start + p) =
          (codes.middleRows(base, batch) - codes.middleRows(base + batch, batch))
              .cwiseAbs()
              .colwise()
              .mean();
    }
  }
}

}  // namespace

double beta_vae_score(const Representer& representer, const FactorSpace& space,
                      const MetricOptions& options, Rng& rng) {
  check_sampling_options(options);
  MatrixD xtr, xte;
  Labels ytr, yte;
  beta_vae_points(representer, space, options.train_points, options.batch_size, rng, xtr, ytr);
  beta_vae_points(representer, space, options.test_points, options.batch_size, rng, xte, yte);
  LogisticRegression lr;
  lr.fit(xtr, ytr, space.num_factors());
  return accuracy(yte, lr.predict(xte));
}

namespace {

// Vote counts (code x factor) for `points` FactorVAE points.
IntMatrix factor_vae_votes(const Representer& representer, const FactorSpace& space,
                           int points, int batch, const VectorD& global_var,
                           const std::vector<bool>& active, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, space.num_factors() - 1);
  IntMatrix votes = IntMatrix::Zero(global_var.size(), space.num_factors());
  for (int start = 0; start < points; start += kPointsPerCall) {
    const int count = std::min(kPointsPerCall, points - start);
    std::vector<FactorVector> all;
    std::vector<int> ks;
    for (int p = 0; p < count; ++p) {
      const int k = pick(rng);
      ks.push_back(k);
      std::vector<FactorVector> s = sample_factors(space, batch, rng);
      const int value = s[0][k];
      for (auto& v : s) v[k] = value;
      all.insert(all.end(), s.begin(), s.end());
    }
    const MatrixD codes = representer(all);
    for (int p = 0; p < count; ++p) {
      const MatrixD block = codes.middleRows(static_cast<Eigen::Index>(p) * batch, batch);
      const VectorD mean = block.colwise().mean();
      const VectorD var =
          (block.rowwise() - mean.transpose()).colwise().squaredNorm() / (batch - 1);
      int best = -1;
      double best_value = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < var.size(); ++i) {
        if (!active[i]) continue;
        const double v = var[i] / global_var[i];
        if (v < best_value) {
          best_value = v;
          best = static_cast<int>(i);
        }
      }
      ++votes(best, ks[p]);
    }
  }
  return votes;
}

}  // namespace

double factor_vae_score(const Representer& representer, const FactorSpace& space,
                        const MetricOptions& options, Rng& rng, Warnings* warnings) {
  check_sampling_options(options);
  if (options.variance_samples < 2) throw std::invalid_argument("variance_samples must be >= 2");
  const std::vector<FactorVector> global = sample_factors(space, options.variance_samples, rng);
  const MatrixD codes = representer(global);
  const VectorD mean = codes.colwise().mean();
  const VectorD global_var =
      (codes.rowwise() - mean.transpose()).colwise().squaredNorm() / codes.rows();
  std::vector<bool> active(global_var.size());
  int num_active = 0;
  for (Eigen::Index i = 0; i < global_var.size(); ++i) {
    active[i] = std::sqrt(global_var[i]) >= options.prune_std;
    num_active += active[i];
  }
  if (num_active == 0) {
    throw std::domain_error("FactorVAE score: every code dimension was pruned");
  }
  if (num_active < global_var.size()) {
    warn(warnings, "FactorVAE score: pruned " +
                       std::to_string(global_var.size() - num_active) + " collapsed codes");
  }
  const IntMatrix train = factor_vae_votes(representer, space, options.train_points,
                                           options.batch_size, global_var, active, rng);
  const IntMatrix test = factor_vae_votes(representer, space, options.test_points,
                                          options.batch_size, global_var, active, rng);
  long hits = 0;
  for (Eigen::Index i = 0; i < train.rows(); ++i) {
    Eigen::Index vote;
    train.row(i).maxCoeff(&vote);
    hits += test(i, vote);
  }
  return static_cast<double>(hits) / options.test_points;
}

MetricScores evaluate_all_metrics(const Representer& representer, const FactorSpace& space,
                                  int table_size, const MetricOptions& options, Rng& rng) {
  MetricScores s;
  const RepresentationTable table = compute_representation(representer, space, table_size, rng);
  s.mig = mig_score(table, options, &s.warnings);
  const DciScores dci = dci_scores(table, options, &s.warnings);
  s.dci_disentanglement = dci.disentanglement;
  s.dci_completeness = dci.completeness;
  s.dci_informativeness = dci.informativeness;
  s.sap = sap_score(table, options);
  s.modularity = modularity_score(table, options, &s.warnings);
  s.beta_vae = beta_vae_score(representer, space, options, rng);
  try {
    s.factor_vae = factor_vae_score(representer, space, options, rng, &s.warnings);
  } catch (const std::domain_error& e) {
    s.factor_vae = std::numeric_limits<double>::quiet_NaN();
    s.warnings.push_back(e.what());
  }
  return s;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "mig", "dci_disentanglement", "dci_completeness", "dci_informativeness",
      "sap", "modularity",          "beta_vae",         "factor_vae"};
  return names;
}

double metric_value(const MetricScores& s, const std::string& name) {
  if (name == "mig") return s.mig;
  if (name == "dci_disentanglement" || name == "dci") return s.dci_disentanglement;
  if (name == "dci_completeness") return s.dci_completeness;
  if (name == "dci_informativeness") return s.dci_informativeness;
  if (name == "sap") return s.sap;
  if (name == "modularity") return s.modularity;
  if (name == "beta_vae") return s.beta_vae;
  if (name == "factor_vae") return s.factor_vae;
  throw ConfigError("unknown metric '" + name + "'");
}

}  // namespace weakdis
