#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "cityfm/downstream.hpp"
#include "cityfm/util.hpp"

namespace cityfm {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kRidgeAlphas[] = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
constexpr double kLogitAlphas[] = {1e-3, 1e-1};
constexpr int kLogitIters = 200;
constexpr double kLogitMomentum = 0.9;

MatrixXd gather_rows(const std::vector<double>& x, int n, int p, const std::vector<int>& idx) {
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), p);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= n) throw Error("probe: row index out of range");
    for (int c = 0; c < p; ++c) {
      out(static_cast<Eigen::Index>(r), c) = x[static_cast<std::size_t>(idx[r]) * p + c];
    }
  }
  return out;
}

// Mean and population stddev per column; constant columns get stddev 1 so
// they standardize to exactly zero.
void standardize_stats(const MatrixXd& xt, std::vector<double>* mean, std::vector<double>* stdev) {
  const int p = static_cast<int>(xt.cols());
  mean->assign(p, 0.0);
  stdev->assign(p, 1.0);
  for (int c = 0; c < p; ++c) {
    const double m = xt.col(c).mean();
    const double var = (xt.col(c).array() - m).square().mean();
    (*mean)[c] = m;
    const double s = std::sqrt(var);
    (*stdev)[c] = s < 1e-12 ? 1.0 : s;
  }
}

MatrixXd apply_standardize(MatrixXd x, const std::vector<double>& mean,
                           const std::vector<double>& stdev) {
  for (int c = 0; c < x.cols(); ++c) {
    x.col(c) = (x.col(c).array() - mean[c]) / stdev[c];
  }
  return x;
}

// Ridge on standardized features: w = (X'X + alpha I)^-1 X'(y - mean(y)),
// intercept = mean(y). Exact because standardized columns have zero mean.
void ridge_fit(const MatrixXd& xs, const VectorXd& y, double alpha, std::vector<double>* w,
               double* intercept) {
  const int p = static_cast<int>(xs.cols());
  const double ybar = y.mean();
  MatrixXd gram = xs.transpose() * xs;
  gram.diagonal().array() += alpha;
  const VectorXd rhs = xs.transpose() * (y.array() - ybar).matrix();
  const VectorXd sol = gram.ldlt().solve(rhs);
  w->assign(sol.data(), sol.data() + p);
  *intercept = ybar;
}

double ridge_val_rmse(const std::vector<double>& w, double intercept, const MatrixXd& xv,
                      const VectorXd& yv) {
  double sse = 0;
  for (int r = 0; r < xv.rows(); ++r) {
    double pred = intercept;
    for (int c = 0; c < xv.cols(); ++c) pred += w[c] * xv(r, c);
    const double e = pred - yv(r);
    sse += e * e;
  }
  return std::sqrt(sse / xv.rows());
}

// Row-major (n_classes x (p + 1)) with bias first, matching ProbeModel.
MatrixXd softmax_probs(const MatrixXd& xaug, const MatrixXd& w) {
  MatrixXd logits = xaug * w.transpose();
  for (int r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - m).exp();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits;
}

// Largest eigenvalue of X'X / n by power iteration, for a safe step size.
double top_eigenvalue(const MatrixXd& xaug) {
  VectorXd v = VectorXd::Ones(xaug.cols());
  v.normalize();
  double lambda = 1.0;
  for (int it = 0; it < 30; ++it) {
    VectorXd next = xaug.transpose() * (xaug * v) / xaug.rows();
    lambda = next.norm();
    if (lambda <= 0) return 1.0;
    v = next / lambda;
  }
  return lambda;
}

// Multinomial logistic regression by full-batch Nesterov gradient descent on
// standardized features. Convex, zero init, step 1/L with L from the softmax
// Hessian bound 0.5 * lambda_max(X'X/n) + alpha.
MatrixXd logistic_fit(const MatrixXd& xs, const std::vector<int>& y_class, int n_classes,
                      double alpha) {
  const int n = static_cast<int>(xs.rows());
  const int p = static_cast<int>(xs.cols());
  MatrixXd xaug(n, p + 1);
  xaug.col(0).setOnes();
  xaug.rightCols(p) = xs;

  const double lr = 1.0 / (0.5 * top_eigenvalue(xaug) + alpha);
  MatrixXd w = MatrixXd::Zero(n_classes, p + 1);
  MatrixXd vel = MatrixXd::Zero(n_classes, p + 1);
  MatrixXd onehot = MatrixXd::Zero(n, n_classes);
  for (int r = 0; r < n; ++r) onehot(r, y_class[r]) = 1.0;

  for (int it = 0; it < kLogitIters; ++it) {
    const MatrixXd look = w + kLogitMomentum * vel;
    const MatrixXd probs = softmax_probs(xaug, look);
    MatrixXd grad = (probs - onehot).transpose() * xaug / n;
    grad.rightCols(p) += alpha * look.rightCols(p);  // bias unpenalized
    vel = kLogitMomentum * vel - lr * grad;
    w += vel;
  }
  return w;
}

int logistic_predict_row(const MatrixXd& w, const double* xs_row, int p) {
  int best = 0;
  double best_score = 0;
  for (int c = 0; c < w.rows(); ++c) {
    double score = w(c, 0);
    for (int j = 0; j < p; ++j) score += w(c, j + 1) * xs_row[j];
    if (c == 0 || score > best_score) {
      best = c;
      best_score = score;
    }
  }
  return best;
}

double logistic_val_accuracy(const MatrixXd& w, const MatrixXd& xv, const std::vector<int>& yv) {
  if (xv.rows() == 0) return 0;
  int hits = 0;
  std::vector<double> row(xv.cols());
  for (int r = 0; r < xv.rows(); ++r) {
    for (int c = 0; c < xv.cols(); ++c) row[c] = xv(r, c);
    if (logistic_predict_row(w, row.data(), static_cast<int>(xv.cols())) == yv[r]) ++hits;
  }
  return static_cast<double>(hits) / xv.rows();
}

std::vector<int> class_indices(const std::vector<std::string>& labels, const std::vector<int>& idx,
                               const std::vector<std::string>& classes) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), labels[i]);
    if (it == classes.end() || *it != labels[i]) {
      out.push_back(-1);  // label unseen at fit time, can never be predicted
    } else {
      out.push_back(static_cast<int>(it - classes.begin()));
    }
  }
  return out;
}

void accumulate(double v, double* sum, double* sumsq) {
  *sum += v;
  *sumsq += v * v;
}

void finish(double sum, double sumsq, int runs, double* mean, double* stdev) {
  *mean = sum / runs;
  if (runs < 2) {
    *stdev = 0;
    return;
  }
  const double var = (sumsq - sum * sum / runs) / (runs - 1);
  *stdev = var > 0 ? std::sqrt(var) : 0.0;
}

}  // namespace

ProbeModel fit_probe(ProbeKind kind, const std::vector<double>& x, int n, int p,
                     const std::vector<double>& y, const std::vector<std::string>& labels,
                     const std::vector<int>& train_idx, const std::vector<int>& val_idx) {
  if (n < 10) throw Error("fit_probe: need at least 10 rows");
  if (static_cast<std::size_t>(n) * p != x.size()) throw Error("fit_probe: feature matrix shape mismatch");
  if (train_idx.empty() || val_idx.empty()) throw Error("fit_probe: empty train or val split");

  ProbeModel model;
  model.kind = kind;

  const MatrixXd xt_raw = gather_rows(x, n, p, train_idx);
  const MatrixXd xv_raw = gather_rows(x, n, p, val_idx);
  std::vector<double> mean, stdev;
  standardize_stats(xt_raw, &mean, &stdev);
  const MatrixXd xt = apply_standardize(xt_raw, mean, stdev);
  const MatrixXd xv = apply_standardize(xv_raw, mean, stdev);

  if (kind == ProbeKind::Ridge) {
    if (y.size() != static_cast<std::size_t>(n)) throw Error("fit_probe: target length mismatch");
    VectorXd yt(train_idx.size());
    VectorXd yv(val_idx.size());
    for (std::size_t i = 0; i < train_idx.size(); ++i) yt(static_cast<Eigen::Index>(i)) = y[train_idx[i]];
    for (std::size_t i = 0; i < val_idx.size(); ++i) yv(static_cast<Eigen::Index>(i)) = y[val_idx[i]];

    double best_alpha = kRidgeAlphas[0];
    double best_rmse = 0;
    bool first = true;
    for (double alpha : kRidgeAlphas) {
      std::vector<double> w;
      double b = 0;
      ridge_fit(xt, yt, alpha, &w, &b);
      const double rmse = ridge_val_rmse(w, b, xv, yv);
      if (first || rmse < best_rmse) {
        best_rmse = rmse;
        best_alpha = alpha;
        first = false;
      }
    }

    // refit on train + val with the selected strength
    std::vector<int> both(train_idx);
    both.insert(both.end(), val_idx.begin(), val_idx.end());
    const MatrixXd xb_raw = gather_rows(x, n, p, both);
    standardize_stats(xb_raw, &model.feat_mean, &model.feat_std);
    const MatrixXd xb = apply_standardize(xb_raw, model.feat_mean, model.feat_std);
    VectorXd yb(both.size());
    for (std::size_t i = 0; i < both.size(); ++i) yb(static_cast<Eigen::Index>(i)) = y[both[i]];
    model.alpha = best_alpha;
    ridge_fit(xb, yb, best_alpha, &model.w, &model.intercept);
    return model;
  }

  if (labels.size() != static_cast<std::size_t>(n)) throw Error("fit_probe: label length mismatch");
  std::set<std::string> seen;
  for (int i : train_idx) seen.insert(labels[i]);
  for (int i : val_idx) seen.insert(labels[i]);
  model.classes.assign(seen.begin(), seen.end());
  if (model.classes.size() < 2) throw Error("fit_probe: need at least 2 classes");

  const std::vector<int> yt = class_indices(labels, train_idx, model.classes);
  const std::vector<int> yv = class_indices(labels, val_idx, model.classes);
  const int n_classes = static_cast<int>(model.classes.size());

  double best_alpha = kLogitAlphas[0];
  double best_acc = -1;
  for (double alpha : kLogitAlphas) {
    const MatrixXd w = logistic_fit(xt, yt, n_classes, alpha);
    const double acc = logistic_val_accuracy(w, xv, yv);
    if (acc > best_acc) {
      best_acc = acc;
      best_alpha = alpha;
    }
  }

  std::vector<int> both(train_idx);
  both.insert(both.end(), val_idx.begin(), val_idx.end());
  const MatrixXd xb_raw = gather_rows(x, n, p, both);
  standardize_stats(xb_raw, &model.feat_mean, &model.feat_std);
  const MatrixXd xb = apply_standardize(xb_raw, model.feat_mean, model.feat_std);
  const std::vector<int> yb = class_indices(labels, both, model.classes);
  model.alpha = best_alpha;
  const MatrixXd w = logistic_fit(xb, yb, n_classes, best_alpha);
  model.logit_w.assign(w.size(), 0.0);
  for (int c = 0; c < w.rows(); ++c) {
    for (int j = 0; j < w.cols(); ++j) model.logit_w[c * w.cols() + j] = w(c, j);
  }
  return model;
}

ProbeMetrics evaluate_probe(const ProbeModel& model, const std::vector<double>& x, int n, int p,
                            const std::vector<double>& y, const std::vector<std::string>& labels,
                            const std::vector<int>& idx) {
  if (idx.empty()) throw Error("evaluate_probe: empty index set");
  const MatrixXd xr = apply_standardize(gather_rows(x, n, p, idx), model.feat_mean, model.feat_std);

  ProbeMetrics m;
  if (model.kind == ProbeKind::Ridge) {
    double sse = 0, sae = 0, sape = 0;
    double ybar = 0;
    m.has_mape = true;
    for (int i : idx) {
      ybar += y[i];
      if (y[i] == 0.0) m.has_mape = false;
    }
    ybar /= idx.size();
    double sst = 0;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double pred = model.intercept;
      for (int c = 0; c < p; ++c) pred += model.w[c] * xr(static_cast<Eigen::Index>(r), c);
      const double truth = y[idx[r]];
      const double e = pred - truth;
      sse += e * e;
      sae += std::fabs(e);
      sst += (truth - ybar) * (truth - ybar);
      if (m.has_mape) sape += std::fabs(e) / std::fabs(truth);
    }
    m.rmse = std::sqrt(sse / idx.size());
    m.mae = sae / idx.size();
    m.r2 = sst > 0 ? 1.0 - sse / sst : 0.0;
    if (m.has_mape) m.mape = sape / idx.size();
    return m;
  }

  m.classification = true;
  const int n_classes = static_cast<int>(model.classes.size());
  const int stride = p + 1;
  if (model.logit_w.size() != static_cast<std::size_t>(n_classes) * stride) {
    throw Error("evaluate_probe: logistic weight shape mismatch");
  }
  MatrixXd w(n_classes, stride);
  for (int c = 0; c < n_classes; ++c) {
    for (int j = 0; j < stride; ++j) w(c, j) = model.logit_w[c * stride + j];
  }

  // label universe: fit-time classes plus any truth labels only seen here
  std::set<std::string> universe(model.classes.begin(), model.classes.end());
  for (int i : idx) universe.insert(labels[i]);
  std::map<std::string, int> tp, fp, fn, support;
  for (const std::string& c : universe) tp[c] = fp[c] = fn[c] = support[c] = 0;

  int hits = 0;
  std::vector<double> row(p);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (int c = 0; c < p; ++c) row[c] = xr(static_cast<Eigen::Index>(r), c);
    const std::string& truth = labels[idx[r]];
    const std::string& pred = model.classes[logistic_predict_row(w, row.data(), p)];
    ++support[truth];
    if (pred == truth) {
      ++hits;
      ++tp[truth];
    } else {
      ++fp[pred];
      ++fn[truth];
    }
  }
  m.accuracy = static_cast<double>(hits) / idx.size();

  double macro = 0, weighted = 0;
  for (const std::string& c : universe) {
    const int denom = 2 * tp[c] + fp[c] + fn[c];
    const double f1 = denom > 0 ? 2.0 * tp[c] / denom : 0.0;
    m.class_f1[c] = f1;
    macro += f1;
    weighted += f1 * support[c];
  }
  m.macro_f1 = macro / universe.size();
  m.weighted_f1 = weighted / static_cast<double>(idx.size());
  return m;
}

MetricReport run_probe_protocol(ProbeKind kind, const std::vector<double>& x, int n, int p,
                                const std::vector<double>& y,
                                const std::vector<std::string>& labels, std::uint64_t base_seed,
                                int runs) {
  if (n < 10) throw Error("run_probe_protocol: need at least 10 rows");
  if (runs < 1) throw Error("run_probe_protocol: need at least 1 run");

  MetricReport report;
  report.classification = kind == ProbeKind::Logistic;
  report.runs = runs;
  report.has_mape = !report.classification;

  double s_rmse = 0, q_rmse = 0, s_mae = 0, q_mae = 0, s_r2 = 0, q_r2 = 0, s_mape = 0, q_mape = 0;
  double s_acc = 0, q_acc = 0, s_mf1 = 0, q_mf1 = 0, s_wf1 = 0, q_wf1 = 0;
  std::map<std::string, double> f1_sum;

  for (int run = 0; run < runs; ++run) {
    Rng rng(base_seed + static_cast<std::uint64_t>(run));
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    const int n_train = n / 2;
    const int n_val = n / 4;
    const std::vector<int> train_idx(perm.begin(), perm.begin() + n_train);
    const std::vector<int> val_idx(perm.begin() + n_train, perm.begin() + n_train + n_val);
    const std::vector<int> test_idx(perm.begin() + n_train + n_val, perm.end());

    const ProbeModel model = fit_probe(kind, x, n, p, y, labels, train_idx, val_idx);
    const ProbeMetrics m = evaluate_probe(model, x, n, p, y, labels, test_idx);

    if (report.classification) {
      accumulate(m.accuracy, &s_acc, &q_acc);
      accumulate(m.macro_f1, &s_mf1, &q_mf1);
      accumulate(m.weighted_f1, &s_wf1, &q_wf1);
      for (const auto& [cls, f1] : m.class_f1) f1_sum[cls] += f1;
    } else {
      accumulate(m.rmse, &s_rmse, &q_rmse);
      accumulate(m.mae, &s_mae, &q_mae);
      accumulate(m.r2, &s_r2, &q_r2);
      if (m.has_mape) {
        accumulate(m.mape, &s_mape, &q_mape);
      } else {
        report.has_mape = false;
      }
    }
  }

  if (report.classification) {
    finish(s_acc, q_acc, runs, &report.accuracy_mean, &report.accuracy_std);
    finish(s_mf1, q_mf1, runs, &report.macro_f1_mean, &report.macro_f1_std);
    finish(s_wf1, q_wf1, runs, &report.weighted_f1_mean, &report.weighted_f1_std);
    for (const auto& [cls, total] : f1_sum) report.class_f1_mean[cls] = total / runs;
  } else {
    finish(s_rmse, q_rmse, runs, &report.rmse_mean, &report.rmse_std);
    finish(s_mae, q_mae, runs, &report.mae_mean, &report.mae_std);
    finish(s_r2, q_r2, runs, &report.r2_mean, &report.r2_std);
    if (report.has_mape) finish(s_mape, q_mape, runs, &report.mape_mean, &report.mape_std);
  }
  return report;
}

std::string metric_report_csv(const MetricReport& report) {
  std::string out = "metric,mean,std\n";
  out += "runs," + std::to_string(report.runs) + ",\n";
  const auto row = [&out](const std::string& name, double mean, double stdev) {
    out += name + "," + fmt_double(mean) + "," + fmt_double(stdev) + "\n";
  };
  if (report.classification) {
    row("accuracy", report.accuracy_mean, report.accuracy_std);
    row("macro_f1", report.macro_f1_mean, report.macro_f1_std);
    row("weighted_f1", report.weighted_f1_mean, report.weighted_f1_std);
    for (const auto& [cls, f1] : report.class_f1_mean) {
      out += "f1:" + cls + "," + fmt_double(f1) + ",\n";
    }
  } else {
    row("rmse", report.rmse_mean, report.rmse_std);
    row("mae", report.mae_mean, report.mae_std);
    row("r2", report.r2_mean, report.r2_std);
    if (report.has_mape) row("mape", report.mape_mean, report.mape_std);
  }
  return out;
}

}  // namespace cityfm
