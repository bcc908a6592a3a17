#include "synth/its.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>

namespace synth::its {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kMaxOrder = 3;
constexpr int kMinPoints = 24;

}  // namespace

std::string to_string(const Order& o) {
  return "(" + std::to_string(o.p) + "," + std::to_string(o.d) + "," + std::to_string(o.q) + ")";
}

MatrixXd design_matrix(Index n, Index t0) {
  if (t0 <= 0 || t0 >= n) {
    throw Error("intervention index " + std::to_string(t0) + " outside (0, " + std::to_string(n) + ")");
  }
  MatrixXd x(n, 4);
  for (Index t = 0; t < n; ++t) {
    const double d = t >= t0 ? 1.0 : 0.0;
    x(t, 0) = 1.0;
    x(t, 1) = static_cast<double>(t);
    x(t, 2) = d;
    x(t, 3) = static_cast<double>(t - t0) * d;
  }
  return x;
}

std::vector<SeriesPoint> regularize_daily(const std::vector<SeriesPoint>& points, GapPolicy policy) {
  std::vector<SeriesPoint> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i == 0) {
      out.push_back(points[i]);
      continue;
    }
    const auto& prev = points[i - 1];
    const int step = days_between(prev.date, points[i].date);
    if (step <= 0) throw Error("series dates must increase: " + format_date(points[i].date));
    if (step > 1) {
      if (policy == GapPolicy::reject) {
        throw Error("series has a gap of " + std::to_string(step - 1) + " day(s) after " + format_date(prev.date));
      }
      for (int k = 1; k < step; ++k) {
        const double w = static_cast<double>(k) / step;
        out.push_back({add_days(prev.date, k), (1 - w) * prev.value + w * points[i].value});
      }
    }
    out.push_back(points[i]);
  }
  return out;
}

std::vector<SeriesPoint> resample(const std::vector<SeriesPoint>& daily, int days) {
  if (days < 1) throw Error("cadence must be at least one day");
  if (days == 1) return daily;
  std::vector<SeriesPoint> out;
  for (std::size_t i = 0; i < daily.size(); i += static_cast<std::size_t>(days)) {
    const auto end = std::min(daily.size(), i + static_cast<std::size_t>(days));
    double sum = 0;
    for (std::size_t j = i; j < end; ++j) sum += daily[j].value;
    out.push_back({daily[i].date, sum / static_cast<double>(end - i)});
  }
  return out;
}

Index intervention_index(const std::vector<SeriesPoint>& series, Date when) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].date >= when) return static_cast<Index>(i);
  }
  return static_cast<Index>(series.size());
}

std::string_view to_string(Stars s) {
  switch (s) {
    case Stars::one: return "*";
    case Stars::two: return "**";
    case Stars::three: return "***";
    default: return "";
  }
}

Stars stars_for(double p) {
  if (!(p < 0.05)) return Stars::ns;
  if (p < 0.001) return Stars::three;
  if (p < 0.01) return Stars::two;
  return Stars::one;
}

namespace {

// Durbin-Levinson map from partial autocorrelations in (-1, 1) to the
// coefficients of a stationary AR polynomial 1 - sum phi_i z^i.
VectorXd pacf_to_coef(const VectorXd& r) {
  VectorXd phi = VectorXd::Zero(r.size());
  for (Index k = 0; k < r.size(); ++k) {
    VectorXd prev = phi.head(k);
    for (Index i = 0; i < k; ++i) phi(i) = prev(i) - r(k) * prev(k - 1 - i);
    phi(k) = r(k);
  }
  return phi;
}

struct Arma {
  VectorXd phi;
  VectorXd theta;
};

// Unconstrained point to (phi, theta). Theta is the negated stationary map,
// so 1 + sum theta_j z^j has its roots outside the unit circle.
Arma unpack(const VectorXd& z, int p, int q) {
  return {pacf_to_coef(z.head(p).array().tanh().matrix()), -pacf_to_coef(z.tail(q).array().tanh().matrix())};
}

// Innovations e_t = w_t - sum phi_i w_{t-i} - sum theta_j e_{t-j} for
// t >= start, with earlier innovations taken as zero. Applied column-wise.
MatrixXd innovations(const MatrixXd& w, const Arma& arma, Index start) {
  const Index m = w.rows();
  MatrixXd e = MatrixXd::Zero(m, w.cols());
  for (Index t = start; t < m; ++t) {
    e.row(t) = w.row(t);
    for (Index i = 0; i < arma.phi.size(); ++i) e.row(t) -= arma.phi(i) * w.row(t - 1 - i);
    for (Index j = 0; j < arma.theta.size() && t - 1 - j >= start; ++j) e.row(t) -= arma.theta(j) * e.row(t - 1 - j);
  }
  return e.bottomRows(m - start);
}

// The regression problem after differencing: response, regressors, and
// which of the four design columns survive.
struct Problem {
  VectorXd y;
  MatrixXd x;
  std::vector<int> columns;
  Index start = 0;  // first innovation index in the differenced series
  int p = 0;
  int q = 0;
};

Problem make_problem(const ITSSpec& spec, const FitOptions& options) {
  const auto& o = spec.order;
  if (o.p < 0 || o.p > kMaxOrder || o.q < 0 || o.q > kMaxOrder) throw Error("p and q must lie in 0..3");
  if (o.d < 0 || o.d > 1) throw Error("d must be 0 or 1");
  const Index n = spec.y.size();
  if (n < kMinPoints + o.p + o.q) {
    throw Error("series of " + std::to_string(n) + " points is too short for order " + to_string(o));
  }
  if (!spec.y.allFinite()) throw Error("series has non-finite values");
  const MatrixXd x = design_matrix(n, spec.t0);
  Problem pr;
  pr.p = o.p;
  pr.q = o.q;
  const Index condition = options.condition < 0 ? o.p + o.d : options.condition;
  if (condition < o.p + o.d || condition >= n - 4) throw Error("conditioning window out of range");
  pr.start = condition - o.d;
  if (o.d == 0) {
    pr.y = spec.y;
    pr.x = x;
    pr.columns = {0, 1, 2, 3};
  } else {
    pr.y = spec.y.tail(n - 1) - spec.y.head(n - 1);
    const MatrixXd dx = x.bottomRows(n - 1) - x.topRows(n - 1);
    pr.x = dx.rightCols(3);
    pr.columns = {1, 2, 3};
  }
  return pr;
}

struct Profiled {
  VectorXd beta;
  VectorXd resid;
  double css = kInf;
};

// For fixed ARMA terms the innovations are linear in beta, so beta is an
// ordinary least-squares solve on the filtered data.
Profiled profile(const Problem& pr, const Arma& arma) {
  MatrixXd w(pr.x.rows(), pr.x.cols() + 1);
  w << pr.x, pr.y;
  const MatrixXd e = innovations(w, arma, pr.start);
  const Index k = pr.x.cols();
  Profiled out;
  out.beta = e.leftCols(k).colPivHouseholderQr().solve(e.col(k));
  out.resid = e.col(k) - e.leftCols(k) * out.beta;
  out.css = out.resid.squaredNorm();
  if (!std::isfinite(out.css)) out.css = kInf;
  return out;
}

// Sum of squares at explicit (beta, phi, theta), for the Hessian.
double css_at(const Problem& pr, const VectorXd& params) {
  const Index k = pr.x.cols();
  Arma arma{params.segment(k, pr.p), params.segment(k + pr.p, pr.q)};
  const VectorXd w = pr.y - pr.x * params.head(k);
  return innovations(w, arma, pr.start).squaredNorm();
}

struct Simplex {
  VectorXd x;
  double f = kInf;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

Simplex nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0, const FitOptions& opt) {
  const Index dim = x0.size();
  Simplex out;
  if (dim == 0) {
    out.x = x0;
    out.f = f(x0);
    out.converged = true;
    return out;
  }
  std::vector<VectorXd> v(static_cast<std::size_t>(dim + 1), x0);
  std::vector<double> fv(v.size());
  for (Index i = 0; i < dim; ++i) v[static_cast<std::size_t>(i + 1)](i) += 0.5;
  for (std::size_t i = 0; i < v.size(); ++i) fv[i] = f(v[i]);
  std::vector<std::size_t> idx(v.size());

  for (out.iterations = 0; out.iterations < opt.max_iterations; ++out.iterations) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const auto best = idx.front();
    const auto worst = idx.back();
    const auto second = idx[idx.size() - 2];
    double diameter = 0;
    for (const auto i : idx) diameter = std::max(diameter, (v[i] - v[best]).lpNorm<Eigen::Infinity>());
    if (fv[worst] - fv[best] <= opt.f_tolerance * (std::abs(fv[best]) + opt.f_tolerance) &&
        diameter <= opt.x_tolerance) {
      out.converged = true;
      break;
    }
    VectorXd centroid = VectorXd::Zero(dim);
    for (const auto i : idx) {
      if (i != worst) centroid += v[i];
    }
    centroid /= static_cast<double>(dim);
    const VectorXd xr = centroid + (centroid - v[worst]);
    const double fr = f(xr);
    if (fr < fv[best]) {
      const VectorXd xe = centroid + 2.0 * (centroid - v[worst]);
      const double fe = f(xe);
      if (fe < fr) {
        v[worst] = xe;
        fv[worst] = fe;
      } else {
        v[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      v[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const VectorXd xc = outside ? VectorXd(centroid + 0.5 * (xr - centroid))
                                  : VectorXd(centroid + 0.5 * (v[worst] - centroid));
      const double fc = f(xc);
      if (fc < (outside ? fr : fv[worst])) {
        v[worst] = xc;
        fv[worst] = fc;
      } else {
        for (const auto i : idx) {
          if (i == best) continue;
          v[i] = v[best] + 0.5 * (v[i] - v[best]);
          fv[i] = f(v[i]);
        }
      }
    }
    out.trace.push_back(*std::min_element(fv.begin(), fv.end()));
  }
  const auto at = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  out.x = v[at];
  out.f = fv[at];
  return out;
}

// Central-difference Hessian with step h_i = rel * max(|x_i|, 1).
MatrixXd hessian(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double rel) {
  const Index k = x.size();
  MatrixXd h(k, k);
  VectorXd step(k);
  for (Index i = 0; i < k; ++i) step(i) = rel * std::max(std::abs(x(i)), 1.0);
  const double f0 = f(x);
  for (Index i = 0; i < k; ++i) {
    VectorXd a = x, b = x;
    a(i) += step(i);
    b(i) -= step(i);
    h(i, i) = (f(a) - 2 * f0 + f(b)) / (step(i) * step(i));
    for (Index j = 0; j < i; ++j) {
      VectorXd pp = x, pm = x, mp = x, mm = x;
      pp(i) += step(i), pp(j) += step(j);
      pm(i) += step(i), pm(j) -= step(j);
      mp(i) -= step(i), mp(j) += step(j);
      mm(i) -= step(i), mm(j) -= step(j);
      h(i, j) = h(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * step(i) * step(j));
    }
  }
  return h;
}

double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace

ITSResult fit_its(const ITSSpec& spec, const FitOptions& options) {
  const Problem pr = make_problem(spec, options);
  const auto objective = [&](const VectorXd& z) { return profile(pr, unpack(z, pr.p, pr.q)).css; };
  const auto simplex = nelder_mead(objective, VectorXd::Zero(pr.p + pr.q), options);
  const Arma arma = unpack(simplex.x, pr.p, pr.q);
  const Profiled best = profile(pr, arma);

  ITSResult r;
  r.order = spec.order;
  r.t0 = spec.t0;
  r.phi.assign(arma.phi.data(), arma.phi.data() + arma.phi.size());
  r.theta.assign(arma.theta.data(), arma.theta.data() + arma.theta.size());
  r.css = best.css;
  r.n_used = best.resid.size();
  r.residuals = best.resid;
  r.sigma2 = r.css / static_cast<double>(r.n_used);
  r.iterations = simplex.iterations;
  r.converged = simplex.converged;
  r.css_trace = simplex.trace;
  const Index k = pr.x.cols();
  const auto n_params = static_cast<double>(k + pr.p + pr.q);
  const double scale = spec.y.cwiseAbs().maxCoeff();
  r.degenerate = r.css <= 1e-20 * std::max(1.0, scale * scale) * static_cast<double>(r.n_used);
  r.aic = r.degenerate ? -kInf
                       : static_cast<double>(r.n_used) * std::log(r.sigma2) + 2 * n_params;

  for (Index i = 0; i < k; ++i) {
    auto& c = r.beta[static_cast<std::size_t>(pr.columns[static_cast<std::size_t>(i)])];
    c.estimate = best.beta(i);
  }
  if (spec.order.d == 1) {
    r.beta[0] = {spec.y(0), kNaN, kNaN, Stars::ns, false};
  }
  if (r.degenerate) {
    for (auto& c : r.beta) {
      if (!c.identified) continue;
      c.se = 0;
      c.p_value = kNaN;
      c.stars = Stars::ns;
    }
  } else {
    VectorXd params(k + pr.p + pr.q);
    params << best.beta, arma.phi, arma.theta;
    const MatrixXd h = hessian([&](const VectorXd& x) { return css_at(pr, x); }, params, options.hessian_step);
    // The CSS is -2 sigma^2 times the conditional log-likelihood up to a
    // constant, so the covariance is 2 sigma^2 H^-1.
    const MatrixXd cov = 2 * r.sigma2 * h.fullPivLu().inverse();
    for (Index i = 0; i < k; ++i) {
      auto& c = r.beta[static_cast<std::size_t>(pr.columns[static_cast<std::size_t>(i)])];
      const double var = cov(i, i);
      c.se = var > 0 && std::isfinite(var) ? std::sqrt(var) : kNaN;
      c.p_value = std::isfinite(c.se) ? normal_two_sided(c.estimate / c.se) : kNaN;
      c.stars = stars_for(c.p_value);
    }
  }
  if (!simplex.converged) {
    throw FitError("order " + to_string(spec.order) + " did not converge in " +
                       std::to_string(options.max_iterations) + " iterations (best CSS " +
                       std::to_string(r.css) + ")",
                   r);
  }
  return r;
}

Selection select_order(const VectorXd& y, Index t0, const FitOptions& options) {
  Selection sel;
  if (y.size() > 0 && (y.array() == y(0)).all()) {
    sel.fit = fit_its({y, t0, {}}, options);
    sel.fit.degenerate = true;
    sel.aic_by_order[to_string(sel.order)] = sel.fit.aic;
    return sel;
  }
  std::vector<Order> grid;
  for (int d = 0; d <= 1; ++d) {
    for (int p = 0; p <= kMaxOrder; ++p) {
      for (int q = 0; q <= kMaxOrder; ++q) grid.push_back({p, d, q});
    }
  }
  // Fewer parameters first so that a tie keeps the smaller model.
  std::stable_sort(grid.begin(), grid.end(), [](const Order& a, const Order& b) {
    return a.p + a.q - a.d < b.p + b.q - b.d;
  });
  FitOptions common = options;
  common.condition = kMaxOrder + 1;
  std::optional<Order> best;
  double best_aic = kInf;
  std::string failures;
  for (const auto& o : grid) {
    try {
      const auto fit = fit_its({y, t0, o}, common);
      sel.aic_by_order[to_string(o)] = fit.aic;
      if (fit.aic < best_aic) {
        best_aic = fit.aic;
        best = o;
      }
    } catch (const Error& e) {
      failures += std::string(failures.empty() ? "" : "; ") + e.what();
    }
  }
  if (!best) throw Error("no order could be fitted: " + failures);
  sel.order = *best;
  sel.fit = fit_its({y, t0, *best}, options);
  return sel;
}

std::vector<ITSResult> fit_many(const std::vector<ITSSpec>& specs, int jobs, const FitOptions& options) {
  std::vector<ITSResult> out(specs.size());
  std::vector<std::exception_ptr> errors(specs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        out[i] = fit_its(specs[i], options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), specs.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::string format_effect(const Coef& c) {
  if (!c.identified || !std::isfinite(c.estimate)) return "-";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%+.2f%%", c.estimate);
  return std::string(buf) + std::string(to_string(c.stars));
}

std::vector<TableRow> report_table(const std::vector<GroupFit>& fits) {
  std::vector<std::string> strata = {"ALL", "B10K", "B100K", "B1M", "B10M", "B10Mplus"};
  for (const auto& g : fits) {
    if (std::find(strata.begin(), strata.end(), g.stratum) == strata.end()) strata.push_back(g.stratum);
  }
  std::vector<TableRow> rows;
  for (const auto& s : strata) {
    TableRow row{s, {"-", "-", "-", "-"}};
    bool any = false;
    for (const auto& g : fits) {
      if (g.stratum != s) continue;
      const std::size_t col = g.reliability == "unreliable" ? 0 : g.reliability == "reliable" ? 2 : 4;
      if (col > 2) continue;
      row.cells[col] = format_effect(g.fit.beta[2]);
      row.cells[col + 1] = format_effect(g.fit.beta[3]);
      any = true;
    }
    if (any) rows.push_back(row);
  }
  return rows;
}

std::string table_text(const std::vector<TableRow>& rows) {
  const std::array<std::string, 5> header = {"stratum", "misinfo_level", "misinfo_trend", "mainstream_level",
                                             "mainstream_trend"};
  std::array<std::size_t, 5> width{};
  for (std::size_t i = 0; i < 5; ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    width[0] = std::max(width[0], r.stratum.size());
    for (std::size_t i = 0; i < 4; ++i) width[i + 1] = std::max(width[i + 1], r.cells[i].size());
  }
  const auto line = [&](const std::array<std::string, 5>& f) {
    std::string s = f[0] + std::string(width[0] - f[0].size(), ' ');
    for (std::size_t i = 1; i < 5; ++i) s += "  " + std::string(width[i] - f[i].size(), ' ') + f[i];
    return s + '\n';
  };
  std::string out = line(header);
  for (const auto& r : rows) out += line({r.stratum, r.cells[0], r.cells[1], r.cells[2], r.cells[3]});
  out += "* p<0.05  ** p<0.01  *** p<0.001\n";
  return out;
}

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string to_csv(const std::vector<GroupFit>& fits) {
  std::string out = "class,stratum,order,t0,n_used";
  for (const char* b : {"beta0", "beta1", "beta2", "beta3"}) {
    out += std::string(",") + b + "," + b + "_se," + b + "_p," + b + "_stars";
  }
  out += ",phi,theta,sigma2,aic,flags\n";
  for (const auto& g : fits) {
    const auto& f = g.fit;
    out += g.reliability + ',' + g.stratum + ",\"" + to_string(f.order) + "\"," + std::to_string(f.t0) + ',' +
           std::to_string(f.n_used);
    for (const auto& c : f.beta) {
      out += ',' + num(c.estimate) + ',' + num(c.se) + ',' + num(c.p_value) + ',' + std::string(to_string(c.stars));
    }
    const auto join = [](const std::vector<double>& v) {
      std::string s;
      for (const double x : v) s += (s.empty() ? "" : ";") + num(x);
      return s;
    };
    std::string flags;
    if (f.degenerate) flags = "degenerate";
    if (!f.beta[0].identified) flags += std::string(flags.empty() ? "" : ";") + "level_unidentified";
    out += ',' + join(f.phi) + ',' + join(f.theta) + ',' + num(f.sigma2) + ',' + num(f.aic) + ',' + flags + '\n';
  }
  return out;
}

}  // namespace synth::its
