#include "ana/check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ana/errors.hpp"
#include "ana/grad_check.hpp"
#include "ana/kernels.hpp"
#include "ana/network.hpp"
#include "ana/random_maps.hpp"
#include "ana/report.hpp"
#include "ana/soc.hpp"

namespace ana {

SocKernels SocKernels::library() {
  return {[](const MatrixD& a) { return soc_cubic(a); }, [](const MatrixD& a) { return soc_quadratic(a); },
          [](const MatrixD& a) { return soc_linear(a); }};
}

CheckFault parse_check_fault(std::string_view name) {
  if (name == "none") return CheckFault::none;
  if (name == "quadratic-sign") return CheckFault::quadratic_sign;
  throw ConfigError("unknown fault '" + std::string(name) + "' (expected none|quadratic-sign)");
}

SocKernels with_fault(SocKernels k, CheckFault fault) {
  if (fault == CheckFault::quadratic_sign) {
    k.quadratic = [inner = k.quadratic](const MatrixD& a) {
      std::vector<double> h = inner(a);
      for (double& v : h) v = -v;
      return h;
    };
  }
  return k;
}

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

// Running worst case for one property. A NaN violation always fails.
struct Tracker {
  std::string name;
  double tol;
  double worst = 0.0;
  bool nan = false;

  void see(double v) {
    if (std::isnan(v)) nan = true;
    else worst = std::max(worst, v);
  }
  CheckLine line() const {
    return {name, !nan && worst <= tol, nan ? std::numeric_limits<double>::quiet_NaN() : worst, tol};
  }
};

MatrixD uniform_map(std::size_t n) { return MatrixD(n, n, 1.0 / static_cast<double>(n)); }

MatrixD permute_map(const MatrixD& a, std::span<const std::size_t> p) {
  MatrixD out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(p[i], p[j]);
  return out;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
double max_diff_rel(const std::vector<T>& a, const std::vector<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(double(a[i])), std::abs(double(b[i]))});
    m = std::max(m, std::abs(double(a[i]) - double(b[i])) / scale);
  }
  return m;
}

void soc_properties(const CheckOptions& opts, std::vector<CheckLine>& out) {
  const SocKernels& k = opts.kernels;
  std::mt19937_64 rng(opts.seed);
  const std::size_t maps = opts.fast ? 100 : 1000;

  Tracker softmax{"softmax rows sum to one", 1e-12};
  Tracker chain{"bound chain sqrt2*S >= h_cubic >= sqrt((N+1)/N)*S", 1e-9};
  Tracker order{"h_linear >= h_quadratic", 1e-9};
  Tracker nonneg{"all forms non-negative", 1e-12};
  Tracker quad_sum{"h_quadratic = sqrt2 * off-diagonal similarity sum", 1e-9};
  for (std::size_t n : {4, 16, 64}) {
    const double lower = std::sqrt(static_cast<double>(n + 1) / static_cast<double>(n));
    for (std::size_t t = 0; t < maps; ++t) {
      const MatrixD a = random_row_stochastic<double>(n, rng);
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (double v : a.row(i)) row += v;
        softmax.see(std::abs(row - 1.0));
      }
      const auto hc = k.cubic(a);
      const auto hq = k.quadratic(a);
      const auto hl = k.linear(a);
      if (hc.size() != n || hq.size() != n || hl.size() != n) {
        chain.see(std::numeric_limits<double>::infinity());
        continue;
      }
      // S from the quadratic kernel so that every form is exercised.
      for (std::size_t i = 0; i < n; ++i) {
        const double s = hq[i] / kSqrt2;
        chain.see(std::max(hc[i] - kSqrt2 * s, lower * s - hc[i]));
        order.see(hq[i] - hl[i]);
        nonneg.see(std::max({-hc[i], -hq[i], -hl[i]}));
      }
      if (t % 10 == 0) {
        const auto offd = offdiag_similarity_sums(a);
        for (std::size_t i = 0; i < n; ++i) quad_sum.see(std::abs(hq[i] - kSqrt2 * offd[i]));
      }
    }
  }

  Tracker laplacian{"h_cubic = column norm of D - W (N=8)", 1e-9};
  Tracker expansion{"s_i = w_ii + sum_{j!=i} w_ij (N=8)", 1e-9};
  for (std::size_t t = 0; t < 100; ++t) {
    const MatrixD a = random_row_stochastic<double>(8, rng);
    const auto oracle = second_order_map_oracle(a);
    const auto norms = column_norms(oracle.laplacian);
    laplacian.see(max_diff(k.cubic(a), norms));
    const auto s = column_sums(a);
    for (std::size_t i = 0; i < 8; ++i) {
      double off = 0.0;
      for (std::size_t j = 0; j < 8; ++j)
        if (j != i) off += oracle.similarity(i, j);
      expansion.see(std::abs(s[i] - (oracle.similarity(i, i) + off)));
    }
  }

  Tracker collapse{"N=2 collapse h_cubic == h_quadratic", 1e-12};
  for (std::size_t t = 0; t < maps; ++t) {
    const MatrixD a = random_row_stochastic<double>(2, rng);
    collapse.see(max_diff(k.cubic(a), k.quadratic(a)));
  }

  Tracker anchors{"closed-form anchors (uniform and identity, N=4)", 1e-12};
  {
    const double c = std::sqrt(0.75);
    const double q = kSqrt2 * 0.75;
    const MatrixD u = uniform_map(4);
    const MatrixD id = MatrixD::identity(4);
    anchors.see(max_diff(k.cubic(u), std::vector<double>(4, c)));
    anchors.see(max_diff(k.quadratic(u), std::vector<double>(4, q)));
    anchors.see(max_diff(k.linear(u), std::vector<double>(4, q)));
    anchors.see(max_diff(k.cubic(id), std::vector<double>(4, 0.0)));
    anchors.see(max_diff(k.quadratic(id), std::vector<double>(4, 0.0)));
    anchors.see(max_diff(k.linear(id), std::vector<double>(4, q)));
  }

  Tracker perm{"SOC forms permutation equivariant", 1e-12};
  for (std::size_t t = 0; t < (opts.fast ? 5u : 20u); ++t) {
    const MatrixD a = random_row_stochastic<double>(32, rng);
    const auto p = random_permutation(32, rng);
    const MatrixD pa = permute_map(a, p);
    for (const auto* kern : {&k.cubic, &k.quadratic, &k.linear}) {
      const auto h = (*kern)(a);
      const auto hp = (*kern)(pa);
      std::vector<double> expect(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) expect[i] = h[p[i]];
      perm.see(max_diff(hp, expect));
    }
  }

  for (const auto* t : {&softmax, &chain, &order, &nonneg, &quad_sum, &laplacian, &expansion, &collapse,
                        &anchors, &perm})
    out.push_back(t->line());
}

void kernel_agreement(const CheckOptions& opts, std::vector<CheckLine>& out) {
  std::mt19937_64 rng(opts.seed + 1);
  Tracker agree{"parallel kernels match serial reference", 1e-9};
  for (std::size_t n : {7, 64, 200}) {
    const MatrixD a = random_row_stochastic<double>(n, rng);
    const MatrixD b = random_matrix<double>(n, 5, rng);
    agree.see(max_abs_diff(matmul(a, b), reference::matmul(a, b)));
    const MatrixD logits = random_matrix<double>(n, n, rng, 3.0);
    agree.see(max_abs_diff(softmax_rows(logits), reference::softmax_rows(logits)));
    agree.see(max_diff_rel(column_sums(a), reference::column_sums(a)));
    agree.see(max_diff_rel(column_square_sums(a), reference::column_square_sums(a)));
    agree.see(max_diff_rel(soc_cubic(a), reference::soc_cubic(a)));
    agree.see(max_diff_rel(soc_quadratic(a), reference::soc_quadratic(a)));
    agree.see(max_diff_rel(soc_linear(a), reference::soc_linear(a)));
  }
  out.push_back(agree.line());
}

MatrixD random_coords(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixD c(n, 4);
  for (double& v : c.values()) v = u(rng);
  return c;
}

void network_properties(const CheckOptions& opts, std::vector<CheckLine>& out) {
  std::mt19937_64 rng(opts.seed + 2);
  const std::size_t perms = opts.fast ? 5 : 20;

  NetConfig small;
  small.layers = 2;
  small.dim = 32;
  small.heads = 4;
  Tracker perm64{"network permutation equivariance (64-bit, N=64)", 1e-9};
  Tracker perm32{"network permutation equivariance (32-bit, N=64)", 1e-4};
  for (const SocForm form : {SocForm::linear, SocForm::quadratic, SocForm::cubic}) {
    NetConfig cfg = small;
    cfg.soc_form = form;
    const auto pd = ModelParams<double>::init(cfg, opts.seed);
    const auto pf = pd.cast<float>();
    for (std::size_t t = 0; t < perms; ++t) {
      const MatrixD c = random_coords(64, rng);
      const auto p = random_permutation(64, rng);
      const MatrixD pc = permute_rows(c, p);
      perm64.see(max_abs_diff(forward(pc, pd), permute_rows(forward(c, pd), p)));
      perm32.see(static_cast<double>(
          max_abs_diff(forward(pc.cast<float>(), pf), permute_rows(forward(c.cast<float>(), pf), p))));
    }
  }
  out.push_back(perm64.line());
  out.push_back(perm32.line());

  Tracker grad{"full-loss gradient vs central differences (64-bit)", 1e-4};
  for (const SocForm form : {SocForm::linear, SocForm::quadratic, SocForm::cubic}) {
    NetConfig cfg;
    cfg.layers = 1;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.soc_form = form;
    auto params = ModelParams<double>::init(cfg, opts.seed + 7);
    const MatrixD c = random_coords(8, rng);
    const std::vector<int> labels{1, 0, 1, 1, 0, 0, 1, 0};
    std::vector<MatrixD*> ptrs;
    params.for_each([&](const std::string&, MatrixD& m) { ptrs.push_back(&m); });
    // Biases whose effect the context norm cancels have exact zero
    // gradients; the 1e-6 floor keeps their difference-quotient round-off
    // (~1e-11) from reading as a relative error.
    try {
      const auto r = grad_check<double>(
          [&](Tape<double>& tape) { return weighted_bce_loss(forward(tape.constant(c), params), labels); },
          ptrs, 1e-5, 1e-6);
      grad.see(r.max_relative_error);
    } catch (const std::exception&) {
      grad.see(std::numeric_limits<double>::quiet_NaN());
    }
  }
  out.push_back(grad.line());

  Tracker ln2{"balanced zero-logit loss = ln 2", 1e-9};
  Tracker saturated{"saturated correct loss < 1e-8", 1e-8};
  {
    const std::vector<int> labels{1, 0, 0, 1, 0, 0, 0, 1};
    ln2.see(std::abs(weighted_bce_loss(MatrixD(8, 1, 0.0), labels) - std::numbers::ln2));
    MatrixD sat(8, 1);
    for (std::size_t i = 0; i < 8; ++i) sat(i, 0) = labels[i] ? 40.0 : -40.0;
    saturated.see(weighted_bce_loss(sat, labels));
  }
  out.push_back(ln2.line());
  out.push_back(saturated.line());

  Tracker mono{"alpha_sigmoid increasing in h (alpha > 0)", 0.0};
  for (double alpha : {0.1, 1.0, 3.0}) {
    double prev = alpha_sigmoid(-3.0, alpha);
    for (int i = 1; i <= 600; ++i) {
      const double v = alpha_sigmoid(-3.0 + 0.01 * i, alpha);
      mono.see(v > prev ? 0.0 : prev - v + std::numeric_limits<double>::min());
      prev = v;
    }
  }
  out.push_back(mono.line());
}

}  // namespace

std::vector<CheckLine> run_checks(const CheckOptions& opts) {
  std::vector<CheckLine> out;
  soc_properties(opts, out);
  kernel_agreement(opts, out);
  network_properties(opts, out);
  return out;
}

bool all_passed(const std::vector<CheckLine>& lines) {
  return std::all_of(lines.begin(), lines.end(), [](const CheckLine& l) { return l.passed; });
}

std::string format_check_report(const std::vector<CheckLine>& lines) {
  Table t{{"result", "property", "max_violation", "tolerance"}, {}};
  char buf[32];
  for (const auto& l : lines) {
    std::snprintf(buf, sizeof(buf), "%.3e", l.max_violation);
    std::string viol = buf;
    std::snprintf(buf, sizeof(buf), "%.0e", l.tolerance);
    t.rows.push_back({l.passed ? "PASS" : "FAIL", l.name, viol, buf});
  }
  return to_text(t);
}

}  // namespace ana
