#include "dcn/poly.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dcn::poly {

bool corrupt_coefficient_formula_for_test = false;

SparsePolynomial SparsePolynomial::constant(Index vars, double c) {
    SparsePolynomial p(vars);
    p.add_term(MultiIndex(static_cast<std::size_t>(vars), 0), c);
    return p;
}

SparsePolynomial SparsePolynomial::monomial(Index vars, Index var, double c) {
    SparsePolynomial p(vars);
    MultiIndex a(static_cast<std::size_t>(vars), 0);
    a[static_cast<std::size_t>(var)] = 1;
    p.add_term(a, c);
    return p;
}

int SparsePolynomial::max_degree() const {
    int best = 0;
    for (const auto& [a, c] : terms_) best = std::max(best, degree(a));
    return best;
}

double SparsePolynomial::coefficient(const MultiIndex& a) const {
    auto it = terms_.find(a);
    return it == terms_.end() ? 0.0 : it->second;
}

void SparsePolynomial::add_term(const MultiIndex& a, double c) {
    auto it = terms_.find(a);
    if (it == terms_.end()) {
        if (std::abs(c) >= kPrune) terms_.emplace(a, c);
        return;
    }
    it->second += c;
    if (std::abs(it->second) < kPrune) terms_.erase(it);
}

SparsePolynomial& SparsePolynomial::operator+=(const SparsePolynomial& o) {
    for (const auto& [a, c] : o.terms_) add_term(a, c);
    return *this;
}

SparsePolynomial SparsePolynomial::operator+(const SparsePolynomial& o) const {
    SparsePolynomial r = *this;
    r += o;
    return r;
}

SparsePolynomial SparsePolynomial::operator*(const SparsePolynomial& o) const {
    SparsePolynomial r(vars_);
    MultiIndex sum(static_cast<std::size_t>(vars_), 0);
    for (const auto& [a, ca] : terms_) {
        for (const auto& [b, cb] : o.terms_) {
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a[i] + b[i];
            r.add_term(sum, ca * cb);
        }
    }
    return r;
}

SparsePolynomial SparsePolynomial::operator*(double s) const {
    SparsePolynomial r(vars_);
    for (const auto& [a, c] : terms_) r.add_term(a, c * s);
    return r;
}

double SparsePolynomial::eval(const Vector& x) const {
    double total = 0.0;
    for (const auto& [a, c] : terms_) {
        double term = c;
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (int e = 0; e < a[i]; ++e) term *= x[static_cast<Index>(i)];
        }
        total += term;
    }
    return total;
}

std::string SparsePolynomial::to_string() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [a, c] : terms_) {
        if (!first) os << " + ";
        first = false;
        os << c;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] > 0) {
                os << "*x" << (i + 1);
                if (a[i] > 1) os << "^" << a[i];
            }
        }
    }
    if (first) os << "0";
    return os.str();
}

SparsePolynomial symbolic_cross_forward(const cross::CrossParams& params) {
    const Index d = params.dim;
    const Index lc = params.depth();
    if (d > 8 || lc > 6) throw TractabilityError("symbolic_cross_forward: d <= 8, depth <= 6");
    require(lc >= 1, "symbolic_cross_forward: needs at least one layer");
    for (const auto& b : params.b) {
        if (b.cwiseAbs().maxCoeff() != 0.0)
            throw std::invalid_argument("symbolic_cross_forward: biases must be zero");
    }

    PolyVector x0(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) x0[static_cast<std::size_t>(i)] = SparsePolynomial::monomial(d, i);

    PolyVector xl = x0;
    for (Index l = 0; l < lc; ++l) {
        const Vector& w = params.w[static_cast<std::size_t>(l)];
        SparsePolynomial s(d);  // x_l . w_l
        for (Index i = 0; i < d; ++i) s += xl[static_cast<std::size_t>(i)] * w[i];
        if (l == lc - 1) return s;  // readout uses the *input* of the final add, see below
        PolyVector next(static_cast<std::size_t>(d));
        for (Index i = 0; i < d; ++i)
            next[static_cast<std::size_t>(i)] = x0[static_cast<std::size_t>(i)] * s + xl[static_cast<std::size_t>(i)];
        xl = std::move(next);
    }
    return SparsePolynomial(d);  // unreachable
}

double closed_form_gl(const std::vector<Vector>& weights, const Vector& x0) {
    const int n = static_cast<int>(weights.size());  // layers 0..l, n = l+1
    require(n >= 1, "closed_form_gl: needs weights w_0..w_l");
    std::vector<double> a(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(j)] = x0.dot(weights[static_cast<std::size_t>(j)]);
    // Sum over subsets of {0..l-1}, with layer l always active.
    const std::uint64_t subsets = std::uint64_t{1} << (n - 1);
    double total = 0.0;
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        double prod = a[static_cast<std::size_t>(n - 1)];
        for (int j = 0; j < n - 1; ++j) {
            if (mask & (std::uint64_t{1} << j)) prod *= a[static_cast<std::size_t>(j)];
        }
        total += prod;
    }
    return total;
}

namespace {

// Distinct arrangements of the multiset {1^a1, ..., d^ad} as variable indices.
std::vector<std::vector<int>> multiset_permutations(const MultiIndex& alpha) {
    std::vector<int> base;
    for (std::size_t v = 0; v < alpha.size(); ++v) {
        for (int k = 0; k < alpha[v]; ++k) base.push_back(static_cast<int>(v));
    }
    std::sort(base.begin(), base.end());
    std::vector<std::vector<int>> out;
    do {
        out.push_back(base);
    } while (std::next_permutation(base.begin(), base.end()));
    return out;
}

// Strictly increasing tuples in {0..l}^p whose last entry is l.
void increasing_tuples(int l, int p, std::vector<std::vector<int>>& out) {
    std::vector<int> tuple(static_cast<std::size_t>(p));
    tuple[static_cast<std::size_t>(p - 1)] = l;
    if (p == 1) {
        out.push_back(tuple);
        return;
    }
    // choose p-1 values from {0..l-1}
    std::vector<int> idx(static_cast<std::size_t>(p - 1));
    for (int i = 0; i < p - 1; ++i) idx[static_cast<std::size_t>(i)] = i;
    if (p - 1 > l) return;  // impossible
    while (true) {
        for (int i = 0; i < p - 1; ++i) tuple[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i)];
        out.push_back(tuple);
        int i = p - 2;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == l - (p - 1 - i)) --i;
        if (i < 0) break;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < p - 1; ++j)
            idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

}  // namespace

double coefficient_formula(const MultiIndex& alpha, const std::vector<Vector>& weights, int l) {
    const int p = degree(alpha);
    if (p < 1 || p > l + 1) return 0.0;
    std::vector<std::vector<int>> layer_tuples;
    increasing_tuples(l, p, layer_tuples);
    const auto var_tuples = multiset_permutations(alpha);
    double total = 0.0;
    for (const auto& layers : layer_tuples) {
        for (const auto& vars : var_tuples) {
            double prod = 1.0;
            for (int k = 0; k < p; ++k)
                prod *= weights[static_cast<std::size_t>(layers[static_cast<std::size_t>(k)])][vars[static_cast<std::size_t>(k)]];
            total += prod;
        }
    }
    if (corrupt_coefficient_formula_for_test) total += 0.5;
    return total;
}

TheoremReport verify_theorem(int d, int l, int trials, std::uint64_t seed, double closed_form_tol,
                             double ratio_tol) {
    TheoremReport report;
    report.d = d;
    report.l = l;
    report.trials = trials;

    std::map<MultiIndex, double> ratio_min, ratio_max;

    for (int trial = 0; trial < trials; ++trial) {
        Rng rng = Rng(seed).split(static_cast<std::uint64_t>(trial));
        cross::CrossParams params;
        params.dim = d;
        for (int j = 0; j <= l; ++j) {
            Vector w(d);
            for (Index i = 0; i < d; ++i) w[i] = rng.uniform(-1.0, 1.0);
            params.w.push_back(std::move(w));
            params.b.push_back(Vector::Zero(d));
        }

        const SparsePolynomial g = symbolic_cross_forward(params);

        // (a) degree bound
        for (const auto& [a, c] : g.terms()) {
            if (degree(a) > l + 1) {
                report.degree_bound_ok = false;
                report.failure = "degree " + std::to_string(degree(a)) + " term at trial " +
                                 std::to_string(trial);
            }
        }

        // (b) closed form vs numeric forward readout
        for (int pt = 0; pt < 10; ++pt) {
            Vector x0(d);
            for (Index i = 0; i < d; ++i) x0[i] = rng.uniform(-1.0, 1.0);
            const auto acts = cross::cross_forward(params, x0);
            // readout g_l = x_l^T w_l uses the state entering the last layer's crossing
            const double numeric = acts.xs[static_cast<std::size_t>(l)].col(0).dot(params.w.back());
            const double closed = closed_form_gl(params.w, x0);
            const double symbolic = g.eval(x0);
            const double diff = std::max(std::abs(closed - numeric), std::abs(symbolic - numeric));
            report.max_closed_form_diff = std::max(report.max_closed_form_diff, diff);
            if (diff > closed_form_tol) {
                report.closed_form_ok = false;
                report.failure = "closed-form mismatch " + std::to_string(diff) + " at trial " +
                                 std::to_string(trial);
            }
        }

        // (c) per-alpha ratio symbolic / formula, constant across trials
        for (const auto& [a, c] : g.terms()) {
            const double formula = coefficient_formula(a, params.w, l);
            if (std::abs(formula) < 1e-12) {
                report.ratio_ok = false;
                report.failure = "formula coefficient vanished at trial " + std::to_string(trial);
                continue;
            }
            const double ratio = c / formula;
            report.m_alpha[a] = ratio;
            auto [itmin, insmin] = ratio_min.try_emplace(a, ratio);
            auto [itmax, insmax] = ratio_max.try_emplace(a, ratio);
            itmin->second = std::min(itmin->second, ratio);
            itmax->second = std::max(itmax->second, ratio);
        }
    }

    for (const auto& [a, lo] : ratio_min) {
        const double hi = ratio_max[a];
        const double spread = std::abs(hi - lo) / std::max(1e-12, std::abs(hi));
        report.max_ratio_spread = std::max(report.max_ratio_spread, spread);
        if (spread > ratio_tol) {
            report.ratio_ok = false;
            report.failure = "ratio spread " + std::to_string(spread) + " for a monomial of degree " +
                             std::to_string(degree(a));
        }
    }
    return report;
}

ProjectionResult projection_equivalence(const Vector& x0, const Vector& xt, const Vector& w) {
    const Index d = x0.size();
    require(xt.size() == d && w.size() == d, "projection_equivalence: length mismatch");
    require(d <= 64, "projection_equivalence: d <= 64");
    ProjectionResult r;

    // Fast path: scalar xt.w then scale x0. d multiplies for the dot, d for the scale.
    double s = 0.0;
    for (Index i = 0; i < d; ++i) s += xt[i] * w[i];
    r.fast = Vector(d);
    for (Index i = 0; i < d; ++i) r.fast[i] = x0[i] * s;
    r.fast_mul_count = static_cast<std::uint64_t>(2 * d);

    // Explicit path: the 1 x d^2 row of pairwise products times the d^2 x d
    // block-diagonal matrix whose i-th block column is w.
    Eigen::RowVectorXd pairwise(d * d);
    for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j < d; ++j) pairwise[i * d + j] = x0[i] * xt[j];
    }
    r.explicit_path = Vector::Zero(d);
    for (Index i = 0; i < d; ++i) {
        double acc = 0.0;
        for (Index j = 0; j < d; ++j) acc += pairwise[i * d + j] * w[j];
        r.explicit_path[i] = acc;
    }
    r.explicit_mul_count = static_cast<std::uint64_t>(2 * d * d);
    return r;
}

}  // namespace dcn::poly
