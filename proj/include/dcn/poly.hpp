#pragma once

#include "dcn/cross.hpp"
#include "dcn/linalg.hpp"
#include "dcn/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dcn::poly {

// Exponent vector of a monomial; length = variable count d.
using MultiIndex = std::vector<int>;

inline int degree(const MultiIndex& a) {
    int s = 0;
    for (int e : a) s += e;
    return s;
}

// Sparse multivariate polynomial: multi-index -> coefficient.
// Coefficients with |c| < kPrune are dropped; floating-point products of
// many terms leave dust that would otherwise masquerade as monomials.
class SparsePolynomial {
  public:
    static constexpr double kPrune = 1e-12;

    SparsePolynomial() = default;
    explicit SparsePolynomial(Index vars) : vars_(vars) {}

    static SparsePolynomial constant(Index vars, double c);
    static SparsePolynomial monomial(Index vars, Index var, double c = 1.0);

    Index vars() const { return vars_; }
    const std::map<MultiIndex, double>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }
    int max_degree() const;

    double coefficient(const MultiIndex& a) const;
    void add_term(const MultiIndex& a, double c);

    SparsePolynomial& operator+=(const SparsePolynomial& o);
    SparsePolynomial operator+(const SparsePolynomial& o) const;
    SparsePolynomial operator*(const SparsePolynomial& o) const;
    SparsePolynomial operator*(double s) const;

    double eval(const Vector& x) const;

    std::string to_string() const;

  private:
    Index vars_ = 0;
    std::map<MultiIndex, double> terms_;
};

// One polynomial per coordinate of a symbolic vector x_l.
using PolyVector = std::vector<SparsePolynomial>;

struct TractabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Symbolic expansion of the cross network with all biases zero: every
// coordinate of x_l is tracked as a polynomial in the input variables,
// and the scalar readout x_l^T w_l is returned. Bounded to d <= 8, l <= 5.
SparsePolynomial symbolic_cross_forward(const cross::CrossParams& params);

// Closed-form readout g_l(x0): sum over all subsets of layer indices
// {0..l} that contain l of the product of (x0 . w_j) over the subset.
double closed_form_gl(const std::vector<Vector>& weights, const Vector& x0);

// Predicted coefficient of x^alpha in g_l as a double sum: strictly increasing
// layer-index tuples ending at the last layer, times all distinct
// arrangements of the monomial's variable multiset.
double coefficient_formula(const MultiIndex& alpha, const std::vector<Vector>& weights, int l);

struct TheoremReport {
    int d = 0;
    int l = 0;
    int trials = 0;
    bool degree_bound_ok = true;        // no coefficient above degree l+1
    bool closed_form_ok = true;         // closed form == numeric forward
    bool ratio_ok = true;               // symbolic/formula ratio weight-independent
    double max_closed_form_diff = 0.0;
    double max_ratio_spread = 0.0;
    // Per-alpha empirical constant (ratio symbolic/formula), from the last trial.
    std::map<MultiIndex, double> m_alpha;
    std::string failure;                // human-readable description when failed

    bool ok() const { return degree_bound_ok && closed_form_ok && ratio_ok; }
};

// Test hook: when set, coefficient_formula results are perturbed so a
// deliberately broken formula is seen to fail.
extern bool corrupt_coefficient_formula_for_test;

TheoremReport verify_theorem(int d, int l, int trials, std::uint64_t seed,
                             double closed_form_tol = 1e-9, double ratio_tol = 1e-6);

struct ProjectionResult {
    Vector fast;
    Vector explicit_path;
    std::uint64_t fast_mul_count = 0;
    std::uint64_t explicit_mul_count = 0;
};

// x0 (xt . w) computed two ways: the O(d) scalar-then-scale path and the
// explicit d^2 pairwise-interaction row against the block-diagonal
// projection matrix. Multiplications are counted for the scaling check.
ProjectionResult projection_equivalence(const Vector& x0, const Vector& xt, const Vector& w);

}  // namespace dcn::poly
