//! Univariate B-spline bases on clamped knot vectors and the spline edges
//! built on top of them.
//!
//! A [`KnotVector`] of degree `p` with `J` interior knots spans a basis of
//! dimension `J + p + 1`. Inputs outside the knot domain are clamped to the
//! nearest endpoint before the basis is evaluated, so every edge extends
//! as a constant beyond its domain.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sorted_copy};

/// Largest supported spline degree.
pub const MAX_DEGREE: usize = 7;
const MAX_ORDER: usize = MAX_DEGREE + 1;

/// Diagonal jitter for the least-squares refit.
const REFIT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotVectorRepr", into = "KnotVectorRepr")]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KnotVectorRepr {
    degree: usize,
    knots: Vec<f64>,
}

impl TryFrom<KnotVectorRepr> for KnotVector {
    type Error = Error;

    fn try_from(r: KnotVectorRepr) -> Result<Self> {
        KnotVector::from_knots(r.degree, r.knots)
    }
}

impl From<KnotVector> for KnotVectorRepr {
    fn from(k: KnotVector) -> Self {
        KnotVectorRepr {
            degree: k.degree,
            knots: k.knots,
        }
    }
}

impl KnotVector {
    /// Clamped knot vector with `interior_count` equally spaced interior knots.
    pub fn uniform(degree: usize, interior_count: usize, lo: f64, hi: f64) -> Result<Self> {
        let interior: Vec<f64> = (1..=interior_count)
            .map(|j| lo + (hi - lo) * j as f64 / (interior_count + 1) as f64)
            .collect();
        Self::from_interior(degree, lo, hi, &interior)
    }

    pub fn from_interior(degree: usize, lo: f64, hi: f64, interior: &[f64]) -> Result<Self> {
        let mut knots = Vec::with_capacity(interior.len() + 2 * (degree + 1));
        knots.extend(std::iter::repeat_n(lo, degree + 1));
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Self::from_knots(degree, knots)
    }

    /// Validates a full knot sequence (boundary knots included).
    pub fn from_knots(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::Knots(format!(
                "degree {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        let order = degree + 1;
        if knots.len() < 2 * order + 1 {
            return Err(Error::Knots(format!(
                "need at least one interior knot: {} knots for degree {degree}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Knots("non-finite knot".into()));
        }
        let lo = knots[0];
        let hi = knots[knots.len() - 1];
        if lo >= hi {
            return Err(Error::Knots(format!("empty domain [{lo}, {hi}]")));
        }
        let n = knots.len();
        if knots[..order].iter().any(|&k| k != lo) || knots[n - order..].iter().any(|&k| k != hi) {
            return Err(Error::Knots("boundary knots are not clamped".into()));
        }
        let interior = &knots[order..n - order];
        if interior.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Knots("interior knots decrease".into()));
        }
        if interior.iter().any(|&k| k <= lo || k >= hi) {
            return Err(Error::Knots("interior knot outside the open domain".into()));
        }
        Ok(Self { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_count(&self) -> usize {
        self.knots.len() - 2 * (self.degree + 1)
    }

    /// Basis dimension `J + p + 1`.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior(&self) -> &[f64] {
        let o = self.degree + 1;
        &self.knots[o..self.knots.len() - o]
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        (lo..=hi).contains(&x)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        x.clamp(lo, hi)
    }

    /// Knot span `s` with `t_s <= x < t_{s+1}`; the right endpoint maps to
    /// the last non-empty span. `x` must already be clamped.
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.dim();
        p + self.knots[p + 1..n].partition_point(|&k| k <= x)
    }

    /// Nonzero basis values at (clamped) `x`, plus the degree `p - 1` values
    /// on the same span. Returns the index of the first nonzero function.
    fn local(&self, x: f64) -> LocalBasis {
        let p = self.degree;
        let s = self.span(x);
        let t = &self.knots;
        let mut n = [0.0; MAX_ORDER];
        let mut lower = [0.0; MAX_ORDER];
        let mut left = [0.0; MAX_ORDER];
        let mut right = [0.0; MAX_ORDER];
        n[0] = 1.0;
        if p == 0 {
            lower[0] = 1.0;
        }
        for j in 1..=p {
            if j == p {
                lower[..p].copy_from_slice(&n[..p]);
            }
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        LocalBasis {
            first: s - p,
            span: s,
            values: n,
            lower,
        }
    }

    /// All `J + p + 1` basis values at `x` (clamped into the domain).
    pub fn basis_eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let loc = self.local(self.clamp(x));
        out[loc.first..=loc.first + self.degree].copy_from_slice(&loc.values[..=self.degree]);
        out
    }
}

struct LocalBasis {
    first: usize,
    span: usize,
    values: [f64; MAX_ORDER],
    /// Degree `p - 1` basis functions `first + 1 ..= span`.
    lower: [f64; MAX_ORDER],
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Pieces of one edge evaluation that the backward pass needs.
pub(crate) struct EdgeEval {
    pub first: usize,
    pub order: usize,
    pub basis: [f64; MAX_ORDER],
    /// Unweighted spline sum at the clamped input.
    pub spline: f64,
    pub silu: f64,
    /// d/dx of the full edge value; only filled when requested.
    pub input_derivative: f64,
}

/// One KAN edge: `w_base * silu(x) + w_spline * sum_k theta_k B_k(clamp(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineEdge {
    knots: KnotVector,
    coefficients: Vec<f64>,
    w_base: f64,
    w_spline: f64,
}

/// Outcome of [`SplineEdge::refit_knots`].
#[derive(Debug, Clone)]
pub struct Refit {
    pub edge: SplineEdge,
    /// Samples were all equal; the edge was returned unchanged.
    pub degenerate: bool,
}

impl SplineEdge {
    pub fn new(knots: KnotVector, coefficients: Vec<f64>, w_base: f64, w_spline: f64) -> Result<Self> {
        if coefficients.len() != knots.dim() {
            return Err(Error::Knots(format!(
                "{} coefficients for a basis of dimension {}",
                coefficients.len(),
                knots.dim()
            )));
        }
        Ok(Self {
            knots,
            coefficients,
            w_base,
            w_spline,
        })
    }

    pub fn zero(knots: KnotVector) -> Self {
        let dim = knots.dim();
        Self {
            knots,
            coefficients: vec![0.0; dim],
            w_base: 0.0,
            w_spline: 0.0,
        }
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn w_base(&self) -> f64 {
        self.w_base
    }

    pub fn w_spline(&self) -> f64 {
        self.w_spline
    }

    pub fn set_weights(&mut self, w_base: f64, w_spline: f64) {
        self.w_base = w_base;
        self.w_spline = w_spline;
    }

    /// Number of trainable scalars: coefficients plus the two weights.
    pub fn param_count(&self) -> usize {
        self.coefficients.len() + 2
    }

    /// Unweighted `sum_k theta_k B_k(clamp(x))`.
    pub fn spline_term(&self, x: f64) -> f64 {
        let loc = self.knots.local(self.knots.clamp(x));
        let p = self.knots.degree;
        (0..=p)
            .map(|r| self.coefficients[loc.first + r] * loc.values[r])
            .sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let spline = if self.w_spline == 0.0 {
            0.0
        } else {
            self.spline_term(x)
        };
        self.w_base * silu(x) + self.w_spline * spline
    }

    pub(crate) fn eval_parts(&self, x: f64, with_derivative: bool) -> EdgeEval {
        let loc = self.knots.local(self.knots.clamp(x));
        let order = self.knots.degree + 1;
        let spline = (0..order)
            .map(|r| self.coefficients[loc.first + r] * loc.values[r])
            .sum();
        let input_derivative = if with_derivative {
            let ds = if self.knots.contains(x) {
                self.local_derivative(&loc)
            } else {
                0.0
            };
            self.w_base * silu_derivative(x) + self.w_spline * ds
        } else {
            0.0
        };
        EdgeEval {
            first: loc.first,
            order,
            basis: loc.values,
            spline,
            silu: silu(x),
            input_derivative,
        }
    }

    fn local_derivative(&self, loc: &LocalBasis) -> f64 {
        let p = self.knots.degree;
        let t = &self.knots.knots;
        let theta = &self.coefficients;
        // s'(x) = sum_k p (theta_k - theta_{k-1}) / (t_{k+p} - t_k) B_{k,p-1}(x)
        let mut d = 0.0;
        for r in 0..p {
            let k = loc.span - p + 1 + r;
            d += p as f64 * (theta[k] - theta[k - 1]) / (t[k + p] - t[k]) * loc.lower[r];
        }
        d
    }

    /// Derivative of the unweighted spline sum at `x`: the right derivative at
    /// interior knots, zero outside the domain.
    pub fn spline_term_derivative(&self, x: f64) -> f64 {
        let p = self.knots.degree;
        if p == 0 || !self.knots.contains(x) {
            return 0.0;
        }
        self.local_derivative(&self.knots.local(x))
    }

    /// Derivative of [`SplineEdge::eval`] with respect to the input.
    pub fn eval_input_derivative(&self, x: f64) -> f64 {
        let spline = if self.w_spline == 0.0 {
            0.0
        } else {
            self.spline_term_derivative(x)
        };
        self.w_base * silu_derivative(x) + self.w_spline * spline
    }

    /// Moves the knots to the distribution of `samples` and re-projects the
    /// current spline term onto the new basis by least squares.
    ///
    /// Interior knots are `grid_eps * uniform + (1 - grid_eps) * quantile`
    /// over the sample range; the residual weights are kept.
    pub fn refit_knots(&self, samples: &[f64], grid_eps: f64) -> Result<Refit> {
        if samples.is_empty() {
            return Err(Error::Knots("refit needs at least one sample".into()));
        }
        if !(0.0..=1.0).contains(&grid_eps) {
            return Err(Error::Knots(format!("grid_eps {grid_eps} outside [0, 1]")));
        }
        let sorted = sorted_copy(samples);
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Knots("non-finite refit sample".into()));
        }
        let width = hi - lo;
        if width <= f64::EPSILON * lo.abs().max(1.0) * 16.0 {
            warn!("knot refit skipped: all {} samples equal {lo}", samples.len());
            return Ok(Refit {
                edge: self.clone(),
                degenerate: true,
            });
        }
        let j_count = self.knots.interior_count();
        let margin = 1e-9 * width;
        let interior: Vec<f64> = (1..=j_count)
            .map(|j| {
                let q = j as f64 / (j_count + 1) as f64;
                let uniform = lo + width * q;
                let quant = quantile_sorted(&sorted, q);
                (grid_eps * uniform + (1.0 - grid_eps) * quant).clamp(lo + margin, hi - margin)
            })
            .collect();
        let knots = KnotVector::from_interior(self.knots.degree, lo, hi, &interior)?;

        let dim = knots.dim();
        let order = knots.degree + 1;
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for &x in samples {
            let y = self.spline_term(x);
            let loc = knots.local(knots.clamp(x));
            for a in 0..order {
                let ia = loc.first + a;
                rhs[ia] += loc.values[a] * y;
                for b in 0..order {
                    gram[(ia, loc.first + b)] += loc.values[a] * loc.values[b];
                }
            }
        }
        let mut regularised = gram.clone();
        for i in 0..dim {
            regularised[(i, i)] += REFIT_RIDGE;
        }
        let chol = regularised
            .cholesky()
            .ok_or_else(|| Error::Knots("refit normal equations not positive definite".into()))?;
        let mut theta = chol.solve(&rhs);
        // Two steps of iterative refinement pull the ridge solution back toward
        // the exact least-squares fit wherever the Gram matrix is well conditioned.
        for _ in 0..2 {
            let resid = &rhs - &gram * &theta;
            theta += chol.solve(&resid);
        }
        Ok(Refit {
            edge: SplineEdge {
                knots,
                coefficients: theta.iter().copied().collect(),
                w_base: self.w_base,
                w_spline: self.w_spline,
            },
            degenerate: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook recursive Cox-de Boor definition, right-continuous, with the
    /// right domain endpoint closed on the last non-empty span.
    fn cox_de_boor(t: &[f64], k: usize, p: usize, x: f64) -> f64 {
        let hi = *t.last().unwrap();
        if p == 0 {
            let last_nonempty = (0..t.len() - 1).rev().find(|&i| t[i] < t[i + 1]).unwrap();
            if t[k] <= x && x < t[k + 1] {
                return 1.0;
            }
            if x == hi && k == last_nonempty {
                return 1.0;
            }
            return 0.0;
        }
        let mut v = 0.0;
        let d1 = t[k + p] - t[k];
        if d1 > 0.0 {
            v += (x - t[k]) / d1 * cox_de_boor(t, k, p - 1, x);
        }
        let d2 = t[k + p + 1] - t[k + 1];
        if d2 > 0.0 {
            v += (t[k + p + 1] - x) / d2 * cox_de_boor(t, k + 1, p - 1, x);
        }
        v
    }

    fn random_edge(rng: &mut ChaCha8Rng, p: usize, j: usize) -> SplineEdge {
        let kv = KnotVector::uniform(p, j, 0.0, 1.0).unwrap();
        let theta = (0..kv.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        SplineEdge::new(kv, theta, 0.0, 1.0).unwrap()
    }

    #[test]
    fn degree_zero_is_an_indicator() {
        let kv = KnotVector::uniform(0, 1, 0.0, 1.0).unwrap();
        assert_eq!(kv.basis_eval(0.25), vec![1.0, 0.0]);
        assert_eq!(kv.basis_eval(0.75), vec![0.0, 1.0]);
    }

    #[test]
    fn cubic_basis_at_midpoint_matches_oracle() {
        let kv = KnotVector::uniform(3, 2, 0.0, 1.0).unwrap();
        let got = kv.basis_eval(0.5);
        let frozen = [0.0, 1.0 / 32.0, 15.0 / 32.0, 15.0 / 32.0, 1.0 / 32.0, 0.0];
        for k in 0..kv.dim() {
            let oracle = cox_de_boor(kv.knots(), k, 3, 0.5);
            assert!((oracle - frozen[k]).abs() < 1e-15);
            assert!((got[k] - frozen[k]).abs() < 1e-15, "k={k}: {} vs {}", got[k], frozen[k]);
        }
    }

    #[test]
    fn basis_agrees_with_recursive_definition_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 0..=4 {
            for j in 1..=5 {
                let kv = KnotVector::uniform(p, j, -1.0, 2.0).unwrap();
                for _ in 0..50 {
                    let x = rng.random_range(-1.0..=2.0);
                    let got = kv.basis_eval(x);
                    for (k, g) in got.iter().enumerate() {
                        let o = cox_de_boor(kv.knots(), k, p, x);
                        assert!((g - o).abs() < 1e-13, "p={p} j={j} x={x} k={k}");
                    }
                }
                let end = kv.basis_eval(2.0);
                assert!((end[kv.dim() - 1] - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn partition_of_unity_with_repeated_interior_knots() {
        let kv = KnotVector::from_interior(3, 0.0, 1.0, &[0.3, 0.3, 0.3, 0.7]).unwrap();
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let s: f64 = kv.basis_eval(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_domain_inputs_clamp() {
        let kv = KnotVector::uniform(3, 3, 0.0, 1.0).unwrap();
        assert_eq!(kv.basis_eval(-5.0), kv.basis_eval(0.0));
        assert_eq!(kv.basis_eval(7.0), kv.basis_eval(1.0));
    }

    #[test]
    fn rejects_malformed_knots() {
        assert!(KnotVector::from_knots(1, vec![0.0, 0.0, 0.5, 1.0, 1.0]).is_ok());
        assert!(KnotVector::from_knots(1, vec![0.0, 0.1, 0.5, 1.0, 1.0]).is_err());
        assert!(KnotVector::from_knots(1, vec![0.0, 0.0, 1.0, 1.0, 1.0]).is_err());
        assert!(KnotVector::from_knots(1, vec![0.0, 0.0, 0.6, 0.5, 1.0, 1.0]).is_err());
        assert!(KnotVector::uniform(MAX_DEGREE + 1, 2, 0.0, 1.0).is_err());
        assert!(KnotVector::uniform(2, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn edge_special_values() {
        let kv = KnotVector::uniform(3, 2, 0.0, 1.0).unwrap();
        let zero = SplineEdge::zero(kv.clone());
        for x in [-3.0, 0.0, 0.4, 2.0] {
            assert_eq!(zero.eval(x), 0.0);
        }
        let constant = SplineEdge::new(kv.clone(), vec![0.7; kv.dim()], 0.0, 1.0).unwrap();
        for i in 0..=20 {
            assert!((constant.eval(i as f64 / 20.0) - 0.7).abs() < 1e-14);
            assert!(constant.spline_term_derivative(0.01 + i as f64 * 0.049).abs() < 1e-12);
        }
        let base = SplineEdge::new(kv.clone(), vec![1.0; kv.dim()], 1.0, 0.0).unwrap();
        assert_eq!(base.eval(0.0), 0.0);
        assert!((base.eval_input_derivative(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference_at_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut edge = random_edge(&mut rng, 3, 2);
        edge.set_weights(0.4, 1.3);
        let x = 0.37;
        let h = 1e-6;
        let fd = (edge.eval(x + h) - edge.eval(x - h)) / (2.0 * h);
        let an = edge.eval_input_derivative(x);
        assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
    }

    #[test]
    fn derivative_uses_right_limit_at_knots_and_vanishes_outside() {
        let kv = KnotVector::uniform(1, 1, 0.0, 1.0).unwrap();
        // Hat-function coefficients: piecewise linear 0 -> 1 -> 0.
        let edge = SplineEdge::new(kv, vec![0.0, 1.0, 0.0], 0.0, 1.0).unwrap();
        assert!((edge.spline_term_derivative(0.5) + 2.0).abs() < 1e-12);
        assert!((edge.spline_term_derivative(0.25) - 2.0).abs() < 1e-12);
        assert_eq!(edge.spline_term_derivative(1.5), 0.0);
        assert_eq!(edge.spline_term_derivative(-0.5), 0.0);
    }

    #[test]
    fn refit_with_unchanged_knots_reproduces_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let edge = random_edge(&mut rng, 3, 3);
        let samples: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        let refit = edge.refit_knots(&samples, 1.0).unwrap();
        assert!(!refit.degenerate);
        assert_eq!(refit.edge.knots().interior().len(), 3);
        for (a, b) in refit.edge.knots().knots().iter().zip(edge.knots().knots()) {
            assert!((a - b).abs() < 1e-15);
        }
        for &x in &samples {
            assert!((refit.edge.eval(x) - edge.eval(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn refit_uniform_mode_spans_sample_range() {
        let kv = KnotVector::uniform(3, 3, -1.0, 1.0).unwrap();
        let edge = SplineEdge::zero(kv);
        let samples = [2.0, 2.5, 3.7, 6.0, 4.4];
        let refit = edge.refit_knots(&samples, 1.0).unwrap();
        assert_eq!(refit.edge.knots().domain(), (2.0, 6.0));
        let interior = refit.edge.knots().interior();
        for (j, k) in interior.iter().enumerate() {
            assert!((k - (2.0 + (j + 1) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn refit_quantile_mode_matches_sort_oracle() {
        let kv = KnotVector::uniform(3, 4, -1.0, 1.0).unwrap();
        let edge = SplineEdge::zero(kv);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<f64> = (0..101).map(|_| rng.random::<f64>().powi(3)).collect();
        let refit = edge.refit_knots(&samples, 0.0).unwrap();
        // Oracle: type-7 quantile straight from the definition.
        let mut s = samples.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (j, k) in refit.edge.knots().interior().iter().enumerate() {
            let q = (j + 1) as f64 / 5.0;
            let pos = q * 100.0;
            let i = pos as usize;
            let oracle = s[i] + (pos - i as f64) * (s[(i + 1).min(100)] - s[i]);
            assert!((k - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn refit_on_equal_samples_is_degenerate() {
        let kv = KnotVector::uniform(2, 2, -1.0, 1.0).unwrap();
        let edge = SplineEdge::new(kv, vec![0.1, 0.2, 0.3, 0.4, 0.5], 0.3, 1.0).unwrap();
        let refit = edge.refit_knots(&[0.4; 10], 0.02).unwrap();
        assert!(refit.degenerate);
        assert_eq!(refit.edge, edge);
        assert!(edge.refit_knots(&[], 0.02).is_err());
        assert!(edge.refit_knots(&[0.0, 1.0], 1.5).is_err());
    }

    #[test]
    fn refit_with_binary_samples_stays_valid() {
        let kv = KnotVector::uniform(3, 3, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let edge = random_edge(&mut rng, 3, 3);
        let edge = SplineEdge::new(kv, edge.coefficients().to_vec(), 0.0, 1.0).unwrap();
        let samples: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        let refit = edge.refit_knots(&samples, 0.0).unwrap();
        for x in [0.0, 1.0] {
            assert!((refit.edge.eval(x) - edge.eval(x)).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_local_support(p in 0usize..=5, j in 1usize..=8, x in -0.5f64..1.5) {
            let kv = KnotVector::uniform(p, j, 0.0, 1.0).unwrap();
            let b = kv.basis_eval(x);
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(b.iter().all(|&v| v >= 0.0));
            let xc = x.clamp(0.0, 1.0);
            let t = kv.knots();
            for (k, v) in b.iter().enumerate() {
                if xc < t[k] || xc > t[k + p + 1] {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }

        #[test]
        fn derivative_consistency(seed in 0u64..1000, p in 1usize..=4, j in 1usize..=6, u in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let edge = random_edge(&mut rng, p, j);
            let kv = edge.knots().clone();
            // Keep the stencil inside one polynomial piece.
            let x = 0.01 + 0.98 * u;
            let h = 1e-6;
            prop_assume!(kv.interior().iter().all(|k| (k - x).abs() > 2.0 * h));
            let fd = (edge.spline_term(x + h) - edge.spline_term(x - h)) / (2.0 * h);
            let an = edge.spline_term_derivative(x);
            prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{} vs {}", fd, an);
        }
    }
}
