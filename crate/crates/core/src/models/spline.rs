//! Cubic B-spline expansions of continuous covariates and the roughness
//! penalty used by the spline Cox model.

use nalgebra::DMatrix;

use crate::data::Design;
use crate::error::{Error, Result};
use crate::numerics::quantile_sorted;

const ORDER: usize = 4;

/// Cubic B-spline basis on `[lo, hi]` with interior knots at equally spaced
/// quantiles of the training column. Outside the boundary knots each basis
/// function is continued linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    knots: Vec<f64>,
    size: usize,
}

impl BSplineBasis {
    pub fn fit(column: &[f64], size: usize) -> Result<Self> {
        if size < ORDER {
            return Err(Error::InvalidInput(format!("basis size {size} is below {ORDER}")));
        }
        let mut sorted: Vec<f64> = column.to_vec();
        if sorted.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariate value".into()));
        }
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < size {
            return Err(Error::InsufficientDistinctValues {
                needed: size,
                found: distinct.len(),
            });
        }
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let interior = size - ORDER;
        let mut knots = vec![lo; ORDER];
        for j in 1..=interior {
            knots.push(quantile_sorted(&sorted, j as f64 / (interior + 1) as f64));
        }
        knots.extend([hi; ORDER]);
        let basis = Self { knots, size };
        // Heavy ties can stack interior knots onto each other or a boundary,
        // which collapses basis functions; treat that like too few values.
        if basis.greville().windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InsufficientDistinctValues {
                needed: size,
                found: distinct.len(),
            });
        }
        Ok(basis)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn lo(&self) -> f64 {
        self.knots[0]
    }

    fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Index `m` of the knot span `t[m] <= x < t[m + 1]` containing `x` in
    /// `[lo, hi]`; `x == hi` is assigned to the last nonempty span.
    fn span(&self, x: f64) -> usize {
        let t = &self.knots;
        if x >= self.hi() {
            t.len() - ORDER - 1
        } else {
            t.partition_point(|&k| k <= x) - 1
        }
    }

    /// Basis values at `x`, written into `out` (length `size`).
    pub fn evaluate_into(&self, x: f64, out: &mut [f64]) {
        let t = &self.knots;
        let edge = x.clamp(self.lo(), self.hi());
        let m = self.span(edge);
        // Local Cox-de Boor recursion over the ORDER functions that are
        // nonzero on span m; `quad` keeps the order-3 values for the slope.
        let mut n = [0.0; ORDER];
        let mut quad = [0.0; ORDER - 1];
        let mut left = [0.0; ORDER];
        let mut right = [0.0; ORDER];
        n[0] = 1.0;
        for j in 1..ORDER {
            left[j] = edge - t[m + 1 - j];
            right[j] = t[m + j] - edge;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
            if j == ORDER - 2 {
                quad.copy_from_slice(&n[..ORDER - 1]);
            }
        }
        out.fill(0.0);
        let first = m + 1 - ORDER;
        out[first..first + ORDER].copy_from_slice(&n);
        if x != edge {
            // Linear continuation with the boundary slope. Order-3 function
            // i is nonzero only for i in m-2..=m.
            let lower = |i: usize| if i + 2 >= m && i <= m { quad[i + 2 - m] } else { 0.0 };
            let k = ORDER as f64 - 1.0;
            for i in first..=m {
                let l = t[i + ORDER - 1] - t[i];
                let r = t[i + ORDER] - t[i + 1];
                let mut d = 0.0;
                if l > 0.0 {
                    d += lower(i) / l;
                }
                if r > 0.0 {
                    d -= lower(i + 1) / r;
                }
                out[i] += (x - edge) * k * d;
            }
        }
    }

    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        self.evaluate_into(x, &mut out);
        out
    }

    /// Greville abscissae: the knot averages at which a coefficient vector
    /// sampled from a linear function reproduces that function.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.size)
            .map(|j| self.knots[j + 1..j + ORDER].iter().sum::<f64>() / (ORDER - 1) as f64)
            .collect()
    }

    /// Second divided differences of the coefficients at the Greville
    /// abscissae, scaled by the mean abscissa spacing. For uniform knots this
    /// is the plain second-difference operator; in general its null space is
    /// exactly the coefficient vectors of linear functions.
    pub fn difference_penalty(&self) -> DMatrix<f64> {
        let g = self.greville();
        let k = self.size;
        let mean_gap = (g[k - 1] - g[0]) / (k - 1) as f64;
        let mut d = DMatrix::zeros(k - 2, k);
        for r in 0..k - 2 {
            let h0 = g[r + 1] - g[r];
            let h1 = g[r + 2] - g[r + 1];
            d[(r, r)] = mean_gap / h0;
            d[(r, r + 1)] = -mean_gap / h0 - mean_gap / h1;
            d[(r, r + 2)] = mean_gap / h1;
        }
        d
    }
}

/// `n x basis_size` cubic B-spline basis of one covariate column.
pub fn spline_basis(column: &[f64], basis_size: usize) -> Result<Design> {
    let basis = BSplineBasis::fit(column, basis_size)?;
    let mut data = Vec::with_capacity(column.len() * basis_size);
    for &x in column {
        data.extend(basis.evaluate(x));
    }
    Design::new(column.len(), basis_size, data)
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    Linear(usize),
    /// The first basis column is dropped: the basis sums to one, so keeping
    /// all of them would duplicate the (absent) Cox intercept.
    Spline { column: usize, basis: BSplineBasis },
}

/// Covariate expansion for the spline Cox model. Columns with at least
/// `basis_size` distinct values get a spline; the rest enter linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineExpansion {
    terms: Vec<Term>,
    n_covariates: usize,
    width: usize,
}

impl SplineExpansion {
    pub fn fit(x: &Design, basis_size: usize) -> Result<Self> {
        let mut terms = Vec::new();
        let mut width = 0;
        for j in 0..x.cols() {
            let col = x.column(j);
            match BSplineBasis::fit(&col, basis_size) {
                Ok(basis) => {
                    width += basis.size() - 1;
                    terms.push(Term::Spline { column: j, basis });
                }
                Err(Error::InsufficientDistinctValues { .. }) => {
                    width += 1;
                    terms.push(Term::Linear(j));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            terms,
            n_covariates: x.cols(),
            width,
        })
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn expand_row(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let mut buf = Vec::new();
        for term in &self.terms {
            match term {
                Term::Linear(j) => out.push(x[*j]),
                Term::Spline { column, basis } => {
                    buf.resize(basis.size(), 0.0);
                    basis.evaluate_into(x[*column], &mut buf);
                    out.extend_from_slice(&buf[1..]);
                }
            }
        }
    }

    pub fn expand(&self, x: &Design) -> Design {
        let mut data = Vec::with_capacity(x.rows() * self.width);
        let mut row = Vec::with_capacity(self.width);
        for r in x.iter_rows() {
            self.expand_row(r, &mut row);
            data.extend_from_slice(&row);
        }
        Design::new(x.rows(), self.width, data).expect("expanded width is consistent")
    }

    /// Block-diagonal `theta * D'D` over the spline terms, zero on linear
    /// terms, matching the columns produced by `expand`.
    pub fn penalty(&self, theta: f64) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.width, self.width);
        let mut offset = 0;
        for term in &self.terms {
            match term {
                Term::Linear(_) => offset += 1,
                Term::Spline { basis, .. } => {
                    let d = basis.difference_penalty();
                    let kept = d.columns(1, basis.size() - 1);
                    let block = kept.transpose() * kept * theta;
                    let w = basis.size() - 1;
                    p.view_mut((offset, offset), (w, w)).copy_from(&block);
                    offset += w;
                }
            }
        }
        p
    }
}
