//! Truncated Karhunen–Loève basis of the localized Gaussian kernel
//!
//! ```text
//! κ(s, s') = exp{-a(‖s‖² + ‖s'‖²) - b‖s - s'‖²}
//! ```
//!
//! The kernel factorizes over coordinates, and each 1D factor has the
//! Hermite-function eigensystem (with `c = √(a² + 2ab)`, `A = a + b + c`,
//! `B = b / A`):
//!
//! ```text
//! ξ_k   = √(π / A) · B^k
//! ψ_k(x) = (2c)^{1/4} h_k(√(2c) x)
//! ```
//!
//! where `h_k` is the orthonormal Hermite function. Eigenfunctions are
//! orthonormal in L²(ℝ) of the standardized coordinate, and
//! `Σ_k ξ_k = ∫ κ(x, x) dx = √(π / 2a)`.
//!
//! 2D eigenpairs are tensor products ordered by total degree `k₁ + k₂`, ties
//! broken lexicographically on `(k₁, k₂)`; since `ξ = (π/A) B^{k₁+k₂}` this
//! is exactly the descending-eigenvalue order.

mod hermite;
mod nystrom;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use hermite::{hermite_functions, hermite_polynomial};
pub use nystrom::{interval_half_width, nystrom_oracle, nystrom_spectrum, MIN_GRID};

use crate::error::{Error, Result};
use crate::geometry::{Point, Region};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    a: f64,
    b: f64,
}

impl KernelParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel parameters must be positive and finite, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Gaussian decay rate of the eigenfunctions, `√(a² + 2ab)`.
    pub fn decay(&self) -> f64 {
        (self.a * self.a + 2.0 * self.a * self.b).sqrt()
    }

    /// Geometric ratio `B` between consecutive 1D eigenvalues.
    pub fn ratio(&self) -> f64 {
        self.b / (self.a + self.b + self.decay())
    }

    /// Leading 1D eigenvalue `√(π / A)`.
    pub fn leading_1d(&self) -> f64 {
        (PI / (self.a + self.b + self.decay())).sqrt()
    }

    /// `Σ_k ξ_k` for the 1D factor.
    pub fn trace_1d(&self) -> f64 {
        self.leading_1d() / (1.0 - self.ratio())
    }

    pub fn eval_1d(&self, x: f64, y: f64) -> f64 {
        (-self.a * (x * x + y * y) - self.b * (x - y) * (x - y)).exp()
    }

    /// Kernel in standardized coordinates.
    pub fn eval(&self, s: Point, t: Point) -> f64 {
        self.eval_1d(s.x, t.x) * self.eval_1d(s.y, t.y)
    }
}

/// One eigenpair of the 1D kernel factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenpair1d {
    pub eigenvalue: f64,
    /// Hermite order of the eigenfunction.
    pub order: usize,
    /// `√(2c)`, the argument scaling of the Hermite function.
    pub scale: f64,
}

impl Eigenpair1d {
    pub fn eval(&self, x: f64) -> f64 {
        let mut buf = vec![0.0; self.order + 1];
        hermite_functions(self.scale * x, &mut buf);
        self.scale.sqrt() * buf[self.order]
    }
}

/// Leading `count` eigenpairs of the 1D factor, descending.
pub fn eigen_1d(params: &KernelParams, count: usize) -> Result<Vec<Eigenpair1d>> {
    if count == 0 {
        return Err(Error::InvalidParameter("eigenpair count must be at least 1".into()));
    }
    let scale = (2.0 * params.decay()).sqrt();
    let (lead, ratio) = (params.leading_1d(), params.ratio());
    Ok((0..count)
        .map(|k| Eigenpair1d { eigenvalue: lead * ratio.powi(k as i32), order: k, scale })
        .collect())
}

/// How many 2D eigenpairs to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Fixed(usize),
    /// Smallest `L` whose captured variance fraction exceeds the threshold.
    Threshold(f64),
}

/// Affine map from data coordinates to the standardized square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainMap {
    pub x_center: f64,
    pub x_half_width: f64,
    pub y_center: f64,
    pub y_half_width: f64,
}

impl DomainMap {
    pub fn identity() -> Self {
        Self { x_center: 0.0, x_half_width: 1.0, y_center: 0.0, y_half_width: 1.0 }
    }

    /// Maps the bounding box of `region` onto `[-1, 1]²`.
    pub fn from_region(region: &Region) -> Self {
        Self {
            x_center: 0.5 * (region.x_min + region.x_max),
            x_half_width: 0.5 * region.width(),
            y_center: 0.5 * (region.y_min + region.y_max),
            y_half_width: 0.5 * region.height(),
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point {
            x: (p.x - self.x_center) / self.x_half_width,
            y: (p.y - self.y_center) / self.y_half_width,
        }
    }
}

/// Tensor-product eigenfunction `ψ_{kx}(x) ψ_{ky}(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenfunction {
    pub kx: usize,
    pub ky: usize,
    /// Constant multiplying `exp{-c(x²+y²)} H_{kx}(√(2c)x) H_{ky}(√(2c)y)`.
    pub norm: f64,
}

impl Eigenfunction {
    fn new(kx: usize, ky: usize, decay: f64) -> Self {
        let n = kx + ky;
        let log_fact: f64 = (1..=kx).chain(1..=ky).map(|k| (k as f64).ln()).sum();
        let log_norm = 0.5 * (2.0 * decay).ln() - 0.5 * (PI.ln() + n as f64 * 2f64.ln() + log_fact);
        Self { kx, ky, norm: log_norm.exp() }
    }

    pub fn degree(&self) -> usize {
        self.kx + self.ky
    }
}

/// Row-major `points × L` matrix of basis values.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl BasisValues {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.data[i * self.cols + l]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `Φ · coef` for a length-`L` coefficient vector.
    pub fn mul_vec(&self, coef: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coef.len(), self.cols);
        self.data.chunks_exact(self.cols.max(1)).take(self.rows).map(|r| dot(r, coef)).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Truncated 2D Karhunen–Loève basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    params: KernelParams,
    eigenvalues: Vec<f64>,
    functions: Vec<Eigenfunction>,
    recovery: f64,
    domain: DomainMap,
}

/// Enumerates 2D index pairs in eigenvalue order: by degree, then `(kx, ky)`.
fn index_pairs() -> impl Iterator<Item = (usize, usize)> {
    (0usize..).flat_map(|n| (0..=n).map(move |kx| (kx, n - kx)))
}

impl Basis {
    pub fn build(params: KernelParams, truncation: Truncation, domain: DomainMap) -> Result<Self> {
        let lead = params.leading_1d().powi(2);
        let ratio = params.ratio();
        let total = params.trace_1d().powi(2);
        let decay = params.decay();

        let target_len = match truncation {
            Truncation::Fixed(l) if l >= 1 => Some(l),
            Truncation::Fixed(_) => {
                return Err(Error::InvalidParameter("basis size L must be at least 1".into()))
            }
            Truncation::Threshold(alpha) if alpha >= 1.0 => {
                return Err(Error::InvalidParameter(format!(
                    "variance threshold {alpha} is unreachable (must be < 1)"
                )))
            }
            Truncation::Threshold(alpha) if !(alpha > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "variance threshold {alpha} must lie in (0, 1)"
                )))
            }
            Truncation::Threshold(_) => None,
        };

        let mut eigenvalues = Vec::new();
        let mut functions = Vec::new();
        let mut captured = 0.0;
        for (kx, ky) in index_pairs() {
            let xi = lead * ratio.powi((kx + ky) as i32);
            eigenvalues.push(xi);
            functions.push(Eigenfunction::new(kx, ky, decay));
            captured += xi;
            let done = match (target_len, truncation) {
                (Some(l), _) => eigenvalues.len() == l,
                (None, Truncation::Threshold(alpha)) => captured / total > alpha,
                _ => unreachable!(),
            };
            if done {
                break;
            }
        }
        let recovery = (captured / total).min(1.0);
        Ok(Self { params, eigenvalues, functions, recovery, domain })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn functions(&self) -> &[Eigenfunction] {
        &self.functions
    }

    pub fn recovery(&self) -> f64 {
        self.recovery
    }

    pub fn domain(&self) -> &DomainMap {
        &self.domain
    }

    /// `Σ_{l=1}^∞ ξ_l` of the untruncated 2D kernel.
    pub fn total_variance(&self) -> f64 {
        self.params.trace_1d().powi(2)
    }

    fn max_order(&self) -> usize {
        self.functions.iter().map(|f| f.kx.max(f.ky)).max().unwrap_or(0)
    }

    /// Writes `φ(s)` for a point in data coordinates into `out`.
    pub fn eval_into(&self, s: Point, out: &mut [f64], hx: &mut [f64], hy: &mut [f64]) {
        let u = self.domain.apply(s);
        let scale = (2.0 * self.params.decay()).sqrt();
        hermite_functions(scale * u.x, hx);
        hermite_functions(scale * u.y, hy);
        for (o, f) in out.iter_mut().zip(&self.functions) {
            *o = scale * hx[f.kx] * hy[f.ky];
        }
    }

    /// `φ(s)` for a single point in data coordinates.
    pub fn eval_point(&self, s: Point) -> Vec<f64> {
        let k = self.max_order() + 1;
        let (mut hx, mut hy) = (vec![0.0; k], vec![0.0; k]);
        let mut out = vec![0.0; self.len()];
        self.eval_into(s, &mut out, &mut hx, &mut hy);
        out
    }

    /// Basis matrix `Φ[t, l] = φ_l(s_t)`.
    pub fn eval(&self, points: &[Point]) -> Result<BasisValues> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Input(format!("non-finite coordinate ({}, {})", p.x, p.y)));
        }
        let cols = self.len();
        let k = self.max_order() + 1;
        let (mut hx, mut hy) = (vec![0.0; k], vec![0.0; k]);
        let mut data = vec![0.0; points.len() * cols];
        for (row, &p) in data.chunks_exact_mut(cols).zip(points) {
            self.eval_into(p, row, &mut hx, &mut hy);
        }
        Ok(BasisValues { rows: points.len(), cols, data })
    }

    /// Exact kernel between two points in data coordinates.
    pub fn kernel(&self, s: Point, t: Point) -> f64 {
        self.params.eval(self.domain.apply(s), self.domain.apply(t))
    }

    /// Truncated reconstruction `Σ_l ξ_l φ_l(s) φ_l(t)`.
    pub fn reconstruct(&self, s: Point, t: Point) -> f64 {
        let (fs, ft) = (self.eval_point(s), self.eval_point(t));
        self.eigenvalues.iter().zip(fs.iter().zip(&ft)).map(|(xi, (a, b))| xi * a * b).sum()
    }

    pub fn to_document(&self) -> BasisDocument {
        BasisDocument {
            a: self.params.a,
            b: self.params.b,
            l: self.len(),
            recovery: self.recovery,
            eigenvalues: self.eigenvalues.clone(),
            functions: self.functions.clone(),
            domain: self.domain,
        }
    }

    /// Rebuilds from a stored document, rejecting documents whose spectrum
    /// does not match the kernel parameters they claim.
    pub fn from_document(doc: &BasisDocument) -> Result<Self> {
        let params = KernelParams::new(doc.a, doc.b)?;
        let basis = Self::build(params, Truncation::Fixed(doc.l), doc.domain)?;
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs());
        let consistent = doc.eigenvalues.len() == doc.l
            && doc.functions.len() == doc.l
            && basis.eigenvalues.iter().zip(&doc.eigenvalues).all(|(x, y)| close(*x, *y))
            && basis
                .functions
                .iter()
                .zip(&doc.functions)
                .all(|(f, g)| f.kx == g.kx && f.ky == g.ky && close(f.norm, g.norm));
        if !consistent {
            return Err(Error::Input("basis document is inconsistent with its kernel parameters".into()));
        }
        Ok(basis)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

/// Serialized form of a [`Basis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDocument {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub recovery: f64,
    pub eigenvalues: Vec<f64>,
    pub functions: Vec<Eigenfunction>,
    pub domain: DomainMap,
}
