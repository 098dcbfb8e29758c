//! Affine-invariant Riemannian geometry on the SPD cone.
//!
//! For a base point `C` with whitening `W = C^{-1/2}`:
//!
//! ```text
//! d(C, P)   = ‖log(W P W)‖_F
//! log_C(P)  = C^{1/2} log(W P W) C^{1/2}
//! exp_C(T)  = C^{1/2} exp(W T W) C^{1/2}
//! ```
//!
//! [`BasePoint`] caches `C^{1/2}` and `C^{-1/2}` so that repeated queries
//! against the same centroid cost one eigendecomposition each.

use crate::error::{MpecError, Result};
use crate::linalg::{
    apply_to_eigen, frobenius_inner, nearest_spd, sym_eig, EigenPair, Spectral, SpdMatrix,
    SymMatrix, PD_TOLERANCE, SPD_FLOOR,
};

pub const FRECHET_TOL: f64 = 1e-9;
pub const FRECHET_MAX_ITER: usize = 50;

/// A symmetric matrix attached to the SPD point it is tangent at.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: SpdMatrix,
    pub value: SymMatrix,
}

impl TangentVector {
    /// Length under the affine-invariant metric at `base`.
    pub fn riemannian_norm(&self) -> Result<f64> {
        let w = apply_to_eigen(&sym_eig(&self.base)?, Spectral::InvSqrt)?;
        Ok(w.sandwich(&self.value)?.frobenius_norm())
    }
}

/// An SPD point with its square root and inverse square root precomputed.
#[derive(Debug, Clone)]
pub struct BasePoint {
    point: SpdMatrix,
    sqrt: SymMatrix,
    inv_sqrt: SymMatrix,
}

/// Distance and chord–tangent angle of one point relative to a base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    pub distance: f64,
    pub angle: f64,
}

impl BasePoint {
    pub fn new(point: &SpdMatrix) -> Result<Self> {
        let eig = sym_eig(point)?;
        Ok(BasePoint {
            sqrt: apply_to_eigen(&eig, Spectral::Sqrt)?,
            inv_sqrt: apply_to_eigen(&eig, Spectral::InvSqrt)?,
            point: point.clone(),
        })
    }

    pub fn point(&self) -> &SpdMatrix {
        &self.point
    }

    fn check_dim(&self, m: &SymMatrix) -> Result<()> {
        if m.dim() != self.point.dim() {
            return Err(MpecError::Shape(format!(
                "point of dimension {} against base of dimension {}",
                m.dim(),
                self.point.dim()
            )));
        }
        Ok(())
    }

    /// Eigendecomposition of `C^{-1/2} P C^{-1/2}`.
    fn whitened_eig(&self, p: &SpdMatrix) -> Result<EigenPair> {
        self.check_dim(p)?;
        let eig = sym_eig(&self.inv_sqrt.sandwich(p)?)?;
        if !(eig.min_eigenvalue() > 0.0) {
            return Err(MpecError::NotPositiveDefinite {
                min_eigenvalue: eig.min_eigenvalue(),
            });
        }
        Ok(eig)
    }

    /// `log(C^{-1/2} P C^{-1/2})`, the log map expressed in whitened coordinates.
    pub fn whitened_log(&self, p: &SpdMatrix) -> Result<SymMatrix> {
        Ok(self.whitened_eig(p)?.reassemble(f64::ln))
    }

    pub fn distance(&self, p: &SpdMatrix) -> Result<f64> {
        let eig = self.whitened_eig(p)?;
        Ok(eig.values.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
    }

    pub fn log(&self, p: &SpdMatrix) -> Result<SymMatrix> {
        self.sqrt.sandwich(&self.whitened_log(p)?)
    }

    /// Maps a whitened tangent value back onto the manifold.
    pub fn exp_whitened(&self, whitened: &SymMatrix) -> Result<SpdMatrix> {
        self.check_dim(whitened)?;
        let e = apply_to_eigen(&sym_eig(whitened)?, Spectral::Exp)?;
        Ok(SpdMatrix::assume_spd(self.sqrt.sandwich(&e)?))
    }

    pub fn exp(&self, value: &SymMatrix) -> Result<SpdMatrix> {
        self.check_dim(value)?;
        self.exp_whitened(&self.inv_sqrt.sandwich(value)?)
    }

    /// Geodesic distance and chord–tangent angle from one eigendecomposition.
    pub fn compare(&self, p: &SpdMatrix) -> Result<PairGeometry> {
        let eig = self.whitened_eig(p)?;
        let distance = eig.values.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt();
        let tangent = self.sqrt.sandwich(&eig.reassemble(f64::ln))?;
        let chord = p.sub(&self.point)?;
        Ok(PairGeometry {
            distance,
            angle: angle_between(&tangent, &chord, self.point.frobenius_norm())?,
        })
    }
}

fn angle_between(u: &SymMatrix, v: &SymMatrix, scale: f64) -> Result<f64> {
    let nu = u.frobenius_norm();
    let nv = v.frobenius_norm();
    let eps = 1e-12 * scale.max(1.0);
    if nu <= eps || nv <= eps {
        return Ok(0.0);
    }
    // θ = 2·atan2(‖û − s·v̂‖, ‖û + s·v̂‖) with s = sign⟨u, v⟩; well conditioned
    // near 0, unlike acos of the absolute cosine
    let s = if frobenius_inner(u, v)? < 0.0 { -1.0 } else { 1.0 };
    let (mut minus, mut plus) = (0.0, 0.0);
    for (a, b) in u.as_slice().iter().zip(v.as_slice()) {
        let (ua, vb) = (a / nu, s * b / nv);
        minus += (ua - vb) * (ua - vb);
        plus += (ua + vb) * (ua + vb);
    }
    Ok((2.0 * minus.sqrt().atan2(plus.sqrt())).min(std::f64::consts::FRAC_PI_2))
}

pub fn airm_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    // evaluate from the lexicographically smaller argument so that
    // d(a, b) and d(b, a) run the identical float sequence
    if a.as_slice().iter().map(|v| v.to_bits()).lt(b.as_slice().iter().map(|v| v.to_bits())) {
        BasePoint::new(a)?.distance(b)
    } else {
        BasePoint::new(b)?.distance(a)
    }
}

pub fn log_map(base: &SpdMatrix, p: &SpdMatrix) -> Result<TangentVector> {
    Ok(TangentVector {
        base: base.clone(),
        value: BasePoint::new(base)?.log(p)?,
    })
}

pub fn exp_map(base: &SpdMatrix, t: &TangentVector) -> Result<SpdMatrix> {
    if t.base.dim() != base.dim() || t.value.dim() != base.dim() {
        return Err(MpecError::Shape(format!(
            "tangent of dimension {} at base of dimension {}",
            t.value.dim(),
            base.dim()
        )));
    }
    if &t.base != base {
        return Err(MpecError::Shape(
            "tangent vector is attached to a different base point".into(),
        ));
    }
    BasePoint::new(base)?.exp(&t.value)
}

/// Point at fraction `t` along the geodesic from `a` to `b`.
pub fn geodesic(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    let bp = BasePoint::new(a)?;
    bp.exp_whitened(&bp.whitened_log(b)?.scale(t))
}

/// Chord–tangent angle: the angle in `[0, π/2]` between the Euclidean chord
/// `P − C` and the log-map direction `log_C(P)`.
pub fn chord_tangent_angle(p: &SpdMatrix, c: &SpdMatrix) -> Result<f64> {
    if p == c {
        return Ok(0.0);
    }
    Ok(BasePoint::new(c)?.compare(p)?.angle)
}

/// Result of the Karcher fixed-point iteration.
#[derive(Debug, Clone)]
pub struct MeanEstimate {
    pub mean: SpdMatrix,
    /// `‖mean of log_c(xᵢ)‖_F` at the returned point.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fréchet mean under the affine-invariant metric, started from the
/// arithmetic mean.
pub fn frechet_mean(points: &[SpdMatrix], tol: f64, max_iter: usize) -> Result<MeanEstimate> {
    let first = points.first().ok_or(MpecError::EmptyInput("frechet_mean points"))?;
    let n = first.dim();
    if let Some(bad) = points.iter().find(|p| p.dim() != n) {
        return Err(MpecError::Shape(format!(
            "mixed dimensions {n} and {}",
            bad.dim()
        )));
    }
    if points.len() == 1 {
        return Ok(MeanEstimate {
            mean: first.clone(),
            gradient_norm: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let inv_count = 1.0 / points.len() as f64;
    let mut sum = vec![0.0; n * n];
    for p in points {
        for (s, v) in sum.iter_mut().zip(p.as_slice()) {
            *s += v;
        }
    }
    let arithmetic = SymMatrix::symmetrized(n, sum.into_iter().map(|v| v * inv_count).collect());
    let mut current = nearest_spd(&arithmetic, SPD_FLOOR.max(PD_TOLERANCE))?;

    let mut iterations = 0;
    loop {
        let bp = BasePoint::new(&current)?;
        let mut acc = vec![0.0; n * n];
        for p in points {
            let l = bp.whitened_log(p)?;
            for (a, v) in acc.iter_mut().zip(l.as_slice()) {
                *a += v;
            }
        }
        let step = SymMatrix::symmetrized(n, acc.into_iter().map(|v| v * inv_count).collect());
        let gradient_norm = bp.sqrt.sandwich(&step)?.frobenius_norm();
        if gradient_norm < tol || iterations >= max_iter {
            return Ok(MeanEstimate {
                mean: current,
                gradient_norm,
                iterations,
                converged: gradient_norm < tol,
            });
        }
        current = bp.exp_whitened(&step)?;
        iterations += 1;
    }
}
