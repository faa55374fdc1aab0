//! Fields on Ω = (0, π) in the Laplace–Dirichlet sine eigenbasis.
//!
//! A field is a finite vector of coefficients `a_k` against `sin(k x)`,
//! k = 1..N, with eigenvalues λ_k = k² (so λ₁ = 1).  Fractional norms,
//! diagonal resolvents and pseudo-spectral evaluation of polynomial
//! nonlinearities all live here.  The eigenvalue table is routed through
//! [`lambda_k`] so a different domain only changes that one function.

use crate::error::{Error, Result};

/// First eigenvalue of the Laplace–Dirichlet operator on (0, π).
pub const LAMBDA_1: f64 = 1.0;

/// k-th eigenvalue of the Laplace–Dirichlet operator on (0, π): λ_k = k².
#[inline]
pub fn lambda_k(k: usize) -> f64 {
    let k = k as f64;
    k * k
}

/// A scalar field stored as sine-basis coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(modes: usize) -> Self {
        Self {
            coeffs: vec![0.0; modes],
        }
    }

    /// Field `amplitude · sin(k x)` in an expansion with `modes` coefficients.
    pub fn single_mode(k: usize, amplitude: f64, modes: usize) -> Self {
        assert!(k >= 1 && k <= modes, "mode index out of range");
        let mut coeffs = vec![0.0; modes];
        coeffs[k - 1] = amplitude;
        Self { coeffs }
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Squared H^r norm: Σ_k λ_k^r a_k².
    pub fn norm_sq(&self, r: f64) -> f64 {
        if r == 0.0 {
            return self.coeffs.iter().map(|a| a * a).sum();
        }
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| lambda_k(i + 1).powf(r) * a * a)
            .sum()
    }

    /// H^r norm (Σ_k k^{2r} a_k²)^{1/2}.
    pub fn norm(&self, r: f64) -> f64 {
        self.norm_sq(r).sqrt()
    }

    /// Inner product ⟨u, v⟩_r = Σ_k λ_k^r a_k b_k.  Fields must agree in length.
    pub fn inner(&self, other: &Self, r: f64) -> f64 {
        assert_eq!(self.modes(), other.modes(), "mode count mismatch");
        if r == 0.0 {
            return self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a * b)
                .sum();
        }
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| lambda_k(i + 1).powf(r) * a * b)
            .sum()
    }

    /// Apply A^p mode-wise: a_k ↦ λ_k^p a_k.
    pub fn apply_a_power(&self, p: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| lambda_k(i + 1).powf(p) * a)
            .collect();
        Self { coeffs }
    }

    /// ℓ¹ bound on the sup norm: |u(x)| ≤ Σ_k |a_k|.
    pub fn linf_bound(&self) -> f64 {
        self.coeffs.iter().map(|a| a.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|a| a.is_finite())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|a| c * a).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.modes(), other.modes(), "mode count mismatch");
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.modes(), other.modes(), "mode count mismatch");
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// self + c · other.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        assert_eq!(self.modes(), other.modes(), "mode count mismatch");
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }
}

/// Mode-wise solve of (I + τ A^p) a = b.  With `power = 1` this inverts the
/// implicit Laplacian step exactly: a_k = b_k / (1 + τ λ_k).
pub fn resolvent_solve(field: &SpectralField, tau: f64, power: f64) -> SpectralField {
    assert!(tau >= 0.0, "resolvent shift must be nonnegative");
    let coeffs = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, b)| b / (1.0 + tau * lambda_k(i + 1).powf(power)))
        .collect();
    SpectralField::new(coeffs)
}

/// Sine collocation grid on (0, π) with `points` interior points
/// x_m = π m / (points + 1).
///
/// Discrete orthogonality Σ_m sin(k x_m) sin(l x_m) = (points+1)/2 · δ_kl holds
/// for 1 ≤ k, l ≤ points, so synthesis followed by analysis is exact on the
/// first `modes` coefficients.  With `points = 3·modes` the analysis of a
/// product of up to five fields is alias-free on the retained modes.
#[derive(Debug, Clone)]
pub struct SineGrid {
    modes: usize,
    points: usize,
    x: Vec<f64>,
    /// sin(k x_m), row-major over points then modes.
    table: Vec<f64>,
}

impl SineGrid {
    pub fn new(modes: usize, points: usize) -> Result<Self> {
        if points < modes {
            return Err(Error::GridTooCoarse { points, modes });
        }
        let q = (points + 1) as f64;
        let x: Vec<f64> = (1..=points)
            .map(|m| std::f64::consts::PI * m as f64 / q)
            .collect();
        let mut table = Vec::with_capacity(points * modes);
        for &xm in &x {
            for k in 1..=modes {
                table.push((k as f64 * xm).sin());
            }
        }
        Ok(Self {
            modes,
            points,
            x,
            table,
        })
    }

    /// Grid sized to de-alias products up to degree five of `modes`-mode fields.
    pub fn dealiased(modes: usize) -> Self {
        Self::new(modes, 3 * modes).expect("3N >= N")
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.x
    }

    /// Synthesis u(x_m) = Σ_k a_k sin(k x_m).
    pub fn to_grid(&self, field: &SpectralField) -> Vec<f64> {
        assert!(
            field.modes() <= self.modes,
            "field has more modes than the grid"
        );
        let a = field.coeffs();
        (0..self.points)
            .map(|m| {
                let row = &self.table[m * self.modes..(m + 1) * self.modes];
                row.iter().zip(a).map(|(s, ak)| s * ak).sum()
            })
            .collect()
    }

    /// Analysis a_k = 2/(points+1) Σ_m u_m sin(k x_m), truncated to the grid's
    /// mode count.
    pub fn to_modes(&self, values: &[f64]) -> SpectralField {
        assert_eq!(values.len(), self.points, "value count mismatch");
        let scale = 2.0 / (self.points + 1) as f64;
        let coeffs = (0..self.modes)
            .map(|k| {
                let s: f64 = (0..self.points)
                    .map(|m| self.table[m * self.modes + k] * values[m])
                    .sum();
                scale * s
            })
            .collect();
        SpectralField::new(coeffs)
    }

    /// Quadrature L² norm matched to the coefficient convention, so it equals
    /// `hr` norm at r = 0 for alias-free data.
    pub fn quadrature_l2(&self, values: &[f64]) -> f64 {
        let scale = 2.0 / (self.points + 1) as f64;
        (scale * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Grid sup norm.
    pub fn sup(&self, values: &[f64]) -> f64 {
        values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Report from probing φ′ against the dissipativity threshold −λ₁.
#[derive(Debug, Clone)]
pub struct DissipativityReport {
    /// Minimum of φ′ inside the probe interval and its location.
    pub min_inside: (f64, f64),
    /// Minimum of φ′ outside the probe interval (sampled out to a wide range)
    /// and its location; infinite liminf shows up in `liminf` instead.
    pub min_outside: (f64, f64),
    /// liminf of φ′ as |u| → ∞; ±∞ for non-constant polynomial derivatives.
    pub liminf: f64,
    /// liminf − (−λ₁); positive margin means the dissipation condition holds.
    pub margin: f64,
    pub accepted: bool,
}

/// A polynomial nonlinearity φ with φ(0) = 0 and deg φ ≤ 5, i.e. the growth
/// of φ″ is at most cubic.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    /// Coefficients of u, u², …; the constant term is forced to zero.
    coeffs: Vec<f64>,
    /// Growth exponent of φ″: max(deg φ − 2, 0).
    growth_p: u8,
}

impl NonlinearitySpec {
    /// Build from ascending coefficients [c₀, c₁, c₂, …] of φ(u) = Σ c_d u^d.
    pub fn new(ascending: &[f64]) -> Result<Self> {
        let mut c = ascending.to_vec();
        while c.last() == Some(&0.0) {
            c.pop();
        }
        if let Some(&c0) = c.first() {
            if c0 != 0.0 {
                return Err(Error::PhiNotZeroAtOrigin(c0));
            }
        }
        let degree = c.len().saturating_sub(1);
        if degree > 5 {
            return Err(Error::PhiDegreeTooHigh(degree));
        }
        let coeffs = if c.is_empty() { vec![] } else { c[1..].to_vec() };
        let growth_p = degree.saturating_sub(2) as u8;
        Ok(Self { coeffs, growth_p })
    }

    /// φ(u) = c₁u + c₂u² + … (odd quintic example: `[0, -1, 0, 0, 0, 1]`).
    pub fn quintic_critical() -> Self {
        Self::new(&[0.0, -1.0, 0.0, 0.0, 0.0, 1.0]).expect("valid quintic")
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Growth exponent p of |φ″(u)| ≤ c(1 + |u|^p); p ≤ 3 by construction.
    pub fn growth_exponent(&self) -> u8 {
        self.growth_p
    }

    pub fn phi(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = (acc + c) * u;
        }
        acc
    }

    pub fn phi_prime(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * u + (i + 1) as f64 * c;
        }
        acc
    }

    /// Leading coefficient of φ′ and its degree.
    fn phi_prime_leading(&self) -> Option<(f64, usize)> {
        let d = self.coeffs.len();
        if d == 0 {
            return None;
        }
        Some((d as f64 * self.coeffs[d - 1], d - 1))
    }
}

/// Evaluate φ(u) pseudo-spectrally on a de-aliased grid and return its modes.
///
/// The grid must hold at least as many points as `3 · field.modes()` for the
/// quintic product to be alias-free on the retained modes.
pub fn apply_phi(field: &SpectralField, phi: &NonlinearitySpec, grid: &SineGrid) -> SpectralField {
    if phi.is_zero() {
        return SpectralField::zeros(field.modes());
    }
    let values = grid.to_grid(field);
    let transformed: Vec<f64> = values.iter().map(|&u| phi.phi(u)).collect();
    let out = grid.to_modes(&transformed);
    SpectralField::new(out.coeffs()[..field.modes()].to_vec())
}

/// Probe φ′ against the dissipation threshold: liminf φ′ must exceed −λ₁,
/// and the minimum of φ′ outside the declared compact interval is reported.
pub fn check_dissipativity(
    phi: &NonlinearitySpec,
    probe_interval: (f64, f64),
) -> DissipativityReport {
    let (lo, hi) = probe_interval;
    assert!(lo < hi, "probe interval must be nondegenerate");

    let liminf = match phi.phi_prime_leading() {
        // φ ≡ 0: φ′ ≡ 0.
        None => 0.0,
        Some((_, 0)) => phi.phi_prime(0.0),
        Some((lead, deg)) => {
            if deg % 2 == 0 && lead > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        }
    };

    let min_on = |a: f64, b: f64| -> (f64, f64) {
        let samples = 4096;
        let mut best = (phi.phi_prime(a), a);
        for i in 0..=samples {
            let u = a + (b - a) * i as f64 / samples as f64;
            let v = phi.phi_prime(u);
            if v < best.0 {
                best = (v, u);
            }
        }
        // Golden-section refinement around the sampled minimizer.
        let h = (b - a) / samples as f64;
        let (mut lo, mut hi) = ((best.1 - h).max(a), (best.1 + h).min(b));
        for _ in 0..60 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if phi.phi_prime(m1) < phi.phi_prime(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let u = 0.5 * (lo + hi);
        let v = phi.phi_prime(u);
        if v < best.0 {
            (v, u)
        } else {
            best
        }
    };

    let min_inside = min_on(lo, hi);
    // Wide flanks stand in for the unbounded complement; the asymptote is
    // covered by `liminf`.
    let span = 50.0 * (1.0 + hi.abs().max(lo.abs()));
    let left = min_on(lo - span, lo);
    let right = min_on(hi, hi + span);
    let min_outside = if left.0 <= right.0 { left } else { right };

    let effective_outside = min_outside.0.min(liminf);
    let margin = liminf - (-LAMBDA_1);
    let accepted = liminf > -LAMBDA_1 && effective_outside > -LAMBDA_1;

    DissipativityReport {
        min_inside,
        min_outside,
        liminf,
        margin,
        accepted,
    }
}
