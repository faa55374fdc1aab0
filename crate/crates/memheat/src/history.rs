//! The discretized memory space L²_μ(R⁺; H^r) and the translation generator.
//!
//! A history field η carries one spectral field per quadrature node of the
//! measure μ(s) ds, with the boundary convention η(0) = 0.  The generator
//! T = −∂_s is discretized by a first-order upwind difference taking the
//! neighbour toward s = 0, the direction the transport characteristic of
//! ∂_t η = −∂_s η + u comes from.  With transport coefficients c_j = w_j g_j
//! (weight times inverse upwind gap) forced nonincreasing in j, summation by
//! parts gives
//!
//! ```text
//! −⟨T_h η, η⟩ ≥ ½ [ c_J‖η_J‖² + Σ_j (c_j − c_{j+1})‖η_j‖² ] ≥ 0
//! ```
//!
//! for every η and every norm index r, which is the discrete counterpart of
//! the nonpositivity of the continuum quadratic form.  Membership in the
//! domain of T has no canonical discrete analog; finiteness of ‖T_h η‖ in the
//! discrete memory norm stands in for it throughout.

use crate::error::{Error, Result};
use crate::kernels::{quadrature, KernelSpec, QuadratureSpec};
use crate::spectral::SpectralField;
use std::sync::Arc;

/// Quadrature nodes, μ- and κ-masses per cell, and the upwind transport
/// coefficients, all derived from one kernel.
#[derive(Debug)]
pub struct HistoryGrid {
    kernel: KernelSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kappa_weights: Vec<f64>,
    /// Inverse upwind gaps g_j, adjusted so c_j = w_j g_j is nonincreasing.
    upwind: Vec<f64>,
    /// Largest relative adjustment applied by the monotonicity clip.
    clip_deviation: f64,
}

impl HistoryGrid {
    pub fn new(kernel: KernelSpec, spec: &QuadratureSpec) -> Result<Arc<Self>> {
        let (nodes, weights) = quadrature(&kernel, spec)?;
        if nodes.len() < 2 {
            return Err(Error::TooFewHistoryNodes(nodes.len()));
        }
        let edges = crate::kernels::cell_edges(&kernel, spec)?;
        let kappa_weights: Vec<f64> = edges
            .windows(2)
            .map(|c| kernel.kappa_mass(c[0], c[1]).max(0.0))
            .collect();

        // Upwind gaps toward s = 0, with the virtual boundary node at 0.
        let mut upwind = Vec::with_capacity(nodes.len());
        let mut prev_s = 0.0;
        let mut prev_c = f64::INFINITY;
        let mut clip_deviation: f64 = 0.0;
        for (j, &s) in nodes.iter().enumerate() {
            let gap = s - prev_s;
            let g_raw = 1.0 / gap;
            let w = weights[j];
            let g = if w > 0.0 {
                let c_raw = w * g_raw;
                let c = c_raw.min(prev_c);
                clip_deviation = clip_deviation.max((c_raw - c) / c_raw);
                prev_c = c;
                c / w
            } else {
                // Massless cells (beyond a compact support) carry plain
                // upwind transport and a zero form coefficient.
                prev_c = 0.0;
                g_raw
            };
            upwind.push(g);
            prev_s = s;
        }

        Ok(Arc::new(Self {
            kernel,
            nodes,
            weights,
            kappa_weights,
            upwind,
            clip_deviation,
        }))
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kappa_weights(&self) -> &[f64] {
        &self.kappa_weights
    }

    pub fn upwind(&self) -> &[f64] {
        &self.upwind
    }

    /// How much the monotonicity clip bent the raw upwind coefficients;
    /// zero on the standard grids.
    pub fn clip_deviation(&self) -> f64 {
        self.clip_deviation
    }

    /// Largest upwind gap among nodes up to `s_cap` (all nodes if infinite).
    pub fn max_gap(&self, s_cap: f64) -> f64 {
        let mut prev = 0.0;
        let mut max = 0.0_f64;
        for &s in &self.nodes {
            if s > s_cap {
                break;
            }
            max = max.max(s - prev);
            prev = s;
        }
        max
    }

    fn compatible(&self, other: &Self) -> bool {
        std::ptr::eq(self, other) || self.nodes == other.nodes
    }
}

/// The memory variable: one spectral field per quadrature node.
#[derive(Debug, Clone)]
pub struct HistoryField {
    grid: Arc<HistoryGrid>,
    values: Vec<SpectralField>,
}

impl HistoryField {
    pub fn new(grid: Arc<HistoryGrid>, values: Vec<SpectralField>) -> Self {
        assert_eq!(grid.len(), values.len(), "node/value count mismatch");
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<HistoryGrid>, modes: usize) -> Self {
        let values = (0..grid.len())
            .map(|_| SpectralField::zeros(modes))
            .collect();
        Self { grid, values }
    }

    /// Linear ramp η(s) = u·s, the stationary profile fed by a constant u.
    pub fn ramp(grid: Arc<HistoryGrid>, u: &SpectralField) -> Self {
        let values = grid.nodes().iter().map(|&s| u.scale(s)).collect();
        Self { grid, values }
    }

    /// Constant-in-s profile η(s) ≡ u.
    pub fn constant(grid: Arc<HistoryGrid>, u: &SpectralField) -> Self {
        let values = grid.nodes().iter().map(|_| u.clone()).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<HistoryGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[SpectralField] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [SpectralField] {
        &mut self.values
    }

    pub fn modes(&self) -> usize {
        self.values.first().map_or(0, |v| v.modes())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Squared memory norm Σ_j w_j ‖η_j‖²_r.
    pub fn norm_sq(&self, r: f64) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.norm_sq(r))
            .sum()
    }

    pub fn norm(&self, r: f64) -> f64 {
        self.norm_sq(r).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert!(self.grid.compatible(&other.grid), "grid mismatch");
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert!(self.grid.compatible(&other.grid), "grid mismatch");
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        assert!(self.grid.compatible(&other.grid), "grid mismatch");
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.axpy(c, b))
                .collect(),
        }
    }

    /// Memory integral against the weights: Σ_j w_j η_j (a spectral field).
    pub fn weighted_sum(&self) -> SpectralField {
        let mut acc = SpectralField::zeros(self.modes());
        for (w, v) in self.grid.weights().iter().zip(&self.values) {
            if *w != 0.0 {
                acc = acc.axpy(*w, v);
            }
        }
        acc
    }
}

/// Weighted inner product ⟨η, ψ⟩ = Σ_j w_j ⟨η_j, ψ_j⟩_r.
pub fn mr_inner(eta: &HistoryField, psi: &HistoryField, r: f64) -> Result<f64> {
    if !eta.grid.compatible(&psi.grid) {
        return Err(Error::GridMismatch("memory inner product".into()));
    }
    Ok(eta
        .grid
        .weights()
        .iter()
        .zip(eta.values().iter().zip(psi.values()))
        .map(|(w, (a, b))| w * a.inner(b, r))
        .sum())
}

/// Inner product of η with a field lifted constant in s: Σ_j w_j ⟨η_j, u⟩_r.
pub fn mr_inner_const(eta: &HistoryField, u: &SpectralField, r: f64) -> f64 {
    eta.grid
        .weights()
        .iter()
        .zip(eta.values())
        .map(|(w, v)| w * v.inner(u, r))
        .sum()
}

/// Upwind discretization of T η = −η′ with η(0) = 0.
pub fn apply_t(eta: &HistoryField) -> Result<HistoryField> {
    let grid = &eta.grid;
    if grid.len() < 2 {
        return Err(Error::TooFewHistoryNodes(grid.len()));
    }
    let modes = eta.modes();
    let mut values = Vec::with_capacity(grid.len());
    let zero = SpectralField::zeros(modes);
    let mut prev = &zero;
    for (j, v) in eta.values().iter().enumerate() {
        let g = grid.upwind()[j];
        values.push(prev.sub(v).scale(g));
        prev = v;
    }
    Ok(HistoryField::new(grid.clone(), values))
}

/// The two parts of the tail functional: the transport term ‖Tη‖²_{M²} and
/// the dyadic supremum of the weighted tail mass.
#[derive(Debug, Clone, Copy)]
pub struct XiValue {
    pub transport_sq: f64,
    pub tail_sup: f64,
    pub total: f64,
}

/// Tail functional Ξ[η] = ‖T_h η‖²_{M²} + sup_x x ∫_{(0,1/x)∪(x,∞)} μ‖η‖²₂ ds,
/// with the supremum sampled on the dyadic lattice x ∈ {1, 2, 4, …}.
pub fn xi_functional(eta: &HistoryField) -> Result<XiValue> {
    let transport_sq = apply_t(eta)?.norm_sq(2.0);
    let grid = &eta.grid;
    let s_max = grid.kernel().s_max();

    let mut tail_sup = 0.0_f64;
    let mut x = 1.0;
    while x <= s_max.max(1.0) {
        let inv = 1.0 / x;
        let mass: f64 = grid
            .weights()
            .iter()
            .zip(grid.nodes().iter().zip(eta.values()))
            .filter(|(_, (s, _))| **s < inv || **s > x)
            .map(|(w, (_, v))| w * v.norm_sq(2.0))
            .sum();
        tail_sup = tail_sup.max(x * mass);
        x *= 2.0;
    }
    Ok(XiValue {
        transport_sq,
        tail_sup,
        total: transport_sq + tail_sup,
    })
}

/// Initial history built from past samples of u on (−T_past, 0]:
/// η₀(s) = ∫₀^s û(−y) dy by the trapezoid rule on the sample times.
///
/// `past` holds (t_i, û(t_i)) with t_i ≤ 0 strictly increasing to 0.  Nodes
/// beyond the sampled range reuse the integral with û frozen at the earliest
/// sample; the returned flag reports whether that extension was needed.
pub fn build_initial_history(
    grid: Arc<HistoryGrid>,
    past: &[(f64, SpectralField)],
) -> Result<(HistoryField, bool)> {
    if past.is_empty() {
        return Err(Error::MissingTrajectory);
    }
    for w in past.windows(2) {
        if !(w[0].0 < w[1].0) {
            return Err(Error::TrajectoryGap(
                "past samples must be strictly increasing in time".into(),
            ));
        }
    }
    if past.last().unwrap().0 > 0.0 {
        return Err(Error::TrajectoryGap(
            "past samples must end at t ≤ 0".into(),
        ));
    }
    let modes = past[0].1.modes();
    // Reverse to samples of y ↦ û(−y), y ≥ 0.
    let samples: Vec<(f64, &SpectralField)> = past.iter().rev().map(|(t, u)| (-t, u)).collect();
    let t_past = samples.last().unwrap().0;

    let mut values = Vec::with_capacity(grid.len());
    let mut extended = false;
    let mut acc = SpectralField::zeros(modes);
    let mut y_prev = samples[0].0; // should be 0; tolerate a late first sample
    let mut f_prev = samples[0].1;
    let mut idx = 1;
    for &s in grid.nodes() {
        // Advance the cumulative trapezoid up to y = s.
        while idx < samples.len() && samples[idx].0 <= s {
            let (y, f) = samples[idx];
            acc = acc.axpy(0.5 * (y - y_prev), &f_prev.add(f));
            y_prev = y;
            f_prev = f;
            idx += 1;
        }
        let mut eta_s = acc.clone();
        if s <= t_past {
            // Partial cell with linear interpolation of û.
            if idx < samples.len() && s > y_prev {
                let (y, f) = samples[idx];
                let t = (s - y_prev) / (y - y_prev);
                let f_mid = f_prev.scale(1.0 - t).axpy(t, f);
                eta_s = eta_s.axpy(0.5 * (s - y_prev), &f_prev.add(&f_mid));
            }
        } else {
            // Beyond the sampled past: freeze û at its earliest value.
            extended = true;
            eta_s = eta_s.axpy(s - y_prev.max(t_past), f_prev);
        }
        values.push(eta_s);
    }
    Ok((HistoryField::new(grid, values), extended))
}
