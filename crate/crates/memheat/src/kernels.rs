//! Memory kernels μ with derived κ and the structural decay conditions.
//!
//! A kernel is a nonnegative nonincreasing summable μ on (0, ∞) normalized so
//! that ∫ s μ(s) ds = 1 (equivalently ∫ κ = 1, by parts), with
//! κ(s) = κ₀ − ∫₀^s μ and κ₀ = ∫ μ.  Three structural conditions are checked
//! on sample grids, each reported with the best constant found by bisection:
//!
//! * pointwise domination κ(s) ≤ Θ μ(s),
//! * the two-parameter form μ(s+σ) ≤ C e^{−δσ} μ(s),
//! * the differential form μ′(s) + δ μ(s) ≤ 0.
//!
//! Integrals of μ, sμ and κ over arbitrary cells are evaluated in closed form
//! per family, so quadrature weights derived here carry the kernel's moments
//! to rounding accuracy.

use crate::error::{Error, Result};
use std::path::Path;

/// Declared tolerance for the normalization residuals of a constructed kernel.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Candidate range for the structural constants Θ, C, δ.
pub const SEARCH_LO: f64 = 1e-3;
pub const SEARCH_HI: f64 = 1e3;

/// Relative slack absorbing floating-point noise in the grid inequalities.
const GRID_SLACK: f64 = 1e-11;

/// Kernel family with its defining parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// μ(s) = δ² e^{−δs}; κ₀ = δ, κ(s) = δ e^{−δs}, both normalizations exact.
    Exponential { delta: f64 },
    /// μ(s) = (2/S²)·1_{[0,S]}(s); κ₀ = 2/S, κ(s) = (2/S²)(S − s)₊.
    CompactLinear { support: f64 },
    /// Piecewise-linear samples, extended by μ(s₁) on [0, s₁] and by 0 beyond
    /// the last sample, amplitude-scaled so the first moment is 1.
    Tabulated { s: Vec<f64>, mu: Vec<f64> },
}

/// Sample-grid request for kernel construction.
#[derive(Debug, Clone, Copy)]
pub struct SampleGrid {
    pub count: usize,
    /// First grid point as a fraction of the kernel's intrinsic scale.
    pub s_min_factor: f64,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self {
            count: 512,
            s_min_factor: 1e-4,
        }
    }
}

/// A constructed kernel: family, sample grid, μ and κ values on it, and the
/// normalization residuals measured by the module's own quadrature.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    kappa0: f64,
    s_max: f64,
    grid: Vec<f64>,
    mu_values: Vec<f64>,
    kappa_values: Vec<f64>,
    /// (|∫κ − 1|, |∫sμ − 1|) over [0, s_max].
    norm_residuals: (f64, f64),
    /// Amplitude factor applied to tabulated input; 1 for analytic families.
    amplitude: f64,
}

impl KernelSpec {
    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn mu_values(&self) -> &[f64] {
        &self.mu_values
    }

    pub fn kappa_values(&self) -> &[f64] {
        &self.kappa_values
    }

    pub fn normalization_residuals(&self) -> (f64, f64) {
        self.norm_residuals
    }

    /// Intrinsic length scale: 1/δ, the support, or the last sample point.
    pub fn scale_hint(&self) -> f64 {
        match &self.family {
            KernelFamily::Exponential { delta } => 1.0 / delta,
            KernelFamily::CompactLinear { support } => *support,
            KernelFamily::Tabulated { s, .. } => *s.last().unwrap(),
        }
    }

    pub fn eval_mu(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match &self.family {
            KernelFamily::Exponential { delta } => delta * delta * (-delta * s).exp(),
            KernelFamily::CompactLinear { support } => {
                if s <= *support {
                    2.0 / (support * support)
                } else {
                    0.0
                }
            }
            KernelFamily::Tabulated { s: xs, mu } => {
                let a = self.amplitude;
                if s <= xs[0] {
                    return a * mu[0];
                }
                if s >= *xs.last().unwrap() {
                    return 0.0;
                }
                let i = xs.partition_point(|&x| x <= s) - 1;
                let t = (s - xs[i]) / (xs[i + 1] - xs[i]);
                a * (mu[i] + t * (mu[i + 1] - mu[i]))
            }
        }
    }

    pub fn eval_kappa(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.kappa0;
        }
        match &self.family {
            KernelFamily::Exponential { delta } => delta * (-delta * s).exp(),
            KernelFamily::CompactLinear { support } => {
                if s < *support {
                    2.0 / (support * support) * (support - s)
                } else {
                    0.0
                }
            }
            KernelFamily::Tabulated { .. } => (self.kappa0 - self.mass(0.0, s)).max(0.0),
        }
    }

    /// Exact ∫_a^b μ(s) ds.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        let a = a.max(0.0);
        match &self.family {
            KernelFamily::Exponential { delta } => {
                -delta * (-delta * a).exp() * (-delta * (b - a)).exp_m1()
            }
            KernelFamily::CompactLinear { support } => {
                let (lo, hi) = (a.min(*support), b.min(*support));
                2.0 / (support * support) * (hi - lo).max(0.0)
            }
            KernelFamily::Tabulated { .. } => {
                self.piecewise_integral(a, b, |ya, slope, x0, lo, hi| {
                    ya * (hi - lo) + slope * ((hi - x0).powi(2) - (lo - x0).powi(2)) / 2.0
                })
            }
        }
    }

    /// Exact ∫_a^b s μ(s) ds.
    pub fn first_moment(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        let a = a.max(0.0);
        match &self.family {
            KernelFamily::Exponential { delta } => {
                let h = b - a;
                let e = (-delta * a).exp();
                e * (-(delta * a + 1.0) * (-delta * h).exp_m1() - delta * h * (-delta * h).exp())
            }
            KernelFamily::CompactLinear { support } => {
                let (lo, hi) = (a.min(*support), b.min(*support));
                if hi <= lo {
                    0.0
                } else {
                    1.0 / (support * support) * (hi * hi - lo * lo)
                }
            }
            KernelFamily::Tabulated { .. } => {
                self.piecewise_integral(a, b, |ya, slope, x0, lo, hi| {
                    let c0 = ya - slope * x0;
                    c0 * (hi * hi - lo * lo) / 2.0 + slope * (hi.powi(3) - lo.powi(3)) / 3.0
                })
            }
        }
    }

    /// Exact ∫_a^b κ(s) ds.
    pub fn kappa_mass(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        let a = a.max(0.0);
        match &self.family {
            KernelFamily::Exponential { delta } => {
                -(-delta * a).exp() * (-delta * (b - a)).exp_m1()
            }
            KernelFamily::CompactLinear { support } => {
                let (lo, hi) = (a.min(*support), b.min(*support));
                if hi <= lo {
                    0.0
                } else {
                    2.0 / (support * support)
                        * (*support * (hi - lo) - (hi * hi - lo * lo) / 2.0)
                }
            }
            KernelFamily::Tabulated { .. } => {
                // ∫ κ over one linear piece: κ(lo)·h − ∫ cumulative growth.
                self.piecewise_kappa_integral(a, b)
            }
        }
    }

    /// Split [a, b] at the tabulated breakpoints and sum closed-form pieces.
    /// The closure receives (μ at piece start, slope, segment origin, lo, hi).
    fn piecewise_integral<F>(&self, a: f64, b: f64, piece: F) -> f64
    where
        F: Fn(f64, f64, f64, f64, f64) -> f64,
    {
        let (xs, mu) = match &self.family {
            KernelFamily::Tabulated { s, mu } => (s, mu),
            _ => unreachable!("piecewise integrals are for tabulated kernels"),
        };
        let amp = self.amplitude;
        let last = *xs.last().unwrap();
        let b = b.min(last);
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = a;
        while lo < b {
            let (x0, y0, slope, seg_end) = if lo < xs[0] {
                (0.0, amp * mu[0], 0.0, xs[0])
            } else {
                let i = (xs.partition_point(|&x| x <= lo) - 1).min(xs.len() - 2);
                let sl = amp * (mu[i + 1] - mu[i]) / (xs[i + 1] - xs[i]);
                (xs[i], amp * mu[i], sl, xs[i + 1])
            };
            let hi = b.min(seg_end);
            let ya = y0 + slope * (lo - x0);
            total += piece(ya, slope, lo, lo, hi);
            lo = hi;
        }
        total
    }

    fn piecewise_kappa_integral(&self, a: f64, b: f64) -> f64 {
        let (xs, mu) = match &self.family {
            KernelFamily::Tabulated { s, mu } => (s, mu),
            _ => unreachable!(),
        };
        let amp = self.amplitude;
        let last = *xs.last().unwrap();
        // κ ≡ 0 beyond the last sample for amplitude-normalized input.
        let b_eff = b.min(last);
        if b_eff <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = a;
        let mut kappa_lo = self.eval_kappa(lo);
        while lo < b_eff {
            let (y_lo, slope, seg_end) = if lo < xs[0] {
                (amp * mu[0], 0.0, xs[0])
            } else {
                let i = (xs.partition_point(|&x| x <= lo) - 1).min(xs.len() - 2);
                let sl = amp * (mu[i + 1] - mu[i]) / (xs[i + 1] - xs[i]);
                (amp * mu[i] + sl * (lo - xs[i]), sl, xs[i + 1])
            };
            let hi = b_eff.min(seg_end);
            let h = hi - lo;
            total += kappa_lo * h - (y_lo * h * h / 2.0 + slope * h * h * h / 6.0);
            kappa_lo -= y_lo * h + slope * h * h / 2.0;
            lo = hi;
        }
        total
    }
}

/// Build a kernel, deriving κ on the sample grid from exact cumulative masses
/// and verifying the normalizations.
pub fn make_kernel(family: KernelFamily, grid_spec: SampleGrid) -> Result<KernelSpec> {
    let (family, amplitude, s_max, scale) = match family {
        KernelFamily::Exponential { delta } => {
            if !(delta > 0.0) || !delta.is_finite() {
                return Err(Error::InvalidKernelParameter(format!(
                    "exponential rate must be positive, got {delta}"
                )));
            }
            // Truncation keeps both neglected tails below 1e-10 and the grid
            // end below 1e-12·μ(s₁).
            (
                KernelFamily::Exponential { delta },
                1.0,
                40.0 / delta,
                1.0 / delta,
            )
        }
        KernelFamily::CompactLinear { support } => {
            if !(support > 0.0) || !support.is_finite() {
                return Err(Error::InvalidKernelParameter(format!(
                    "support endpoint must be positive, got {support}"
                )));
            }
            (KernelFamily::CompactLinear { support }, 1.0, support, support)
        }
        KernelFamily::Tabulated { s, mu } => {
            validate_tabulated(&s, &mu)?;
            let s_max = *s.last().unwrap();
            // Raw first moment of the piecewise-linear interpolant including
            // the constant head extension on [0, s₁].
            let probe = KernelSpec {
                family: KernelFamily::Tabulated {
                    s: s.clone(),
                    mu: mu.clone(),
                },
                kappa0: 0.0,
                s_max,
                grid: vec![],
                mu_values: vec![],
                kappa_values: vec![],
                norm_residuals: (0.0, 0.0),
                amplitude: 1.0,
            };
            let raw_moment = probe.first_moment(0.0, s_max);
            if raw_moment <= 0.0 {
                return Err(Error::NonNormalizable(
                    "tabulated kernel has zero first moment".into(),
                ));
            }
            let scale_hint = s_max;
            (
                KernelFamily::Tabulated { s, mu },
                1.0 / raw_moment,
                s_max,
                scale_hint,
            )
        }
    };

    let mut spec = KernelSpec {
        family,
        kappa0: 0.0,
        s_max,
        grid: vec![],
        mu_values: vec![],
        kappa_values: vec![],
        norm_residuals: (0.0, 0.0),
        amplitude,
    };
    spec.kappa0 = spec.mass(0.0, s_max);
    if spec.kappa0 <= 0.0 {
        return Err(Error::NonNormalizable("kernel has zero total mass".into()));
    }

    // Sample grid: the tabulated breakpoints themselves, or geometric nodes.
    let grid: Vec<f64> = match &spec.family {
        KernelFamily::Tabulated { s, .. } => s.clone(),
        _ => {
            let n = grid_spec.count.max(16);
            let lo = grid_spec.s_min_factor * scale;
            (0..n)
                .map(|j| lo * (s_max / lo).powf(j as f64 / (n - 1) as f64))
                .collect()
        }
    };

    // Truncation-point requirement for the decaying family.
    if let KernelFamily::Exponential { .. } = spec.family {
        let head = spec.eval_mu(grid[0]);
        if spec.eval_mu(s_max) > 1e-12 * head {
            return Err(Error::InvalidKernelParameter(
                "grid does not cover the kernel decay".into(),
            ));
        }
    }

    let mu_values: Vec<f64> = grid.iter().map(|&s| spec.eval_mu(s)).collect();
    // κ as the primitive complement of μ; the closed form per family agrees
    // with the cumulative cell masses to rounding and avoids the cancellation
    // a running sum would leave in the far tail.
    let kappa_values: Vec<f64> = grid.iter().map(|&s| spec.eval_kappa(s)).collect();

    for w in mu_values.windows(2) {
        if w[1] > w[0] * (1.0 + GRID_SLACK) + 1e-300 {
            return Err(Error::InvalidTabulated(
                "μ must be nonincreasing on the sample grid".into(),
            ));
        }
    }

    let resid_kappa = (spec.kappa_mass(0.0, s_max) - 1.0).abs();
    let resid_moment = (spec.first_moment(0.0, s_max) - 1.0).abs();
    if resid_kappa > NORMALIZATION_TOL || resid_moment > NORMALIZATION_TOL {
        return Err(Error::NonNormalizable(format!(
            "normalization residuals ({resid_kappa:.3e}, {resid_moment:.3e}) exceed {NORMALIZATION_TOL:.1e}"
        )));
    }

    spec.grid = grid;
    spec.mu_values = mu_values;
    spec.kappa_values = kappa_values;
    spec.norm_residuals = (resid_kappa, resid_moment);
    Ok(spec)
}

fn validate_tabulated(s: &[f64], mu: &[f64]) -> Result<()> {
    if s.len() != mu.len() {
        return Err(Error::InvalidTabulated("s and μ lengths differ".into()));
    }
    if s.len() < 16 {
        return Err(Error::InvalidTabulated(format!(
            "need at least 16 samples, got {}",
            s.len()
        )));
    }
    if !(s[0] > 0.0) {
        return Err(Error::InvalidTabulated("first sample must be > 0".into()));
    }
    for w in s.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidTabulated(
                "sample grid must be strictly increasing".into(),
            ));
        }
    }
    for (w, &v) in mu.windows(2).zip(mu.iter()) {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidTabulated("μ must be finite and ≥ 0".into()));
        }
        if w[1] > w[0] {
            return Err(Error::InvalidTabulated("μ must be nonincreasing".into()));
        }
    }
    Ok(())
}

/// Read a tabulated kernel from a two-column CSV file (s, μ), with or without
/// a header row.
pub fn tabulated_from_csv<P: AsRef<Path>>(path: P) -> Result<KernelFamily> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut s = Vec::new();
    let mut mu = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::InvalidTabulated(format!(
                "row {} has {} columns, expected 2",
                i + 1,
                record.len()
            )));
        }
        match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                s.push(a);
                mu.push(b);
            }
            _ if i == 0 => continue, // header row
            _ => {
                return Err(Error::InvalidTabulated(format!(
                    "row {} is not numeric",
                    i + 1
                )))
            }
        }
    }
    Ok(KernelFamily::Tabulated { s, mu })
}

// ---------------------------------------------------------------------------
// Structural conditions
// ---------------------------------------------------------------------------

/// A point (or pair) at which a condition check failed, with both sides.
#[derive(Debug, Clone)]
pub struct Witness {
    pub s: f64,
    pub sigma: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one structural condition: the best constant found, or a witness.
#[derive(Debug, Clone)]
pub enum ConditionCheck<T> {
    Holds(T),
    Fails(Witness),
}

impl<T> ConditionCheck<T> {
    pub fn holds(&self) -> bool {
        matches!(self, ConditionCheck::Holds(_))
    }

    pub fn constant(&self) -> Option<&T> {
        match self {
            ConditionCheck::Holds(t) => Some(t),
            ConditionCheck::Fails(_) => None,
        }
    }
}

/// Pair (C, δ) verifying μ(s+σ) ≤ C e^{−δσ} μ(s) on the sampled lattice.
#[derive(Debug, Clone, Copy)]
pub struct Nec2Pair {
    pub c: f64,
    pub delta: f64,
}

/// Report of all structural conditions for one kernel.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    /// Smallest Θ with κ ≤ Θμ on the grid.
    pub nec_theta: ConditionCheck<f64>,
    /// (C, δ) for the two-parameter decay inequality; C = 1 whenever the
    /// differential condition holds.
    pub nec2_pair: ConditionCheck<Nec2Pair>,
    /// Largest δ with μ′ + δμ ≤ 0 between grid points.
    pub bad_delta: ConditionCheck<f64>,
    /// (|∫κ − 1|, |∫sμ − 1|) echoed from the kernel.
    pub normalization: (f64, f64),
}

/// Grid-search all structural conditions; failures carry witnesses, not errors.
pub fn check_conditions(kernel: &KernelSpec) -> ConditionReport {
    ConditionReport {
        nec_theta: check_nec(kernel),
        nec2_pair: check_nec2(kernel),
        bad_delta: check_bad(kernel),
        normalization: kernel.normalization_residuals(),
    }
}

fn check_nec(kernel: &KernelSpec) -> ConditionCheck<f64> {
    let grid = kernel.grid();
    let mu = kernel.mu_values();
    let kappa = kernel.kappa_values();
    let tiny = 1e-300;

    // A point with μ = 0 but κ > 0 defeats any Θ.
    for j in 0..grid.len() {
        if mu[j] <= tiny && kappa[j] > GRID_SLACK * kernel.kappa0() {
            return ConditionCheck::Fails(Witness {
                s: grid[j],
                sigma: None,
                lhs: kappa[j],
                rhs: 0.0,
            });
        }
    }

    let admissible = |theta: f64| -> Option<usize> {
        for j in 0..grid.len() {
            if kappa[j] > theta * mu[j] * (1.0 + GRID_SLACK) + tiny {
                return Some(j);
            }
        }
        None
    };

    if let Some(j) = admissible(SEARCH_HI) {
        return ConditionCheck::Fails(Witness {
            s: grid[j],
            sigma: None,
            lhs: kappa[j],
            rhs: SEARCH_HI * mu[j],
        });
    }
    let (mut lo, mut hi) = (SEARCH_LO, SEARCH_HI);
    if admissible(lo).is_none() {
        return ConditionCheck::Holds(lo);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if admissible(mid).is_none() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    ConditionCheck::Holds(hi)
}

fn check_bad(kernel: &KernelSpec) -> ConditionCheck<f64> {
    let grid = kernel.grid();
    let mu = kernel.mu_values();

    // Interval test: slope + δ·√(μ_j μ_{j+1}) ≤ 0.  The geometric mean makes
    // the recovered rate exact for the exponential family as the mesh refines.
    let violation = |delta: f64| -> Option<(usize, f64, f64)> {
        for j in 0..grid.len() - 1 {
            let h = grid[j + 1] - grid[j];
            let slope = (mu[j + 1] - mu[j]) / h;
            let level = (mu[j] * mu[j + 1]).sqrt();
            let lhs = slope + delta * level;
            if lhs > GRID_SLACK * delta * level.max(1e-300) {
                return Some((j, slope, level));
            }
        }
        None
    };

    if let Some((j, slope, level)) = violation(SEARCH_LO) {
        return ConditionCheck::Fails(Witness {
            s: 0.5 * (grid[j] + grid[j + 1]),
            sigma: None,
            lhs: slope + SEARCH_LO * level,
            rhs: 0.0,
        });
    }
    if violation(SEARCH_HI).is_none() {
        return ConditionCheck::Holds(SEARCH_HI);
    }
    let (mut lo, mut hi) = (SEARCH_LO, SEARCH_HI);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if violation(mid).is_none() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ConditionCheck::Holds(lo)
}

/// Logarithmic (s, σ) lattice for the two-parameter inequality.
fn nec2_lattice(kernel: &KernelSpec) -> (Vec<f64>, Vec<f64>) {
    let s_max = kernel.s_max();
    let grid = kernel.grid();
    let stride = (grid.len() / 64).max(1);
    let s: Vec<f64> = grid
        .iter()
        .step_by(stride)
        .copied()
        .filter(|&s| kernel.eval_mu(s) > 0.0)
        .collect();
    let lo = grid[0].max(1e-6 * s_max);
    let mut sigma = vec![0.0];
    let steps = 48;
    for i in 0..=steps {
        sigma.push(lo * (s_max / lo).powf(i as f64 / steps as f64));
    }
    (s, sigma)
}

fn check_nec2(kernel: &KernelSpec) -> ConditionCheck<Nec2Pair> {
    let (ss, sigmas) = nec2_lattice(kernel);
    let tiny = 1e-300;

    let violation = |c: f64, delta: f64| -> Option<(f64, f64, f64, f64)> {
        for &s in &ss {
            let base = kernel.eval_mu(s);
            if base <= tiny {
                continue;
            }
            for &sigma in &sigmas {
                let lhs = kernel.eval_mu(s + sigma);
                let rhs = c * (-delta * sigma).exp() * base;
                if lhs > rhs * (1.0 + GRID_SLACK) + tiny {
                    return Some((s, sigma, lhs, rhs));
                }
            }
        }
        None
    };

    // First try C = 1 with the largest admissible rate; this arm succeeds
    // exactly when the differential condition does.
    if violation(1.0, SEARCH_LO).is_none() {
        let (mut lo, mut hi) = (SEARCH_LO, SEARCH_HI);
        if violation(1.0, hi).is_none() {
            return ConditionCheck::Holds(Nec2Pair { c: 1.0, delta: hi });
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if violation(1.0, mid).is_none() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return ConditionCheck::Holds(Nec2Pair { c: 1.0, delta: lo });
    }

    // Otherwise scan rates on a log lattice and take the smallest admissible
    // prefactor; ties prefer the larger rate.
    let c_cap = 1e9;
    let mut best: Option<Nec2Pair> = None;
    let mut last_witness = None;
    let delta_steps = 25;
    for i in 0..=delta_steps {
        let delta = SEARCH_LO * (SEARCH_HI / SEARCH_LO).powf(i as f64 / delta_steps as f64);
        let mut c_needed = 1.0_f64;
        let mut witness = None;
        for &s in &ss {
            let base = kernel.eval_mu(s);
            if base <= tiny {
                continue;
            }
            for &sigma in &sigmas {
                let ratio = kernel.eval_mu(s + sigma) * (delta * sigma).exp() / base;
                if ratio > c_needed {
                    c_needed = ratio;
                    witness = Some((s, sigma));
                }
            }
        }
        if c_needed <= c_cap {
            let candidate = Nec2Pair {
                c: c_needed,
                delta,
            };
            best = match best {
                None => Some(candidate),
                Some(b) if candidate.c < b.c * (1.0 - 1e-12) => Some(candidate),
                Some(b) => Some(b),
            };
        } else if let Some((s, sigma)) = witness {
            last_witness = Some(Witness {
                s,
                sigma: Some(sigma),
                lhs: kernel.eval_mu(s + sigma),
                rhs: c_cap * (-delta * sigma).exp() * kernel.eval_mu(s),
            });
        }
    }
    match best {
        Some(pair) => ConditionCheck::Holds(pair),
        None => ConditionCheck::Fails(last_witness.expect("no admissible pair")),
    }
}

// ---------------------------------------------------------------------------
// Quadrature of the measure μ(s) ds
// ---------------------------------------------------------------------------

/// Cell layout for the memory-space quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRule {
    /// Geometric cell edges clustered near s = 0.
    Geometric,
    /// Uniform cell edges on (0, s_max].
    Uniform,
    /// Geometric head up to the kernel scale, uniform tail beyond it.
    Composite,
}

/// Quadrature request: rule, node count, and the first edge as a fraction of
/// the kernel scale (geometric and composite rules only).
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    pub rule: NodeRule,
    pub count: usize,
    pub s_min_factor: f64,
}

impl QuadratureSpec {
    pub fn geometric(count: usize) -> Self {
        Self {
            rule: NodeRule::Geometric,
            count,
            s_min_factor: 1e-4,
        }
    }

    pub fn uniform(count: usize) -> Self {
        Self {
            rule: NodeRule::Uniform,
            count,
            s_min_factor: 1e-4,
        }
    }

    pub fn composite(count: usize) -> Self {
        Self {
            rule: NodeRule::Composite,
            count,
            s_min_factor: 1e-4,
        }
    }
}

/// Cells with geometrically growing widths filling [0, span], first width w0.
/// Smoothly growing widths keep the upwind transport coefficients w_j/gap_j
/// monotone for nonincreasing kernels.
fn geometric_width_edges(w0: f64, span: f64, count: usize) -> Vec<f64> {
    let n = count as f64;
    let mut edges = Vec::with_capacity(count + 1);
    edges.push(0.0);
    if w0 * n >= span {
        // Degenerately fine head: fall back to uniform cells.
        for j in 1..=count {
            edges.push(span * j as f64 / n);
        }
        return edges;
    }
    // Solve w0 (ρ^n − 1)/(ρ − 1) = span for the width ratio ρ > 1.
    let total = |rho: f64| w0 * (rho.powf(n) - 1.0) / (rho - 1.0);
    let mut lo = 1.0 + 1e-12;
    let mut hi = 2.0;
    while total(hi) < span {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < span {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    let mut width = w0;
    let mut acc = 0.0;
    for j in 1..=count {
        acc += width;
        width *= rho;
        edges.push(if j == count { span } else { acc });
    }
    edges
}

/// Cell edges for a quadrature request; edges[0] = 0, edges[count] = s_max.
pub fn cell_edges(kernel: &KernelSpec, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    if spec.count < 4 {
        return Err(Error::InsufficientNodes {
            min: 4,
            got: spec.count,
        });
    }
    let s_max = kernel.s_max();
    let scale = kernel.scale_hint();
    let w0 = spec.s_min_factor * scale;
    let n = spec.count;
    let edges = match spec.rule {
        NodeRule::Geometric => geometric_width_edges(w0, s_max, n),
        NodeRule::Uniform => {
            let mut edges = Vec::with_capacity(n + 1);
            edges.push(0.0);
            for j in 1..=n {
                edges.push(s_max * j as f64 / n as f64);
            }
            edges
        }
        NodeRule::Composite => {
            // Geometric head up to the kernel scale, uniform tail beyond.
            let split = scale.min(s_max / 2.0);
            let head = (n / 2).max(2);
            let tail = n - head;
            let mut edges = geometric_width_edges(w0, split, head);
            for j in 1..=tail {
                edges.push(split + (s_max - split) * j as f64 / tail as f64);
            }
            edges
        }
    };
    Ok(edges)
}

/// Discretize the measure μ(s) ds: exact cell masses as weights, μ-centroids
/// as nodes, so Σw = κ₀ and Σ s·w = 1 up to the truncated tail.
pub fn quadrature(kernel: &KernelSpec, spec: &QuadratureSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let edges = cell_edges(kernel, spec)?;
    let mut nodes = Vec::with_capacity(spec.count);
    let mut weights = Vec::with_capacity(spec.count);
    for cell in edges.windows(2) {
        let (a, b) = (cell[0], cell[1]);
        let w = kernel.mass(a, b);
        let node = if w > 0.0 {
            kernel.first_moment(a, b) / w
        } else {
            0.5 * (a + b)
        };
        nodes.push(node.clamp(a, b));
        weights.push(w.max(0.0));
    }
    Ok((nodes, weights))
}
