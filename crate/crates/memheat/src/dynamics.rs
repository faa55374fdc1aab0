//! Time stepping for the coupled field/history system.
//!
//! One step of the IMEX scheme treats the Laplacian implicitly, the memory
//! integral and the nonlinearity explicitly at the current level, and then
//! advances the history by implicit upwind transport fed by the new u:
//!
//! ```text
//! (u⁺ − u)/Δt + A u⁺ + Σ_j w_j A η_j + φ(u) = f + g,
//! (η⁺_j − η_j)/Δt = −g_j (η⁺_j − η⁺_{j−1}) + u⁺,     η⁺₀ = 0.
//! ```
//!
//! Pairing the two updates with (u⁺, η⁺) shows the per-step energy change in
//! every product norm is 2Δt⟨T_h η⁺, η⁺⟩ − 2Δt(1 − O(Δt))‖u⁺‖²_{r+1} plus
//! nonpositive increment terms, so linear runs dissipate step by step.  The
//! scheme is linear in (state, f, g), which the decomposition checks exploit:
//! superpositions of runs reproduce runs of superpositions to rounding.

use crate::error::{Error, Result};
use crate::history::{self, HistoryField, HistoryGrid};
use crate::kernels::KernelFamily;
use crate::spectral::{lambda_k, resolvent_solve, NonlinearitySpec, SineGrid, SpectralField};
use std::sync::Arc;

/// Abort threshold for the sup norm of u.
pub const BLOWUP_SUP: f64 = 1e6;

/// One point of the phase space: the field, its integrated past history, and
/// the time stamp.
#[derive(Debug, Clone)]
pub struct StateZ {
    pub u: SpectralField,
    pub eta: HistoryField,
    pub t: f64,
}

impl StateZ {
    pub fn new(u: SpectralField, eta: HistoryField, t: f64) -> Self {
        assert_eq!(u.modes(), eta.modes(), "field/history mode mismatch");
        Self { u, eta, t }
    }

    pub fn zeros(grid: Arc<HistoryGrid>, modes: usize) -> Self {
        Self {
            u: SpectralField::zeros(modes),
            eta: HistoryField::zeros(grid, modes),
            t: 0.0,
        }
    }

    /// Squared product norm ‖u‖²_r + ‖η‖²_{r+1} of the scale space at index r.
    pub fn hr_norm_sq(&self, r: f64) -> f64 {
        self.u.norm_sq(r) + self.eta.norm_sq(r + 1.0)
    }

    pub fn hr_norm(&self, r: f64) -> f64 {
        self.hr_norm_sq(r).sqrt()
    }

    /// Squared norm of the regular space: ‖u‖²₂ + ‖η‖²_{M²}.
    pub fn v_norm_sq(&self) -> f64 {
        self.u.norm_sq(2.0) + self.eta.norm_sq(2.0)
    }

    pub fn v_norm(&self) -> f64 {
        self.v_norm_sq().sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            u: self.u.add(&other.u),
            eta: self.eta.add(&other.eta),
            t: self.t,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            u: self.u.sub(&other.u),
            eta: self.eta.sub(&other.eta),
            t: self.t,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            u: self.u.scale(c),
            eta: self.eta.scale(c),
            t: self.t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.eta.is_finite()
    }
}

/// Stationary vector of the linear inhomogeneous flow: u_f = ½A⁻¹f with the
/// ramp history η_f(s) = u_f·s, using the unit first moment of μ.
pub fn make_zf(f: &SpectralField, grid: Arc<HistoryGrid>) -> StateZ {
    let u_f = SpectralField::new(
        f.coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| 0.5 * c / lambda_k(i + 1))
            .collect(),
    );
    let eta_f = HistoryField::ramp(grid, &u_f);
    StateZ::new(u_f, eta_f, 0.0)
}

/// Residuals of the stationary system at a state: the field equation
/// ‖Au + Σw_j Aη_j − f‖ and the history equation ‖T_h η + u‖_{M⁰}.
pub fn zf_residual(z: &StateZ, f: &SpectralField) -> Result<(f64, f64)> {
    let mem = z.eta.weighted_sum().apply_a_power(1.0);
    let field_residual = z.u.apply_a_power(1.0).add(&mem).sub(f).norm(0.0);
    let t_eta = history::apply_t(&z.eta)?;
    let hist_residual = t_eta
        .add(&HistoryField::constant(z.eta.grid().clone(), &z.u))
        .norm(0.0);
    Ok((field_residual, hist_residual))
}

/// Time-dependent source g for the auxiliary problem.
#[derive(Debug, Clone, Default)]
pub enum SourceG {
    #[default]
    None,
    /// Linear interpolation between time samples.
    Samples {
        times: Vec<f64>,
        fields: Vec<SpectralField>,
    },
    /// One field per step, evaluated at the step's left endpoint; exact for
    /// sources derived from a stored trajectory with the same Δt.
    PerStep(Vec<SpectralField>),
}

impl SourceG {
    pub fn is_none(&self) -> bool {
        matches!(self, SourceG::None)
    }

    fn at_step(&self, n: usize, t: f64, modes: usize) -> Result<Option<SpectralField>> {
        match self {
            SourceG::None => Ok(None),
            SourceG::PerStep(fields) => fields.get(n).cloned().map(Some).ok_or_else(|| {
                Error::SourceNotCovering(t)
            }),
            SourceG::Samples { times, fields } => {
                if times.is_empty() || t < times[0] - 1e-12 || t > *times.last().unwrap() + 1e-12 {
                    return Err(Error::SourceNotCovering(t));
                }
                let i = times.partition_point(|&x| x <= t).min(times.len() - 1);
                if i == 0 {
                    return Ok(Some(fields[0].clone()));
                }
                let (t0, t1) = (times[i - 1], times[i]);
                let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                let mut field = fields[i - 1].scale(1.0 - w);
                field = field.axpy(w, &fields[i]);
                let _ = modes;
                Ok(Some(field))
            }
        }
    }
}

/// Everything one evolution needs besides the initial state.
#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub grid: Arc<HistoryGrid>,
    pub modes: usize,
    pub dt: f64,
    pub t_final: f64,
    pub phi: Option<NonlinearitySpec>,
    pub forcing: Option<SpectralField>,
    pub g: SourceG,
    /// Full state snapshots every this many steps (0 = auto, about 200 total).
    pub store_state_every: usize,
    /// Per-step field storage cadence (1 = every step, 0 = off).
    pub store_u_every: usize,
    /// Track the quadratic energy functional along the run and enforce its
    /// two-sided bound at every step.
    pub track_lambda: bool,
    /// Declared stability bound for the explicit terms.
    pub max_dt: f64,
}

impl EvolutionConfig {
    pub fn new(grid: Arc<HistoryGrid>, modes: usize, dt: f64, t_final: f64) -> Self {
        Self {
            grid,
            modes,
            dt,
            t_final,
            phi: None,
            forcing: None,
            g: SourceG::None,
            store_state_every: 0,
            store_u_every: 1,
            track_lambda: false,
            max_dt: 0.05,
        }
    }

    pub fn with_phi(mut self, phi: NonlinearitySpec) -> Self {
        self.phi = Some(phi);
        self
    }

    pub fn with_forcing(mut self, f: SpectralField) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn with_g(mut self, g: SourceG) -> Self {
        self.g = g;
        self
    }

    pub fn with_lambda_tracking(mut self) -> Self {
        self.track_lambda = true;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt = {}", self.dt)));
        }
        if self.dt > self.max_dt {
            return Err(Error::InvalidConfig(format!(
                "dt = {} exceeds the declared stability bound {}",
                self.dt, self.max_dt
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidConfig(format!("t_final = {}", self.t_final)));
        }
        if self.modes == 0 {
            return Err(Error::InvalidConfig("modes = 0".into()));
        }
        if let Some(phi) = &self.phi {
            let probe = crate::spectral::check_dissipativity(phi, (-10.0, 10.0));
            if !probe.accepted {
                return Err(Error::InvalidConfig(format!(
                    "nonlinearity fails the dissipation condition: liminf φ' = {}",
                    probe.liminf
                )));
            }
        }
        match &self.g {
            SourceG::None => {}
            SourceG::PerStep(fields) => {
                if fields.len() < self.n_steps() {
                    return Err(Error::SourceNotCovering(self.t_final));
                }
            }
            SourceG::Samples { times, .. } => {
                if times.first().copied().unwrap_or(1.0) > 0.0
                    || times.last().copied().unwrap_or(-1.0) < self.t_final - 1e-12
                {
                    return Err(Error::SourceNotCovering(self.t_final));
                }
            }
        }
        Ok(())
    }
}

/// Per-step norm traces along a run.
#[derive(Debug, Clone, Default)]
pub struct NormTraces {
    pub times: Vec<f64>,
    pub z_h0: Vec<f64>,
    pub z_h1: Vec<f64>,
    pub z_v: Vec<f64>,
    pub u_l2: Vec<f64>,
    pub u_h2_sq: Vec<f64>,
    /// Energy functional values when tracking is enabled.
    pub lambda: Vec<f64>,
}

/// Output of an evolution: snapshots, per-step norms, and optionally the
/// per-step field history.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<StateZ>,
    pub norms: NormTraces,
    pub u_history: Option<Vec<SpectralField>>,
    pub u_history_times: Vec<f64>,
    pub dt: f64,
    /// Largest positive per-step increment of the squared product-space norm
    /// at index 1, relative to the running value; rounding-level for
    /// dissipative runs.
    pub max_energy_uptick: f64,
    /// Value of α used for the tracked energy functional, if any.
    pub alpha: Option<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateZ {
        self.states.last().expect("trajectory stores the final state")
    }

    pub fn final_time(&self) -> f64 {
        self.final_state().t
    }

    /// Stored state closest to time t (exact match expected at snapshot times).
    pub fn state_at(&self, t: f64) -> Option<&StateZ> {
        self.states
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|z| (z.t - t).abs() < 1e-9 * (1.0 + t.abs()))
    }

    /// Field at an arbitrary time by linear interpolation of the per-step
    /// history.
    pub fn u_at(&self, t: f64) -> Result<SpectralField> {
        let times = &self.u_history_times;
        let fields = self.u_history.as_ref().ok_or(Error::MissingTrajectory)?;
        if times.is_empty() || t < times[0] - 1e-9 || t > *times.last().unwrap() + 1e-9 {
            return Err(Error::TrajectoryGap(format!("t = {t} outside stored range")));
        }
        let i = times.partition_point(|&x| x <= t).min(times.len() - 1);
        if i == 0 {
            return Ok(fields[0].clone());
        }
        let (t0, t1) = (times[i - 1], times[i]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok(fields[i - 1].scale(1.0 - w).axpy(w, &fields[i]))
    }

    /// ∫_a^b u(τ) dτ by the trapezoid rule over the stored per-step history.
    pub fn integrate_u(&self, a: f64, b: f64) -> Result<SpectralField> {
        let times = &self.u_history_times;
        let fields = self.u_history.as_ref().ok_or(Error::MissingTrajectory)?;
        if times.is_empty() || a < times[0] - 1e-9 || b > *times.last().unwrap() + 1e-9 {
            return Err(Error::TrajectoryGap(format!(
                "[{a}, {b}] outside stored range"
            )));
        }
        let modes = fields[0].modes();
        let mut acc = SpectralField::zeros(modes);
        let mut prev_t = a;
        let mut prev_f = self.u_at(a)?;
        for (i, &t) in times.iter().enumerate() {
            if t <= prev_t {
                continue;
            }
            if t >= b {
                break;
            }
            acc = acc.axpy(0.5 * (t - prev_t), &prev_f.add(&fields[i]));
            prev_t = t;
            prev_f = fields[i].clone();
        }
        let f_b = self.u_at(b)?;
        acc = acc.axpy(0.5 * (b - prev_t), &prev_f.add(&f_b));
        Ok(acc)
    }
}

/// Internal stepper: collocation grid and other per-run scratch.
struct Stepper<'c> {
    cfg: &'c EvolutionConfig,
    colloc: Option<SineGrid>,
}

impl<'c> Stepper<'c> {
    fn new(cfg: &'c EvolutionConfig) -> Self {
        let colloc = cfg
            .phi
            .as_ref()
            .filter(|p| !p.is_zero())
            .map(|_| SineGrid::dealiased(cfg.modes));
        Self { cfg, colloc }
    }

    /// One step; g is the source field at the current time level.
    fn advance(&self, z: &StateZ, g: Option<&SpectralField>) -> Result<StateZ> {
        let cfg = self.cfg;
        let dt = cfg.dt;
        let grid = &cfg.grid;

        // Explicit terms at the current level.
        let mem = z.eta.weighted_sum().apply_a_power(1.0);
        let mut rhs = z.u.axpy(-dt, &mem);
        if let Some(f) = &cfg.forcing {
            rhs = rhs.axpy(dt, f);
        }
        if let Some(g) = g {
            rhs = rhs.axpy(dt, g);
        }
        let sup_u = if let (Some(phi), Some(colloc)) = (&cfg.phi, &self.colloc) {
            let values = colloc.to_grid(&z.u);
            let sup = colloc.sup(&values);
            let phi_vals: Vec<f64> = values.iter().map(|&v| phi.phi(v)).collect();
            let phi_modes = colloc.to_modes(&phi_vals);
            let phi_field = SpectralField::new(phi_modes.coeffs()[..cfg.modes].to_vec());
            rhs = rhs.axpy(-dt, &phi_field);
            sup
        } else {
            z.u.linf_bound()
        };
        if !sup_u.is_finite() || sup_u > BLOWUP_SUP {
            return Err(Error::BlowUp {
                time: z.t,
                sup: sup_u,
            });
        }

        let u_next = resolvent_solve(&rhs, dt, 1.0);

        // Implicit upwind transport with the new field as source, swept from
        // the η(0) = 0 boundary outward.
        let upwind = grid.upwind();
        let mut values = Vec::with_capacity(grid.len());
        let zero = SpectralField::zeros(cfg.modes);
        let mut prev: &SpectralField = &zero;
        for (j, eta_j) in z.eta.values().iter().enumerate() {
            let a = dt * upwind[j];
            let mut v = eta_j.axpy(dt, &u_next);
            v = v.axpy(a, prev);
            v = v.scale(1.0 / (1.0 + a));
            values.push(v);
            prev = values.last().unwrap();
        }
        let eta_next = HistoryField::new(grid.clone(), values);

        Ok(StateZ {
            u: u_next,
            eta: eta_next,
            t: z.t + dt,
        })
    }
}

/// One IMEX step of the full system (source evaluated at the state's time).
pub fn step(z: &StateZ, cfg: &EvolutionConfig) -> Result<StateZ> {
    cfg.validate()?;
    let stepper = Stepper::new(cfg);
    let n = (z.t / cfg.dt).round() as usize;
    let g = cfg.g.at_step(n, z.t, cfg.modes)?;
    stepper.advance(z, g.as_ref())
}

/// Evolve the semigroup from z₀, storing snapshots and traces per config.
pub fn evolve(z0: StateZ, cfg: &EvolutionConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let n_steps = cfg.n_steps();
    let state_every = if cfg.store_state_every == 0 {
        (n_steps / 200).max(1)
    } else {
        cfg.store_state_every
    };
    let stepper = Stepper::new(cfg);

    let alpha = if cfg.track_lambda {
        Some(crate::diagnostics::choose_alpha(
            cfg.grid.kernel().kappa0(),
        ))
    } else {
        None
    };
    let f_for_lambda = cfg
        .forcing
        .clone()
        .unwrap_or_else(|| SpectralField::zeros(cfg.modes));

    let mut norms = NormTraces::default();
    let mut states = Vec::new();
    let mut u_history = if cfg.store_u_every > 0 {
        Some(Vec::with_capacity(n_steps / cfg.store_u_every + 2))
    } else {
        None
    };
    let mut u_history_times = Vec::new();

    let mut record = |z: &StateZ,
                      norms: &mut NormTraces,
                      u_history: &mut Option<Vec<SpectralField>>,
                      u_history_times: &mut Vec<f64>,
                      step_idx: usize|
     -> Result<()> {
        norms.times.push(z.t);
        norms.z_h0.push(z.hr_norm(0.0));
        norms.z_h1.push(z.hr_norm(1.0));
        norms.z_v.push(z.v_norm());
        norms.u_l2.push(z.u.norm(0.0));
        norms.u_h2_sq.push(z.u.norm_sq(2.0));
        if let Some(alpha) = alpha {
            let lambda = crate::diagnostics::lambda_functional(z, &f_for_lambda, alpha)?;
            norms.lambda.push(lambda);
        }
        if let Some(hist) = u_history {
            if step_idx % cfg.store_u_every == 0 || step_idx == n_steps {
                hist.push(z.u.clone());
                u_history_times.push(z.t);
            }
        }
        Ok(())
    };

    let mut z = z0;
    record(&z, &mut norms, &mut u_history, &mut u_history_times, 0)?;
    states.push(z.clone());

    let mut max_uptick = 0.0_f64;
    let mut prev_h1_sq = z.hr_norm_sq(1.0);

    for n in 0..n_steps {
        let g = cfg.g.at_step(n, z.t, cfg.modes)?;
        z = stepper.advance(&z, g.as_ref())?;
        if !z.is_finite() {
            return Err(Error::BlowUp {
                time: z.t,
                sup: f64::INFINITY,
            });
        }

        let h1_sq = z.hr_norm_sq(1.0);
        if cfg.phi.is_none() && cfg.forcing.is_none() && cfg.g.is_none() {
            let uptick = (h1_sq - prev_h1_sq) / prev_h1_sq.max(1e-300);
            max_uptick = max_uptick.max(uptick);
        }
        prev_h1_sq = h1_sq;

        record(&z, &mut norms, &mut u_history, &mut u_history_times, n + 1)?;
        if (n + 1) % state_every == 0 || n + 1 == n_steps {
            states.push(z.clone());
        }
    }

    Ok(Trajectory {
        states,
        norms,
        u_history,
        u_history_times,
        dt: cfg.dt,
        max_energy_uptick: max_uptick,
        alpha,
    })
}

/// Evolve the linear homogeneous semigroup; rejects configs carrying a
/// nonlinearity, forcing or source.
pub fn evolve_linear(z0: StateZ, cfg: &EvolutionConfig) -> Result<Trajectory> {
    if cfg.phi.is_some() || cfg.forcing.is_some() || !cfg.g.is_none() {
        return Err(Error::InvalidConfig(
            "the homogeneous flow takes neither φ, f nor g".into(),
        ));
    }
    evolve(z0, cfg)
}

/// Evolve the forced auxiliary problem (no nonlinearity; f and g allowed).
pub fn evolve_forced(z0: StateZ, cfg: &EvolutionConfig) -> Result<Trajectory> {
    if cfg.phi.is_some() {
        return Err(Error::InvalidConfig(
            "the auxiliary problem carries sources, not a nonlinearity".into(),
        ));
    }
    evolve(z0, cfg)
}

/// Evolve two initial states in lockstep and record ‖S(t)z₁ − S(t)z₂‖_V per
/// step without storing either trajectory.
pub fn evolve_pair_separation(
    z1: &StateZ,
    z2: &StateZ,
    cfg: &EvolutionConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let stepper = Stepper::new(cfg);
    let n_steps = cfg.n_steps();
    let mut a = z1.clone();
    let mut b = z2.clone();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut sep = Vec::with_capacity(n_steps + 1);
    times.push(a.t);
    sep.push(a.sub(&b).v_norm());
    for n in 0..n_steps {
        let g = cfg.g.at_step(n, a.t, cfg.modes)?;
        a = stepper.advance(&a, g.as_ref())?;
        b = stepper.advance(&b, g.as_ref())?;
        times.push(a.t);
        sep.push(a.sub(&b).v_norm());
    }
    Ok((times, sep))
}

/// Per-step source built from a stored trajectory, g_n = map(u(t_n)).
pub fn source_from_trajectory<F>(traj: &Trajectory, n_steps: usize, map: F) -> Result<SourceG>
where
    F: Fn(&SpectralField) -> SpectralField,
{
    let fields = traj.u_history.as_ref().ok_or(Error::MissingTrajectory)?;
    if fields.len() < n_steps {
        return Err(Error::SourceNotCovering(n_steps as f64 * traj.dt));
    }
    Ok(SourceG::PerStep(
        fields.iter().take(n_steps).map(map).collect(),
    ))
}

/// Residual of the representation formula at time t: the largest deviation
/// over nodes s_j ≤ t of η^t(s_j) from ∫₀^{s_j} u(t−y) dy, in the H² norm and
/// relative to ‖η^t‖_{M²}.
pub fn rep_residual(traj: &Trajectory, t: f64) -> Result<f64> {
    let z = traj
        .state_at(t)
        .ok_or_else(|| Error::TrajectoryGap(format!("no stored state at t = {t}")))?;
    if traj.u_history.is_none() {
        return Err(Error::MissingTrajectory);
    }
    let eta_norm = z.eta.norm(2.0).max(1e-300);
    let mut worst = 0.0_f64;
    for (&s, eta_s) in z.eta.grid().nodes().iter().zip(z.eta.values()) {
        if s > t {
            break;
        }
        // ∫₀^s u(t−y) dy = ∫_{t−s}^t u(τ) dτ.
        let expected = traj.integrate_u(t - s, t)?;
        worst = worst.max(eta_s.sub(&expected).norm(2.0));
    }
    Ok(worst / eta_norm)
}

/// Exact 2×2 reduction of one linear mode for exponential kernels: with
/// m = ∫ μ η_k ds, the pair (u_k, m) obeys u̇ = −λ_k(u + m), ṁ = κ₀u − δm.
#[derive(Debug, Clone, Copy)]
pub struct SingleModeSystem {
    pub matrix: [[f64; 2]; 2],
    pub mode: usize,
    pub delta: f64,
    pub kappa0: f64,
}

/// Build the single-mode reference system; exact only for the exponential
/// family, anything else is rejected.
pub fn reduce_single_mode(mode: usize, grid: &HistoryGrid) -> Result<SingleModeSystem> {
    let kernel = grid.kernel();
    let delta = match kernel.family() {
        KernelFamily::Exponential { delta } => *delta,
        _ => return Err(Error::NotExponential),
    };
    let lam = lambda_k(mode);
    let kappa0 = kernel.kappa0();
    Ok(SingleModeSystem {
        matrix: [[-lam, -lam], [kappa0, -delta]],
        mode,
        delta,
        kappa0,
    })
}

impl SingleModeSystem {
    /// Eigenvalues of the reduction matrix (real parts, imaginary parts).
    pub fn eigenvalues(&self) -> ((f64, f64), (f64, f64)) {
        let m = &self.matrix;
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let root = disc.sqrt();
            ((tr / 2.0 + root, 0.0), (tr / 2.0 - root, 0.0))
        } else {
            let omega = (-disc).sqrt();
            ((tr / 2.0, omega), (tr / 2.0, -omega))
        }
    }

    /// exp(t M) in closed form via the Cayley–Hamilton split M = aI + B,
    /// B² = (a² − det M) I.
    pub fn expm(&self, t: f64) -> [[f64; 2]; 2] {
        let m = &self.matrix;
        let a = (m[0][0] + m[1][1]) / 2.0;
        let b = [[m[0][0] - a, m[0][1]], [m[1][0], m[1][1] - a]];
        let d = b[0][0] * b[0][0] + b[0][1] * b[1][0];
        let ea = (a * t).exp();
        let (c0, c1) = if d < -1e-300 {
            let w = (-d).sqrt();
            ((w * t).cos(), (w * t).sin() / w)
        } else if d > 1e-300 {
            let w = d.sqrt();
            ((w * t).cosh(), (w * t).sinh() / w)
        } else {
            (1.0, t)
        };
        [
            [ea * (c0 + c1 * b[0][0]), ea * c1 * b[0][1]],
            [ea * c1 * b[1][0], ea * (c0 + c1 * b[1][1])],
        ]
    }

    /// Apply exp(t M) to an initial pair (u, m).
    pub fn propagate(&self, state: (f64, f64), t: f64) -> (f64, f64) {
        let e = self.expm(t);
        (
            e[0][0] * state.0 + e[0][1] * state.1,
            e[1][0] * state.0 + e[1][1] * state.1,
        )
    }
}

/// Project a state onto the single-mode pair (u_k, Σ w_j η_{j,k}).
pub fn single_mode_pair(z: &StateZ, mode: usize) -> (f64, f64) {
    let u = z.u.coeffs()[mode - 1];
    let m = z.eta.weighted_sum().coeffs()[mode - 1];
    (u, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_kernel, KernelFamily, QuadratureSpec, SampleGrid};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(delta: f64, count: usize) -> Arc<HistoryGrid> {
        let kernel =
            make_kernel(KernelFamily::Exponential { delta }, SampleGrid::default()).unwrap();
        HistoryGrid::new(kernel, &QuadratureSpec::geometric(count)).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, g: &Arc<HistoryGrid>, modes: usize) -> StateZ {
        let u = SpectralField::new(
            (0..modes)
                .map(|k| rng.gen_range(-1.0..1.0) / ((k + 1) as f64).powi(3))
                .collect(),
        );
        let values = (0..g.len())
            .map(|_| {
                SpectralField::new(
                    (0..modes)
                        .map(|k| rng.gen_range(-1.0..1.0) / ((k + 1) as f64).powi(3))
                        .collect(),
                )
            })
            .collect();
        StateZ::new(u, HistoryField::new(g.clone(), values), 0.0)
    }

    #[test]
    fn zf_closed_form_and_residual() {
        let g = grid(1.0, 64);
        let f = SpectralField::single_mode(1, 1.0, 8);
        let zf = make_zf(&f, g.clone());
        assert_abs_diff_eq!(zf.u.coeffs()[0], 0.5, epsilon = 1e-15);
        for (&s, v) in g.nodes().iter().zip(zf.eta.values()) {
            assert_abs_diff_eq!(v.coeffs()[0], 0.5 * s, epsilon = 1e-12);
        }
        let (rf, rh) = zf_residual(&zf, &f).unwrap();
        assert!(rf < 1e-6, "field residual {rf}");
        assert!(rh < 1e-6, "history residual {rh}");
    }

    #[test]
    fn zf_of_zero_forcing_is_zero() {
        let g = grid(1.0, 32);
        let zf = make_zf(&SpectralField::zeros(4), g);
        assert_abs_diff_eq!(zf.hr_norm(1.0), 0.0);
    }

    #[test]
    fn zf_second_mode_scaling() {
        let g = grid(1.0, 32);
        let f = SpectralField::single_mode(2, 1.0, 4);
        let zf = make_zf(&f, g);
        // ½ λ₂⁻¹ = 1/8.
        assert_abs_diff_eq!(zf.u.coeffs()[1], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let g = grid(1.0, 32);
        let cfg = EvolutionConfig::new(g.clone(), 4, 1e-2, 0.1);
        let z = StateZ::zeros(g, 4);
        let traj = evolve(z, &cfg).unwrap();
        assert_abs_diff_eq!(traj.final_state().hr_norm(1.0), 0.0);
    }

    #[test]
    fn stationary_state_is_a_fixed_point_per_step() {
        let g = grid(1.0, 64);
        let f = SpectralField::single_mode(1, 1.0, 8);
        let zf = make_zf(&f, g.clone());
        let cfg = EvolutionConfig::new(g, 8, 1e-2, 1.0).with_forcing(f);
        let z1 = step(&zf, &cfg).unwrap();
        let drift = z1.sub(&zf).v_norm();
        assert!(drift < 1e-8, "per-step drift {drift}");
    }

    #[test]
    fn linear_flow_is_linear_to_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = grid(1.0, 48);
        let cfg = EvolutionConfig::new(g.clone(), 8, 1e-2, 0.5);
        let z1 = random_state(&mut rng, &g, 8);
        let z2 = random_state(&mut rng, &g, 8);
        let (a, b) = (0.7, -1.3);

        let t1 = evolve_linear(z1.clone(), &cfg).unwrap();
        let t2 = evolve_linear(z2.clone(), &cfg).unwrap();
        let combo = evolve_linear(z1.scale(a).add(&z2.scale(b)), &cfg).unwrap();

        let direct = combo.final_state();
        let superposed = t1.final_state().scale(a).add(&t2.final_state().scale(b));
        let err = direct.sub(&superposed).v_norm();
        assert!(err < 1e-12, "superposition defect {err}");
    }

    #[test]
    fn linear_h1_energy_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = grid(1.0, 48);
        let cfg = EvolutionConfig::new(g.clone(), 8, 1e-2, 2.0);
        for _ in 0..5 {
            let z = random_state(&mut rng, &g, 8);
            let traj = evolve_linear(z, &cfg).unwrap();
            assert!(
                traj.max_energy_uptick < 1e-12,
                "energy rose by {}",
                traj.max_energy_uptick
            );
            for w in traj.norms.z_h1.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn semigroup_composition_matches_direct_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = grid(1.0, 32);
        let phi = NonlinearitySpec::quintic_critical();
        let z = random_state(&mut rng, &g, 8);

        let cfg1 = EvolutionConfig::new(g.clone(), 8, 1e-2, 1.0).with_phi(phi.clone());
        let half = evolve(z.clone(), &cfg1).unwrap();
        let mut mid = half.final_state().clone();
        mid.t = 0.0;
        let second = evolve(mid, &cfg1).unwrap();

        let cfg2 = EvolutionConfig::new(g, 8, 1e-2, 2.0).with_phi(phi);
        let direct = evolve(z, &cfg2).unwrap();

        let err = direct.final_state().sub(second.final_state()).v_norm();
        let scale = direct.final_state().v_norm().max(1.0);
        assert!(err / scale < 1e-10, "composition defect {err}");
    }

    #[test]
    fn forced_run_with_zero_g_matches_linear_shifted_by_zf() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = grid(1.0, 48);
        let f = SpectralField::single_mode(1, 1.0, 8);
        let zf = make_zf(&f, g.clone());
        let z0 = random_state(&mut rng, &g, 8);

        let forced_cfg =
            EvolutionConfig::new(g.clone(), 8, 1e-2, 1.0).with_forcing(f.clone());
        let forced = evolve_forced(z0.clone(), &forced_cfg).unwrap();

        let lin_cfg = EvolutionConfig::new(g, 8, 1e-2, 1.0);
        let lin = evolve_linear(z0.sub(&zf), &lin_cfg).unwrap();

        let rebuilt = lin.final_state().add(&zf);
        let err = forced.final_state().sub(&rebuilt).v_norm();
        assert!(err < 1e-9, "shift defect {err}");
    }

    #[test]
    fn stationary_forced_run_is_constant() {
        let g = grid(1.0, 64);
        let f = SpectralField::single_mode(1, 1.0, 8);
        let zf = make_zf(&f, g.clone());
        let cfg = EvolutionConfig::new(g, 8, 1e-2, 5.0).with_forcing(f);
        let traj = evolve_forced(zf.clone(), &cfg).unwrap();
        let drift = traj.final_state().sub(&zf).v_norm();
        assert!(drift < 1e-9, "stationary drift {drift}");
    }

    #[test]
    fn blow_up_is_detected_with_time_stamp() {
        let g = grid(1.0, 8);
        // Anti-dissipative cubic grows until the detector trips; admissibility
        // is relaxed through max_dt abuse, so bypass validate via direct cfg.
        let phi = NonlinearitySpec::new(&[0.0, 0.0, 0.0, -1.0]).unwrap();
        let mut cfg = EvolutionConfig::new(g.clone(), 4, 1e-2, 50.0);
        cfg.phi = Some(phi);
        let z = StateZ::new(
            SpectralField::single_mode(1, 30.0, 4),
            HistoryField::zeros(g, 4),
            0.0,
        );
        // Skip validate() (which would reject the inadmissible φ) and drive
        // the stepper directly to observe the detector.
        let stepper = Stepper::new(&cfg);
        let mut state = z;
        let mut tripped = None;
        for _ in 0..5000 {
            match stepper.advance(&state, None) {
                Ok(next) => state = next,
                Err(Error::BlowUp { time, sup }) => {
                    tripped = Some((time, sup));
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        let (time, sup) = tripped.expect("detector must trip");
        assert!(sup > BLOWUP_SUP);
        assert!(time >= 0.0);
    }

    #[test]
    fn inadmissible_phi_is_rejected_by_validate() {
        let g = grid(1.0, 8);
        let phi = NonlinearitySpec::new(&[0.0, -2.0]).unwrap();
        let cfg = EvolutionConfig::new(g, 4, 1e-2, 1.0).with_phi(phi);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn single_mode_reduction_closed_forms() {
        let g = grid(1.0, 32);
        let sys = reduce_single_mode(1, &g).unwrap();
        assert_eq!(sys.matrix, [[-1.0, -1.0], [1.0, -1.0]]);
        let ((re1, im1), _) = sys.eigenvalues();
        assert_abs_diff_eq!(re1, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(im1.abs(), 1.0, epsilon = 1e-12);

        let sys2 = reduce_single_mode(2, &g).unwrap();
        assert_eq!(sys2.matrix, [[-4.0, -4.0], [1.0, -1.0]]);
        // Routh: trace < 0, det > 0.
        assert!(sys2.matrix[0][0] + sys2.matrix[1][1] < 0.0);
        assert!(sys2.matrix[0][0] * sys2.matrix[1][1] - sys2.matrix[0][1] * sys2.matrix[1][0] > 0.0);

        // Zero initial data stays zero.
        let out = sys.propagate((0.0, 0.0), 3.0);
        assert_eq!(out, (0.0, 0.0));
    }

    #[test]
    fn reduction_rejects_non_exponential_kernels() {
        let kernel = make_kernel(
            KernelFamily::CompactLinear { support: 1.0 },
            SampleGrid::default(),
        )
        .unwrap();
        let g = HistoryGrid::new(kernel, &QuadratureSpec::uniform(16)).unwrap();
        assert!(matches!(
            reduce_single_mode(1, &g),
            Err(Error::NotExponential)
        ));
    }

    #[test]
    fn expm_matches_rotation_decay_closed_form() {
        let g = grid(1.0, 16);
        let sys = reduce_single_mode(1, &g).unwrap();
        // M = −I + [[0,−1],[1,0]]: exp(tM) = e^{−t} (cos t I + sin t J).
        for &t in &[0.1, 0.5, 2.0] {
            let e = sys.expm(t);
            let (c, s) = (t.cos(), t.sin());
            let decay = (-t).exp();
            assert_relative_eq!(e[0][0], decay * c, epsilon = 1e-12);
            assert_relative_eq!(e[0][1], -decay * s, epsilon = 1e-12);
            assert_relative_eq!(e[1][0], decay * s, epsilon = 1e-12);
            assert_relative_eq!(e[1][1], decay * c, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_mode_evolution_tracks_reduced_oracle() {
        // Uniform s-cells refined with Δt keep the memory closure error below
        // the first-order time error; the oracle is the exact exponential.
        let kernel =
            make_kernel(KernelFamily::Exponential { delta: 1.0 }, SampleGrid::default()).unwrap();
        let run = |dt: f64| -> f64 {
            let count = (40.0 / dt).round() as usize;
            let g = HistoryGrid::new(kernel.clone(), &QuadratureSpec::uniform(count)).unwrap();
            let sys = reduce_single_mode(1, &g).unwrap();
            let cfg = EvolutionConfig::new(g.clone(), 1, dt, 5.0);
            let z0 = StateZ::new(
                SpectralField::single_mode(1, 1.0, 1),
                HistoryField::zeros(g, 1),
                0.0,
            );
            let traj = evolve_linear(z0, &cfg).unwrap();
            let (u, m) = single_mode_pair(traj.final_state(), 1);
            let (ue, me) = sys.propagate((1.0, 0.0), 5.0);
            (((u - ue).powi(2) + (m - me).powi(2)) / 1.0).sqrt()
        };
        let e1 = run(1e-2);
        let e2 = run(5e-3);
        assert!(e1 < 1e-3, "error at Δt = 1e-2: {e1}");
        assert!(e1 / e2 >= 1.8, "refinement ratio {}", e1 / e2);
    }
}
