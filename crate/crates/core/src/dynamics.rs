//! Training-data generation: overdamped Langevin trajectories via
//! Euler–Maruyama, time-lagged snapshot pairs, the Bickley-jet flow, and
//! sample grids for operators that act on plain point clouds.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{CoreError, Result};

/// Paired (or unpaired) snapshot data. Columns of `x` are states at time `t`;
/// when present, column `j` of `y` is the state `lag_time` later.
#[derive(Debug, Clone)]
pub struct SnapshotDataset {
    pub x: Array2<f64>,
    pub y: Option<Array2<f64>>,
    pub lag_time: Option<f64>,
    pub source: SourceInfo,
}

/// Provenance of a dataset, carried into sidecar metadata files.
#[derive(Debug, Clone, Default)]
pub struct SourceInfo {
    pub system: String,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
}

impl SnapshotDataset {
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn has_pairs(&self) -> bool {
        self.y.is_some()
    }
}

/// Built-in potential landscapes.
#[derive(Debug, Clone, Copy, PartialEq)]
enum PotentialKind {
    /// `V(x) = α/2 ‖x‖²`
    Ou { alpha: f64 },
    /// `V(x,y) = cos(n·atan2(y,x)) + 10(√(x²+y²) − 1)²`
    LemonSlice { wells: u32 },
    /// Three Gaussian wells plus a quartic confinement.
    TripleWell,
    /// `V(x) = ω²x²/2`, used by the Schrödinger branch.
    Qho { omega: f64 },
}

/// A potential with analytic gradient driving `dX = -∇V dt + √(2β⁻¹) dW`.
#[derive(Debug, Clone)]
pub struct PotentialSystem {
    name: String,
    dim: usize,
    /// Inverse temperature. `f64::INFINITY` disables the noise.
    pub beta: f64,
    kind: PotentialKind,
}

impl PotentialSystem {
    pub fn ou(alpha: f64, beta: f64) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(CoreError::InvalidDomain(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self {
            name: "ou".into(),
            dim: 1,
            beta,
            kind: PotentialKind::Ou { alpha },
        })
    }

    pub fn lemon_slice(wells: u32, beta: f64) -> Result<Self> {
        if wells < 2 {
            return Err(CoreError::InvalidDomain(format!("wells must be >= 2, got {wells}")));
        }
        Ok(Self {
            name: "lemon_slice".into(),
            dim: 2,
            beta,
            kind: PotentialKind::LemonSlice { wells },
        })
    }

    pub fn triple_well(beta: f64) -> Self {
        Self {
            name: "triple_well".into(),
            dim: 2,
            beta,
            kind: PotentialKind::TripleWell,
        }
    }

    pub fn qho(omega: f64) -> Result<Self> {
        if omega <= 0.0 {
            return Err(CoreError::InvalidDomain(format!("omega must be > 0, got {omega}")));
        }
        Ok(Self {
            name: "qho".into(),
            dim: 1,
            beta: 1.0,
            kind: PotentialKind::Qho { omega },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        match self.kind {
            PotentialKind::Ou { alpha } => 0.5 * alpha * x.iter().map(|v| v * v).sum::<f64>(),
            PotentialKind::Qho { omega } => {
                0.5 * omega * omega * x.iter().map(|v| v * v).sum::<f64>()
            }
            PotentialKind::LemonSlice { wells } => {
                let (px, py) = (x[0], x[1]);
                let r = (px * px + py * py).sqrt();
                (wells as f64 * py.atan2(px)).cos() + 10.0 * (r - 1.0) * (r - 1.0)
            }
            PotentialKind::TripleWell => {
                let (px, py) = (x[0], x[1]);
                3.0 * (-px * px - (py - 1.0 / 3.0).powi(2)).exp()
                    - 3.0 * (-px * px - (py - 5.0 / 3.0).powi(2)).exp()
                    - 5.0 * (-(px - 1.0).powi(2) - py * py).exp()
                    - 5.0 * (-(px + 1.0).powi(2) - py * py).exp()
                    + 0.2 * px.powi(4)
                    + 0.2 * (py - 1.0 / 3.0).powi(4)
            }
        }
    }

    pub fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self.kind {
            PotentialKind::Ou { alpha } => x.mapv(|v| alpha * v),
            PotentialKind::Qho { omega } => x.mapv(|v| omega * omega * v),
            PotentialKind::LemonSlice { wells } => {
                let n = wells as f64;
                let (px, py) = (x[0], x[1]);
                let r2 = px * px + py * py;
                let r = r2.sqrt();
                let theta = py.atan2(px);
                let s = (n * theta).sin();
                // d/dx atan2(y,x) = -y/r², d/dy = x/r²
                let radial = 20.0 * (r - 1.0) / r;
                Array1::from(vec![
                    n * s * py / r2 + radial * px,
                    -n * s * px / r2 + radial * py,
                ])
            }
            PotentialKind::TripleWell => {
                let (px, py) = (x[0], x[1]);
                let e1 = (-px * px - (py - 1.0 / 3.0).powi(2)).exp();
                let e2 = (-px * px - (py - 5.0 / 3.0).powi(2)).exp();
                let e3 = (-(px - 1.0).powi(2) - py * py).exp();
                let e4 = (-(px + 1.0).powi(2) - py * py).exp();
                let gx = 3.0 * e1 * (-2.0 * px) - 3.0 * e2 * (-2.0 * px)
                    - 5.0 * e3 * (-2.0 * (px - 1.0))
                    - 5.0 * e4 * (-2.0 * (px + 1.0))
                    + 0.8 * px.powi(3);
                let gy = 3.0 * e1 * (-2.0 * (py - 1.0 / 3.0)) - 3.0 * e2 * (-2.0 * (py - 5.0 / 3.0))
                    - 5.0 * e3 * (-2.0 * py)
                    - 5.0 * e4 * (-2.0 * py)
                    + 0.8 * (py - 1.0 / 3.0).powi(3);
                Array1::from(vec![gx, gy])
            }
        }
    }

    /// A sensible starting state inside a well.
    pub fn default_initial_state(&self) -> Array1<f64> {
        match self.kind {
            PotentialKind::Ou { .. } | PotentialKind::Qho { .. } => Array1::from(vec![0.0]),
            PotentialKind::LemonSlice { wells } => {
                let theta = std::f64::consts::PI / wells as f64;
                Array1::from(vec![theta.cos(), theta.sin()])
            }
            PotentialKind::TripleWell => Array1::from(vec![1.0, 0.0]),
        }
    }
}

/// Optional parameters for [`builtin_potential`]. Unset fields fall back to
/// per-system defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemParams {
    pub alpha: Option<f64>,
    pub wells: Option<u32>,
    pub beta: Option<f64>,
}

/// Constructs one of the built-in benchmark potentials by name.
pub fn builtin_potential(name: &str, params: SystemParams) -> Result<PotentialSystem> {
    match name {
        "ou" => PotentialSystem::ou(params.alpha.unwrap_or(1.0), params.beta.unwrap_or(4.0)),
        "lemon_slice" => {
            PotentialSystem::lemon_slice(params.wells.unwrap_or(5), params.beta.unwrap_or(2.0))
        }
        "triple_well" => Ok(PotentialSystem::triple_well(params.beta.unwrap_or(2.0))),
        other => Err(CoreError::UnknownSystem(other.to_string())),
    }
}

/// A simulated path: `states` is `d×(steps+1)` with the initial state in
/// column 0.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Array2<f64>,
    pub step_size: f64,
}

fn simulate_single(
    system: &PotentialSystem,
    x0: ArrayView1<f64>,
    steps: usize,
    h: f64,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    let d = system.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let noise = if system.beta.is_finite() {
        (2.0 * h / system.beta).sqrt()
    } else {
        0.0
    };
    let mut states = Array2::zeros((d, steps + 1));
    states.column_mut(0).assign(&x0);
    let mut current = x0.to_owned();
    for k in 0..steps {
        let grad = system.gradient(current.view());
        for i in 0..d {
            let dw: f64 = if noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            current[i] += -h * grad[i] + noise * dw;
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::TrajectoryDiverged { step: k + 1 });
        }
        states.column_mut(k + 1).assign(&current);
    }
    Ok(Trajectory { states, step_size: h })
}

/// Integrates `dX = -∇V(X) dt + √(2β⁻¹) dW` with the Euler–Maruyama scheme
/// `X_{k+1} = X_k − h ∇V(X_k) + √(2β⁻¹) ΔW_k`, `ΔW_k ~ N(0, h)` i.i.d. per
/// coordinate.
///
/// `x0` holds one initial state per column; each column integrates on its own
/// RNG stream so parallel and serial runs agree.
pub fn euler_maruyama(
    system: &PotentialSystem,
    x0: &ArrayView2<f64>,
    steps: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if h <= 0.0 {
        return Err(CoreError::InvalidDomain(format!("step size must be > 0, got {h}")));
    }
    if x0.nrows() != system.dim() {
        return Err(CoreError::InvalidShape(format!(
            "initial states have dimension {}, system is {}-dimensional",
            x0.nrows(),
            system.dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidShape("initial states must be finite".into()));
    }
    (0..x0.ncols())
        .into_par_iter()
        .map(|j| simulate_single(system, x0.column(j), steps, h, seed, j as u64))
        .collect()
}

/// Extracts time-lagged pairs from a trajectory: `X` takes states at indices
/// `0, stride, 2·stride, …` and `Y` the states `lag_steps` later, for as long
/// as both indices exist.
pub fn lagged_pairs(traj: &Trajectory, lag_steps: usize, stride: usize) -> Result<SnapshotDataset> {
    if lag_steps == 0 {
        return Err(CoreError::InvalidDomain("lag_steps must be >= 1".into()));
    }
    if stride == 0 {
        return Err(CoreError::InvalidDomain("stride must be >= 1".into()));
    }
    let n_states = traj.states.ncols();
    if n_states <= lag_steps {
        return Err(CoreError::InsufficientData(format!(
            "trajectory with {n_states} states cannot produce pairs at lag {lag_steps}"
        )));
    }
    let m = (n_states - 1 - lag_steps) / stride + 1;
    let d = traj.states.nrows();
    let mut x = Array2::zeros((d, m));
    let mut y = Array2::zeros((d, m));
    for p in 0..m {
        let i = p * stride;
        x.column_mut(p).assign(&traj.states.column(i));
        y.column_mut(p).assign(&traj.states.column(i + lag_steps));
    }
    Ok(SnapshotDataset {
        x,
        y: Some(y),
        lag_time: Some(lag_steps as f64 * traj.step_size),
        source: SourceInfo {
            system: "trajectory".into(),
            params: vec![
                ("lag_steps".into(), lag_steps as f64),
                ("stride".into(), stride as f64),
                ("step_size".into(), traj.step_size),
            ],
            seed: 0,
        },
    })
}

/// Settings for [`generate_potential_dataset`].
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryPlan {
    pub pairs: usize,
    pub lag_steps: usize,
    pub stride: usize,
    pub step_size: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for TrajectoryPlan {
    fn default() -> Self {
        // Non-overlapping pairs (stride = lag) so the trajectory covers
        // enough decorrelation times for stable covariance estimates.
        Self {
            pairs: 20000,
            lag_steps: 100,
            stride: 100,
            step_size: 0.005,
            burn_in: 1000,
            seed: 0,
        }
    }
}

/// Simulates one long trajectory (with burn-in discarded) and slices it into
/// lagged snapshot pairs. This is the standard way the benchmark datasets are
/// produced.
pub fn generate_potential_dataset(
    system: &PotentialSystem,
    plan: TrajectoryPlan,
) -> Result<SnapshotDataset> {
    if plan.pairs == 0 {
        return Err(CoreError::InsufficientData("at least one pair is required".into()));
    }
    let steps = plan.burn_in + (plan.pairs - 1) * plan.stride + plan.lag_steps;
    let x0 = system.default_initial_state();
    let x0m = x0.view().insert_axis(ndarray::Axis(1)).to_owned();
    let traj = euler_maruyama(system, &x0m.view(), steps, plan.step_size, plan.seed)?
        .pop()
        .expect("one trajectory per initial state");
    let kept = traj
        .states
        .slice(ndarray::s![.., plan.burn_in..])
        .to_owned();
    let mut data = lagged_pairs(
        &Trajectory {
            states: kept,
            step_size: plan.step_size,
        },
        plan.lag_steps,
        plan.stride,
    )?;
    let mut params = vec![
        ("beta".into(), system.beta),
        ("step_size".into(), plan.step_size),
        ("lag_steps".into(), plan.lag_steps as f64),
        ("stride".into(), plan.stride as f64),
        ("burn_in".into(), plan.burn_in as f64),
    ];
    if let PotentialKind::Ou { alpha } = system.kind {
        params.push(("alpha".into(), alpha));
    }
    if let PotentialKind::LemonSlice { wells } = system.kind {
        params.push(("wells".into(), wells as f64));
    }
    data.source = SourceInfo {
        system: system.name.clone(),
        params,
        seed: plan.seed,
    };
    Ok(data)
}

/// Bickley-jet stream-function flow in the frame co-moving with the third
/// Rossby wave.
///
/// Constants follow the usual idealized-stratospheric-flow parameterization
/// (velocities in 10⁶ m/day, lengths in 10⁶ m). The wavenumbers are pinned to
/// `kₙ = 2πn/Lx` so the field is exactly periodic over the working domain
/// width `Lx = 20`, which keeps the x-wrapping seamless.
#[derive(Debug, Clone)]
pub struct BickleyJet {
    pub u0: f64,
    pub length_scale: f64,
    pub amplitudes: [f64; 3],
    pub phase_speeds: [f64; 3],
    pub wavenumbers: [f64; 3],
    pub frequencies: [f64; 3],
    /// Working domain; x-periodic with period `domain[0].1 - domain[0].0`.
    pub domain: [(f64, f64); 2],
    pub periodic: [bool; 2],
}

impl Default for BickleyJet {
    fn default() -> Self {
        let u0 = 5.4138;
        let length_scale = 1.77;
        let period = 20.0;
        let c = [0.1446 * u0, 0.205 * u0, 0.461 * u0];
        let k = [
            2.0 * std::f64::consts::PI / period,
            4.0 * std::f64::consts::PI / period,
            6.0 * std::f64::consts::PI / period,
        ];
        // Co-moving frame of wave 3: its frequency vanishes, the others are
        // Doppler-shifted.
        let frequencies = [k[0] * (c[0] - c[2]), k[1] * (c[1] - c[2]), 0.0];
        Self {
            u0,
            length_scale,
            amplitudes: [0.0075, 0.15, 0.3],
            phase_speeds: c,
            wavenumbers: k,
            frequencies,
            domain: [(0.0, period), (-4.0, 4.0)],
            periodic: [true, false],
        }
    }
}

impl BickleyJet {
    pub fn name(&self) -> &'static str {
        "bickley"
    }

    pub fn period_x(&self) -> f64 {
        self.domain[0].1 - self.domain[0].0
    }

    /// Stream function Φ(x, y, t).
    pub fn stream_function(&self, x: f64, y: f64, t: f64) -> f64 {
        let l = self.length_scale;
        let c3 = self.phase_speeds[2];
        let sech = 1.0 / (y / l).cosh();
        let sech2 = sech * sech;
        let mut phi = c3 * y - self.u0 * l * (y / l).tanh();
        for i in 0..3 {
            phi += self.amplitudes[i]
                * self.u0
                * l
                * sech2
                * (self.wavenumbers[i] * x - self.frequencies[i] * t).cos();
        }
        phi
    }

    /// Velocity `(ẋ, ẏ) = (−∂Φ/∂y, ∂Φ/∂x)`.
    pub fn velocity(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let l = self.length_scale;
        let c3 = self.phase_speeds[2];
        let th = (y / l).tanh();
        let sech2 = 1.0 - th * th;
        let mut wave = 0.0;
        let mut wave_dx = 0.0;
        for i in 0..3 {
            let phase = self.wavenumbers[i] * x - self.frequencies[i] * t;
            wave += self.amplitudes[i] * phase.cos();
            wave_dx -= self.amplitudes[i] * self.wavenumbers[i] * phase.sin();
        }
        let u = -c3 + self.u0 * sech2 + 2.0 * self.u0 * sech2 * th * wave;
        let v = self.u0 * l * sech2 * wave_dx;
        (u, v)
    }

    fn wrap_x(&self, x: f64) -> f64 {
        let (lo, _) = self.domain[0];
        let p = self.period_x();
        let mut w = (x - lo).rem_euclid(p) + lo;
        if w >= lo + p {
            w = lo;
        }
        w
    }
}

fn rk4_step(jet: &BickleyJet, x: f64, y: f64, t: f64, h: f64) -> (f64, f64) {
    let (k1x, k1y) = jet.velocity(x, y, t);
    let (k2x, k2y) = jet.velocity(x + 0.5 * h * k1x, y + 0.5 * h * k1y, t + 0.5 * h);
    let (k3x, k3y) = jet.velocity(x + 0.5 * h * k2x, y + 0.5 * h * k2y, t + 0.5 * h);
    let (k4x, k4y) = jet.velocity(x + h * k3x, y + h * k3y, t + h);
    (
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
    )
}

/// Integrates `m` uniformly sampled particles of the Bickley jet from `t0` to
/// `t1` with classical RK4, wrapping x periodically onto the domain. Returns
/// the initial positions as `X` and the final positions as `Y`.
pub fn bickley_trajectories(
    m: usize,
    t0: f64,
    t1: f64,
    integrator_step: f64,
    seed: u64,
) -> Result<SnapshotDataset> {
    if m == 0 {
        return Err(CoreError::InsufficientData("need at least one particle".into()));
    }
    if t1 < t0 {
        return Err(CoreError::InvalidDomain(format!("t1 = {t1} must be >= t0 = {t0}")));
    }
    if integrator_step <= 0.0 {
        return Err(CoreError::InvalidDomain("integrator step must be > 0".into()));
    }
    let jet = BickleyJet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((2, m));
    for j in 0..m {
        x[[0, j]] = rng.random_range(jet.domain[0].0..jet.domain[0].1);
        x[[1, j]] = rng.random_range(jet.domain[1].0..jet.domain[1].1);
    }

    let total = t1 - t0;
    let n_steps = if total == 0.0 {
        0
    } else {
        (total / integrator_step).ceil() as usize
    };

    let columns: Vec<Result<(f64, f64)>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let (mut px, mut py) = (x[[0, j]], x[[1, j]]);
            let mut t = t0;
            for s in 0..n_steps {
                let h = integrator_step.min(t1 - t);
                if h <= 0.0 {
                    break;
                }
                let (nx, ny) = rk4_step(&jet, px, py, t, h);
                if !nx.is_finite() || !ny.is_finite() {
                    return Err(CoreError::TrajectoryDiverged { step: s + 1 });
                }
                px = jet.wrap_x(nx);
                py = ny;
                t += h;
            }
            Ok((px, py))
        })
        .collect();

    let mut y = Array2::zeros((2, m));
    for (j, col) in columns.into_iter().enumerate() {
        let (px, py) = col?;
        y[[0, j]] = px;
        y[[1, j]] = py;
    }
    Ok(SnapshotDataset {
        x,
        y: Some(y),
        lag_time: Some(total),
        source: SourceInfo {
            system: "bickley".into(),
            params: vec![
                ("t0".into(), t0),
                ("t1".into(), t1),
                ("integrator_step".into(), integrator_step),
            ],
            seed,
        },
    })
}

/// Sampling scheme for [`sample_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    UniformRandom,
    RegularGrid,
}

/// Draws `m` points from an axis-aligned box, either uniformly at random or
/// as a regular grid (per-axis count `⌈m^(1/d)⌉`-ish so the total is close to
/// `m`; exact for one dimension). Returns an X-only dataset.
pub fn sample_grid(
    domain: &[(f64, f64)],
    m: usize,
    mode: GridMode,
    seed: u64,
) -> Result<SnapshotDataset> {
    if domain.is_empty() {
        return Err(CoreError::InvalidDomain("domain must have at least one axis".into()));
    }
    if m == 0 {
        return Err(CoreError::InsufficientData("need at least one sample".into()));
    }
    for (lo, hi) in domain {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(CoreError::InvalidDomain(format!("invalid axis range [{lo}, {hi}]")));
        }
    }
    let d = domain.len();
    let x = match mode {
        GridMode::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Array2::from_shape_fn((d, m), |(i, _)| rng.random_range(domain[i].0..domain[i].1))
        }
        GridMode::RegularGrid => {
            let per_axis = if d == 1 {
                m
            } else {
                ((m as f64).powf(1.0 / d as f64).round() as usize).max(2)
            };
            let total = per_axis.pow(d as u32);
            let mut x = Array2::zeros((d, total));
            for j in 0..total {
                let mut idx = j;
                for axis in 0..d {
                    let along = idx % per_axis;
                    idx /= per_axis;
                    let (lo, hi) = domain[axis];
                    let t = if per_axis == 1 {
                        0.5
                    } else {
                        along as f64 / (per_axis - 1) as f64
                    };
                    x[[axis, j]] = lo + t * (hi - lo);
                }
            }
            x
        }
    };
    Ok(SnapshotDataset {
        x,
        y: None,
        lag_time: None,
        source: SourceInfo {
            system: "grid".into(),
            params: vec![("m".into(), m as f64)],
            seed,
        },
    })
}
