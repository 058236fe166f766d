//! Coin and shift operators, n-step walks and per-step spin dephasing.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::lattice::{Spin, SpinSite, Walker, WalkerDensity, WalkerState, Window};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Phase convention of the coin rotation.
///
/// All variants have `|⟨↑|C|↑⟩|² = cos²(θ/2)` and differ only by diagonal
/// phase gates; every one of them reproduces the closed-form LG correlator
/// of the four-step walk (see the `oracle_match` tests).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoinConvention {
    /// `|↑⟩ → cos(θ/2)|↑⟩ + i sin(θ/2)|↓⟩`, `|↓⟩ → i sin(θ/2)|↑⟩ + cos(θ/2)|↓⟩`.
    #[default]
    BeamSplitter,
    /// Real rotation `exp(-iθσ_y/2)`.
    RealRotation,
    /// Reflection `cos(θ/2)σ_z + sin(θ/2)σ_x`; Hadamard at θ = π/2.
    Reflection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoinParams {
    theta: f64,
    #[serde(default)]
    convention: CoinConvention,
}

impl CoinParams {
    pub fn new(theta: f64) -> Result<Self> {
        Self::with_convention(theta, CoinConvention::default())
    }

    pub fn with_convention(theta: f64, convention: CoinConvention) -> Result<Self> {
        if !theta.is_finite() || !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::invalid(
                "coin angle",
                format!("{theta} is not in [0, π]"),
            ));
        }
        Ok(CoinParams { theta, convention })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn convention(&self) -> CoinConvention {
        self.convention
    }

    /// Probability of tails, `p = cos²(θ/2)`: the walker keeps its spin.
    pub fn tails(&self) -> f64 {
        (self.theta / 2.0).cos().powi(2)
    }

    /// `q = 1 − p`.
    pub fn heads(&self) -> f64 {
        1.0 - self.tails()
    }

    /// Coin matrix `m[out][in]` in the (↑, ↓) basis.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let c = (self.theta / 2.0).cos();
        let s = (self.theta / 2.0).sin();
        let re = |x: f64| Complex64::new(x, 0.0);
        let im = |x: f64| Complex64::new(0.0, x);
        match self.convention {
            CoinConvention::BeamSplitter => [[re(c), im(s)], [im(s), re(c)]],
            CoinConvention::RealRotation => [[re(c), re(-s)], [re(s), re(c)]],
            CoinConvention::Reflection => [[re(c), re(s)], [re(s), re(-c)]],
        }
    }
}

/// Where the dephasing channel acts within a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DephasingPlacement {
    #[default]
    AfterStep,
    BetweenCoinAndShift,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub steps: usize,
    pub coin: CoinParams,
    pub dephasing_per_step: f64,
    #[serde(default)]
    pub placement: DephasingPlacement,
}

impl WalkSpec {
    pub fn new(steps: usize, coin: CoinParams, dephasing_per_step: f64) -> Result<Self> {
        let spec = WalkSpec {
            steps,
            coin,
            dephasing_per_step,
            placement: DephasingPlacement::AfterStep,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_placement(mut self, placement: DephasingPlacement) -> Self {
        self.placement = placement;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps", "a walk needs at least one step"));
        }
        check_unit("dephasing per step", self.dephasing_per_step)
    }

    pub fn is_coherent(&self) -> bool {
        self.dephasing_per_step == 0.0
    }
}

/// Applies the coin to each site of a state vector.
fn coin_vector(
    window: &Window,
    amplitudes: &[Complex64],
    coin: &[[Complex64; 2]; 2],
) -> Vec<Complex64> {
    let width = window.width();
    let mut out = vec![ZERO; amplitudes.len()];
    for i in 0..width {
        let (up, down) = (amplitudes[i], amplitudes[width + i]);
        out[i] = coin[0][0] * up + coin[0][1] * down;
        out[width + i] = coin[1][0] * up + coin[1][1] * down;
    }
    out
}

/// Spin-dependent displacement of a state vector.
fn shift_vector(window: &Window, amplitudes: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut out = vec![ZERO; amplitudes.len()];
    for (i, &a) in amplitudes.iter().enumerate() {
        if a == ZERO {
            continue;
        }
        let label = window.label(i);
        let site = label.site + label.spin.shift_direction();
        let j =
            window
                .index(SpinSite::new(label.spin, site))
                .map_err(|_| Error::WindowOverflow {
                    site,
                    min: window.min(),
                    max: window.max(),
                })?;
        out[j] = a;
    }
    Ok(out)
}

/// `U ρ U†` for a Hermitian `ρ`, with `U` given as a map on column vectors.
fn conjugate<F>(rho: &DMatrix<Complex64>, map: F) -> Result<DMatrix<Complex64>>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let n = rho.nrows();
    let apply = |m: &DMatrix<Complex64>| -> Result<DMatrix<Complex64>> {
        let mut data = Vec::with_capacity(n * n);
        for col in m.as_slice().chunks(n) {
            data.extend(map(col)?);
        }
        Ok(DMatrix::from_vec(n, n, data))
    };
    // U (U ρ)† = U ρ U† when ρ = ρ†
    let half = apply(rho)?;
    apply(&half.adjoint())
}

pub fn apply_coin(state: &Walker, coin: &CoinParams) -> Walker {
    let m = coin.matrix();
    let window = state.window();
    match state {
        Walker::Pure(s) => Walker::Pure(WalkerState::from_raw(
            window,
            coin_vector(&window, s.amplitudes(), &m),
        )),
        Walker::Mixed(r) => {
            let out = conjugate(r.matrix(), |v| Ok(coin_vector(&window, v, &m)))
                .expect("coin cannot overflow");
            Walker::Mixed(WalkerDensity::from_raw(window, out))
        }
    }
}

/// ↑ moves one site left, ↓ one site right.
pub fn apply_shift(state: &Walker) -> Result<Walker> {
    let window = state.window();
    Ok(match state {
        Walker::Pure(s) => Walker::Pure(WalkerState::from_raw(
            window,
            shift_vector(&window, s.amplitudes())?,
        )),
        Walker::Mixed(r) => Walker::Mixed(WalkerDensity::from_raw(
            window,
            conjugate(r.matrix(), |v| shift_vector(&window, v))?,
        )),
    })
}

/// One coin toss followed by one shift.
pub fn walk_step(state: &Walker, coin: &CoinParams) -> Result<Walker> {
    apply_shift(&apply_coin(state, coin))
}

/// The dephasing channel on a raw operator over the (spin, site) basis:
/// blocks off-diagonal in spin are scaled by `1 − p`, everything else kept.
pub fn dephasing_map(window: &Window, p: f64, operator: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let width = window.width();
    let scale = Complex64::new(1.0 - p, 0.0);
    let mut out = operator.clone();
    for j in 0..operator.ncols() {
        for i in 0..operator.nrows() {
            if (i < width) != (j < width) {
                out[(i, j)] *= scale;
            }
        }
    }
    out
}

/// `ρ → (1−p)ρ + p(Π↑ρΠ↑ + Π↓ρΠ↓)`.
pub fn apply_dephasing(rho: &WalkerDensity, p: f64) -> Result<WalkerDensity> {
    check_unit("dephasing probability", p)?;
    let window = rho.window();
    Ok(WalkerDensity::from_raw(
        window,
        dephasing_map(&window, p, rho.matrix()),
    ))
}

fn dephase(state: Walker, p: f64) -> Result<Walker> {
    if p == 0.0 {
        return Ok(state);
    }
    match state {
        Walker::Mixed(r) => Ok(Walker::Mixed(apply_dephasing(&r, p)?)),
        Walker::Pure(s) => Ok(Walker::Mixed(apply_dephasing(&s.to_density(), p)?)),
    }
}

/// One step of `spec`, including dephasing at the configured placement.
pub fn evolve_step(state: &Walker, spec: &WalkSpec) -> Result<Walker> {
    let p = spec.dephasing_per_step;
    match spec.placement {
        DephasingPlacement::AfterStep => dephase(walk_step(state, &spec.coin)?, p),
        DephasingPlacement::BetweenCoinAndShift => {
            apply_shift(&dephase(apply_coin(state, &spec.coin), p)?)
        }
    }
}

/// Applies `steps` steps of `spec` (ignoring `spec.steps`).
pub fn evolve(initial: &Walker, spec: &WalkSpec, steps: usize) -> Result<Walker> {
    let mut state = promote(initial, spec);
    for _ in 0..steps {
        state = evolve_step(&state, spec)?;
    }
    Ok(state)
}

fn promote(state: &Walker, spec: &WalkSpec) -> Walker {
    if spec.is_coherent() {
        state.clone()
    } else {
        Walker::Mixed(state.to_density())
    }
}

/// States at every step boundary; element `k` is the state after `k` steps.
#[derive(Clone, Debug)]
pub struct WalkTrace {
    states: Vec<Walker>,
}

impl WalkTrace {
    pub fn states(&self) -> &[Walker] {
        &self.states
    }

    pub fn last(&self) -> &Walker {
        self.states.last().expect("trace holds the initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Runs `spec.steps` steps from `initial`. The trace holds density matrices
/// when the spec dephases.
pub fn run_walk(spec: &WalkSpec, initial: &Walker) -> Result<WalkTrace> {
    spec.validate()?;
    let mut states = Vec::with_capacity(spec.steps + 1);
    states.push(promote(initial, spec));
    for k in 0..spec.steps {
        let next = evolve_step(&states[k], spec)?;
        states.push(next);
    }
    Ok(WalkTrace { states })
}

/// Fraction of the walker in `spin`.
pub fn spin_population(state: &Walker, spin: Spin) -> f64 {
    let w = state.window();
    w.sites()
        .map(|x| state.population(SpinSite::new(spin, x)))
        .sum()
}
