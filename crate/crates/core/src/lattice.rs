//! Pure and mixed states of a spin-½ walker on a bounded one-dimensional lattice.
//!
//! The basis is ordered spin-major: all ↑ sites from `x_min` to `x_max`, then
//! all ↓ sites. A [`Window`] is part of every state, so amplitudes outside of
//! it cannot be represented; operations that would move weight across the
//! window edge fail with [`Error::WindowOverflow`] instead of truncating.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on norm and trace checks of user-supplied states.
pub const NORM_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const ALL: [Spin; 2] = [Spin::Up, Spin::Down];

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    /// Displacement applied by the shift operator: ↑ moves left, ↓ moves right.
    pub fn shift_direction(self) -> i64 {
        match self {
            Spin::Up => -1,
            Spin::Down => 1,
        }
    }

    fn block(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Up => "↑",
            Spin::Down => "↓",
        })
    }
}

/// A basis label: internal state and lattice site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpinSite {
    pub spin: Spin,
    pub site: i64,
}

impl SpinSite {
    pub fn new(spin: Spin, site: i64) -> Self {
        SpinSite { spin, site }
    }
}

/// Inclusive range of lattice sites a state lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Window {
    min: i64,
    max: i64,
}

impl Window {
    pub fn new(min: i64, max: i64) -> Result<Self> {
        if min > max {
            return Err(Error::invalid(
                "window",
                format!("lower bound {min} exceeds upper bound {max}"),
            ));
        }
        Ok(Window { min, max })
    }

    /// `[-half, half]`.
    pub fn symmetric(half: u32) -> Self {
        Window {
            min: -i64::from(half),
            max: i64::from(half),
        }
    }

    /// Window large enough that an `steps`-step walk with a removal transport
    /// of `removal_shift` sites can never reach the edge.
    pub fn for_walk(steps: usize, removal_shift: i64) -> Self {
        let half = steps as i64 + removal_shift.abs() + 1;
        Window {
            min: -half,
            max: half,
        }
    }

    pub fn min(&self) -> i64 {
        self.min
    }

    pub fn max(&self) -> i64 {
        self.max
    }

    /// Number of sites.
    pub fn width(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    /// Dimension of the (spin, site) basis.
    pub fn dim(&self) -> usize {
        2 * self.width()
    }

    pub fn contains(&self, site: i64) -> bool {
        (self.min..=self.max).contains(&site)
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<i64> {
        self.min..=self.max
    }

    pub fn index(&self, label: SpinSite) -> Result<usize> {
        if !self.contains(label.site) {
            return Err(Error::OutOfWindow {
                site: label.site,
                min: self.min,
                max: self.max,
            });
        }
        Ok(label.spin.block() * self.width() + (label.site - self.min) as usize)
    }

    /// Inverse of [`Window::index`]. Panics if `index >= self.dim()`.
    pub fn label(&self, index: usize) -> SpinSite {
        assert!(index < self.dim(), "basis index {index} out of range");
        let width = self.width();
        let spin = if index < width { Spin::Up } else { Spin::Down };
        SpinSite {
            spin,
            site: self.min + (index % width) as i64,
        }
    }

    /// Index of `label` moved by `offset` sites, or an overflow error.
    fn moved_index(&self, label: SpinSite, offset: i64) -> Result<usize> {
        let site = label.site + offset;
        if !self.contains(site) {
            return Err(Error::WindowOverflow {
                site,
                min: self.min,
                max: self.max,
            });
        }
        self.index(SpinSite { site, ..label })
    }
}

/// Probability of finding the walker at each site, irrespective of spin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionDistribution {
    min_site: i64,
    probabilities: Vec<f64>,
}

impl PositionDistribution {
    /// Distribution whose first entry is at `min_site`. Entries must be
    /// non-negative; normalization is not enforced here.
    pub fn new(min_site: i64, probabilities: Vec<f64>) -> Result<Self> {
        if let Some(p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(
                "distribution",
                format!("entry {p} is not a non-negative number"),
            ));
        }
        Ok(PositionDistribution {
            min_site,
            probabilities,
        })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, f64)>) -> Result<Self> {
        let pairs: Vec<(i64, f64)> = pairs.into_iter().collect();
        let Some(min) = pairs.iter().map(|(x, _)| *x).min() else {
            return PositionDistribution::new(0, Vec::new());
        };
        let max = pairs.iter().map(|(x, _)| *x).max().unwrap_or(min);
        let mut probabilities = vec![0.0; (max - min + 1) as usize];
        for (x, p) in pairs {
            probabilities[(x - min) as usize] += p;
        }
        PositionDistribution::new(min, probabilities)
    }

    pub fn min_site(&self) -> i64 {
        self.min_site
    }

    pub fn max_site(&self) -> i64 {
        self.min_site + self.probabilities.len() as i64 - 1
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, site: i64) -> f64 {
        let offset = site - self.min_site;
        if offset < 0 {
            return 0.0;
        }
        self.probabilities
            .get(offset as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.min_site + i as i64, p))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Sites carrying more than `threshold` probability.
    pub fn support(&self, threshold: f64) -> Vec<i64> {
        self.iter()
            .filter(|(_, p)| *p > threshold)
            .map(|(x, _)| x)
            .collect()
    }

    /// Copy scaled to unit total. Fails on an all-zero distribution.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::Unnormalized(total));
        }
        Ok(PositionDistribution {
            min_site: self.min_site,
            probabilities: self.probabilities.iter().map(|p| p / total).collect(),
        })
    }

    /// Rigid translation of every entry by `offset` sites.
    pub fn shifted(&self, offset: i64) -> Self {
        PositionDistribution {
            min_site: self.min_site + offset,
            probabilities: self.probabilities.clone(),
        }
    }

    /// Readout noise: with probability `error` the reported site is moved to
    /// one of the two neighbours, each with probability `error / 2`.
    pub fn with_detection_error(&self, error: f64) -> Self {
        if error == 0.0 || self.probabilities.is_empty() {
            return self.clone();
        }
        let len = self.probabilities.len();
        let mut out = vec![0.0; len + 2];
        for (i, &p) in self.probabilities.iter().enumerate() {
            out[i] += 0.5 * error * p;
            out[i + 1] += (1.0 - error) * p;
            out[i + 2] += 0.5 * error * p;
        }
        PositionDistribution {
            min_site: self.min_site - 1,
            probabilities: out,
        }
    }

    /// Pointwise weighted sum `Σ wᵢ·dᵢ` over a common site range.
    pub fn mixture<'a>(parts: impl IntoIterator<Item = (f64, &'a PositionDistribution)>) -> Self {
        let parts: Vec<(f64, &PositionDistribution)> = parts.into_iter().collect();
        let nonempty = parts.iter().filter(|(_, d)| !d.probabilities.is_empty());
        let min = nonempty.clone().map(|(_, d)| d.min_site).min().unwrap_or(0);
        let max = nonempty.map(|(_, d)| d.max_site()).max().unwrap_or(min - 1);
        let mut probabilities = vec![0.0; (max - min + 1).max(0) as usize];
        for (w, d) in parts {
            for (x, p) in d.iter() {
                probabilities[(x - min) as usize] += w * p;
            }
        }
        PositionDistribution {
            min_site: min,
            probabilities,
        }
    }

    /// Total variation distance `½ Σ |p(x) − q(x)|`.
    pub fn total_variation(&self, other: &PositionDistribution) -> f64 {
        let min = self.min_site.min(other.min_site);
        let max = self.max_site().max(other.max_site());
        0.5 * (min..=max)
            .map(|x| (self.probability(x) - other.probability(x)).abs())
            .sum::<f64>()
    }
}

/// Pure state of the walker.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkerState {
    window: Window,
    amplitudes: Vec<Complex64>,
}

impl WalkerState {
    /// Unit amplitude on `(spin, site)`.
    pub fn new_localized(site: i64, spin: Spin, window: Window) -> Result<Self> {
        let mut amplitudes = vec![ZERO; window.dim()];
        amplitudes[window.index(SpinSite::new(spin, site))?] = ONE;
        Ok(WalkerState { window, amplitudes })
    }

    /// Builds a state from explicit amplitudes, which must have unit norm.
    pub fn from_amplitudes(window: Window, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != window.dim() {
            return Err(Error::invalid(
                "amplitudes",
                format!(
                    "expected {} entries, got {}",
                    window.dim(),
                    amplitudes.len()
                ),
            ));
        }
        let state = WalkerState { window, amplitudes };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Unnormalized(norm));
        }
        Ok(state)
    }

    pub(crate) fn from_raw(window: Window, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), window.dim());
        WalkerState { window, amplitudes }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Amplitude on `label`; zero outside the window.
    pub fn amplitude(&self, label: SpinSite) -> Complex64 {
        self.window
            .index(label)
            .map(|i| self.amplitudes[i])
            .unwrap_or(ZERO)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn position_distribution(&self) -> PositionDistribution {
        let width = self.window.width();
        let probabilities = (0..width)
            .map(|i| self.amplitudes[i].norm_sqr() + self.amplitudes[width + i].norm_sqr())
            .collect();
        PositionDistribution {
            min_site: self.window.min,
            probabilities,
        }
    }

    /// Moves every amplitude of `spin` by `offset` sites, leaving the other
    /// spin untouched.
    pub fn translate_species(&self, spin: Spin, offset: i64) -> Result<Self> {
        Ok(WalkerState {
            window: self.window,
            amplitudes: translate_vector(&self.window, &self.amplitudes, spin, offset)?,
        })
    }

    pub fn to_density(&self) -> WalkerDensity {
        let v = nalgebra::DVector::from_column_slice(&self.amplitudes);
        WalkerDensity {
            window: self.window,
            matrix: &v * v.adjoint(),
        }
    }
}

pub(crate) fn translate_vector(
    window: &Window,
    amplitudes: &[Complex64],
    spin: Spin,
    offset: i64,
) -> Result<Vec<Complex64>> {
    let mut out = vec![ZERO; amplitudes.len()];
    for (i, &a) in amplitudes.iter().enumerate() {
        if a == ZERO {
            continue;
        }
        let label = window.label(i);
        let target = if label.spin == spin {
            window.moved_index(label, offset)?
        } else {
            i
        };
        out[target] += a;
    }
    Ok(out)
}

/// Mixed state of the walker.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkerDensity {
    window: Window,
    matrix: DMatrix<Complex64>,
}

impl WalkerDensity {
    /// Builds a density matrix, checking hermiticity, unit trace and positivity.
    pub fn from_matrix(window: Window, matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != window.dim() || matrix.ncols() != window.dim() {
            return Err(Error::invalid(
                "density matrix",
                format!(
                    "expected {0}x{0}, got {1}x{2}",
                    window.dim(),
                    matrix.nrows(),
                    matrix.ncols()
                ),
            ));
        }
        let rho = WalkerDensity { window, matrix };
        if rho.hermiticity_defect() > NORM_TOLERANCE {
            return Err(Error::invalid("density matrix", "not Hermitian"));
        }
        let trace = rho.trace();
        if (trace - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Unnormalized(trace));
        }
        if rho.min_eigenvalue() < -NORM_TOLERANCE {
            return Err(Error::invalid(
                "density matrix",
                "not positive semidefinite",
            ));
        }
        Ok(rho)
    }

    pub(crate) fn from_raw(window: Window, matrix: DMatrix<Complex64>) -> Self {
        WalkerDensity { window, matrix }
    }

    /// Equal-weight incoherent mixture of the two spin states at `site`.
    pub fn spin_mixed(site: i64, window: Window) -> Result<Self> {
        let mut matrix = DMatrix::zeros(window.dim(), window.dim());
        for spin in Spin::ALL {
            let i = window.index(SpinSite::new(spin, site))?;
            matrix[(i, i)] = Complex64::new(0.5, 0.0);
        }
        Ok(WalkerDensity { window, matrix })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Largest entrywise deviation from hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let hermitian = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        hermitian
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Population on `label`.
    pub fn population(&self, label: SpinSite) -> f64 {
        self.window
            .index(label)
            .map(|i| self.matrix[(i, i)].re)
            .unwrap_or(0.0)
    }

    pub fn position_distribution(&self) -> PositionDistribution {
        let width = self.window.width();
        let probabilities = (0..width)
            .map(|i| self.matrix[(i, i)].re + self.matrix[(width + i, width + i)].re)
            .collect();
        PositionDistribution {
            min_site: self.window.min,
            probabilities,
        }
    }

    pub fn translate_species(&self, spin: Spin, offset: i64) -> Result<Self> {
        let window = self.window;
        let n = window.dim();
        let mut target = Vec::with_capacity(n);
        let occupied: Vec<bool> = (0..n)
            .map(|i| {
                self.matrix.row(i).iter().any(|z| *z != ZERO)
                    || self.matrix.column(i).iter().any(|z| *z != ZERO)
            })
            .collect();
        for (i, &used) in occupied.iter().enumerate() {
            let label = window.label(i);
            if label.spin == spin && used {
                target.push(window.moved_index(label, offset)?);
            } else if label.spin == spin {
                target.push(usize::MAX);
            } else {
                target.push(i);
            }
        }
        let mut matrix = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let z = self.matrix[(i, j)];
                if z != ZERO {
                    matrix[(target[i], target[j])] += z;
                }
            }
        }
        Ok(WalkerDensity { window, matrix })
    }
}

/// Either representation of the walker; the walk engine and measurement
/// layer operate on this.
#[derive(Clone, Debug, PartialEq)]
pub enum Walker {
    Pure(WalkerState),
    Mixed(WalkerDensity),
}

impl Walker {
    pub fn window(&self) -> Window {
        match self {
            Walker::Pure(s) => s.window(),
            Walker::Mixed(r) => r.window(),
        }
    }

    pub fn position_distribution(&self) -> PositionDistribution {
        match self {
            Walker::Pure(s) => s.position_distribution(),
            Walker::Mixed(r) => r.position_distribution(),
        }
    }

    pub fn translate_species(&self, spin: Spin, offset: i64) -> Result<Self> {
        Ok(match self {
            Walker::Pure(s) => Walker::Pure(s.translate_species(spin, offset)?),
            Walker::Mixed(r) => Walker::Mixed(r.translate_species(spin, offset)?),
        })
    }

    pub fn population(&self, label: SpinSite) -> f64 {
        match self {
            Walker::Pure(s) => s.amplitude(label).norm_sqr(),
            Walker::Mixed(r) => r.population(label),
        }
    }

    /// Norm for pure states, trace for mixed ones.
    pub fn weight(&self) -> f64 {
        match self {
            Walker::Pure(s) => s.norm_sqr(),
            Walker::Mixed(r) => r.trace(),
        }
    }

    pub fn to_density(&self) -> WalkerDensity {
        match self {
            Walker::Pure(s) => s.to_density(),
            Walker::Mixed(r) => r.clone(),
        }
    }
}

impl From<WalkerState> for Walker {
    fn from(s: WalkerState) -> Self {
        Walker::Pure(s)
    }
}

impl From<WalkerDensity> for Walker {
    fn from(r: WalkerDensity) -> Self {
        Walker::Mixed(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn w10() -> Window {
        Window::symmetric(10)
    }

    fn superposition() -> WalkerState {
        let w = w10();
        let mut amps = vec![ZERO; w.dim()];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        amps[w.index(SpinSite::new(Spin::Up, -1)).unwrap()] = Complex64::new(h, 0.0);
        amps[w.index(SpinSite::new(Spin::Down, 1)).unwrap()] = Complex64::new(0.0, h);
        WalkerState::from_amplitudes(w, amps).unwrap()
    }

    #[test]
    fn localized_states() {
        let s = WalkerState::new_localized(0, Spin::Up, w10()).unwrap();
        assert_eq!(s.amplitude(SpinSite::new(Spin::Up, 0)), ONE);
        assert_abs_diff_eq!(s.norm_sqr(), 1.0);

        let s = WalkerState::new_localized(3, Spin::Down, w10()).unwrap();
        assert_eq!(s.amplitude(SpinSite::new(Spin::Down, 3)), ONE);
        assert_eq!(s.amplitude(SpinSite::new(Spin::Up, 3)), ZERO);

        assert!(matches!(
            WalkerState::new_localized(11, Spin::Up, w10()),
            Err(Error::OutOfWindow { site: 11, .. })
        ));
    }

    #[test]
    fn position_distribution_of_simple_states() {
        let s = WalkerState::new_localized(0, Spin::Up, w10()).unwrap();
        let d = s.position_distribution();
        assert_eq!(d.probability(0), 1.0);
        assert_eq!(d.support(0.0), vec![0]);

        let d = superposition().position_distribution();
        assert_abs_diff_eq!(d.probability(-1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.probability(1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn translate_moves_one_species() {
        let s = superposition();
        let t = s.translate_species(Spin::Down, 5).unwrap();
        assert_eq!(
            t.amplitude(SpinSite::new(Spin::Down, 6)),
            s.amplitude(SpinSite::new(Spin::Down, 1))
        );
        assert_eq!(t.amplitude(SpinSite::new(Spin::Down, 1)), ZERO);
        assert_eq!(
            t.amplitude(SpinSite::new(Spin::Up, -1)),
            s.amplitude(SpinSite::new(Spin::Up, -1))
        );
        assert_eq!(s.translate_species(Spin::Up, 0).unwrap(), s);

        let up = WalkerState::new_localized(0, Spin::Up, w10()).unwrap();
        assert_eq!(up.translate_species(Spin::Down, 5).unwrap(), up);
    }

    #[test]
    fn translate_overflow_is_an_error() {
        let s = superposition();
        assert!(matches!(
            s.translate_species(Spin::Down, 10),
            Err(Error::WindowOverflow { site: 11, .. })
        ));
        assert!(s.to_density().translate_species(Spin::Up, -10).is_err());
    }

    #[test]
    fn density_translation_matches_pure() {
        let s = superposition();
        let a = s.translate_species(Spin::Down, 5).unwrap().to_density();
        let b = s.to_density().translate_species(Spin::Down, 5).unwrap();
        assert!((a.matrix() - b.matrix()).norm() < 1e-15);
    }

    #[test]
    fn density_validation() {
        let w = Window::symmetric(1);
        let rho = superposition_small(w);
        assert!(WalkerDensity::from_matrix(w, rho.clone()).is_ok());
        let doubled = rho * Complex64::new(2.0, 0.0);
        assert!(matches!(
            WalkerDensity::from_matrix(w, doubled),
            Err(Error::Unnormalized(_))
        ));
        let mut skew = DMatrix::zeros(w.dim(), w.dim());
        skew[(0, 0)] = ONE;
        skew[(0, 1)] = Complex64::new(0.3, 0.0);
        assert!(WalkerDensity::from_matrix(w, skew).is_err());
    }

    fn superposition_small(w: Window) -> DMatrix<Complex64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![ZERO; w.dim()];
        amps[w.index(SpinSite::new(Spin::Up, -1)).unwrap()] = Complex64::new(h, 0.0);
        amps[w.index(SpinSite::new(Spin::Down, 1)).unwrap()] = Complex64::new(h, 0.0);
        WalkerState::from_amplitudes(w, amps)
            .unwrap()
            .to_density()
            .matrix()
            .clone()
    }

    #[test]
    fn detection_error_moves_mass_to_neighbours() {
        let d = PositionDistribution::from_pairs([(-4, 1.0)]).unwrap();
        let noisy = d.with_detection_error(0.02);
        assert_abs_diff_eq!(noisy.probability(-5), 0.01);
        assert_abs_diff_eq!(noisy.probability(-3), 0.01);
        assert_abs_diff_eq!(noisy.probability(-4), 0.98);
        assert_abs_diff_eq!(noisy.total(), 1.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn basis_index_round_trip(min in -30i64..0, width in 1i64..30) {
            let w = Window::new(min, min + width - 1).unwrap();
            for i in 0..w.dim() {
                prop_assert_eq!(w.index(w.label(i)).unwrap(), i);
            }
        }

        #[test]
        fn translate_there_and_back(
            raw in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 14),
            k in -4i64..=4,
            up in any::<bool>(),
        ) {
            // amplitudes live on [-3, 3]; the window leaves room for |k| <= 4
            let inner = Window::symmetric(3);
            let w = Window::symmetric(7);
            let mut amps = vec![ZERO; w.dim()];
            for (i, (re, im)) in raw.iter().enumerate() {
                let label = inner.label(i);
                amps[w.index(label).unwrap()] = Complex64::new(*re, *im);
            }
            let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            amps.iter_mut().for_each(|a| *a /= norm);
            let s = WalkerState::from_amplitudes(w, amps).unwrap();
            let spin = if up { Spin::Up } else { Spin::Down };
            let moved = s.translate_species(spin, k).unwrap();
            prop_assert!((moved.norm_sqr() - 1.0).abs() < 1e-12);
            let back = moved.translate_species(spin, -k).unwrap();
            for (a, b) in back.amplitudes().iter().zip(s.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-14);
            }
            let rho = s.to_density().translate_species(spin, k).unwrap();
            prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        }
    }
}
