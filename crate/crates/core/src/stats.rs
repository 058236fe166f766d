//! Interval estimation and the decoherence fit.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::analysis::{maximize, CorrelationReport, Correlators, Uncertainty, UncertaintyMethod};
use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::lattice::{PositionDistribution, Spin, Window};
use crate::measurement::{prepared_state, EventRecord, QScheme};
use crate::pipeline::{ArmTally, EventSet, ExperimentTallies};
use crate::rng::StreamSeed;
use crate::walk::{evolve, CoinParams, WalkSpec};

/// Probability mass within one standard deviation of a Gaussian.
pub const ONE_SIGMA: f64 = 0.682_689_492_137_085_9;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const HISTOGRAM_BINS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    ClopperPearson,
    BootstrapGaussian,
    BootstrapPercentile,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub method: IntervalMethod,
}

impl IntervalEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.lower..=self.upper).contains(&value)
    }
}

/// Root of `f(p) = target` for `f` increasing on `[0, 1]`, by the
/// Illinois variant of regula falsi with a bisection fallback.
fn solve_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let (mut fa, mut fb) = (f(a) - target, f(b) - target);
    let mut side = 0;
    for _ in 0..200 {
        if b - a <= 1e-15 {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c) - target;
        if fc == 0.0 {
            return c;
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if (b - a) < 1e-13 * b.max(1e-300) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Exact binomial interval by inverting the two tail probabilities,
/// `P(X ≥ k | p_lo) = α/2` and `P(X ≤ k | p_hi) = α/2`.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Result<IntervalEstimate> {
    if trials == 0 || successes > trials {
        return Err(Error::InvalidCounts(format!(
            "{successes} successes in {trials} trials"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(
            "confidence",
            format!("{confidence} is not in (0, 1)"),
        ));
    }
    let (k, n) = (successes as f64, trials as f64);
    let tail = 0.5 * (1.0 - confidence);
    // P(X ≥ k | p) = I_p(k, n − k + 1), increasing in p
    let lower = if successes == 0 {
        0.0
    } else {
        solve_increasing(|p| beta_reg(k, n - k + 1.0, p), tail)
    };
    // P(X ≤ k | p) = 1 − I_p(k + 1, n − k), decreasing in p
    let upper = if successes == trials {
        1.0
    } else {
        solve_increasing(|p| beta_reg(k + 1.0, n - k, p), 1.0 - tail)
    };
    Ok(IntervalEstimate {
        point: k / n,
        lower,
        upper,
        confidence,
        method: IntervalMethod::ClopperPearson,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub mean: f64,
    pub sigma: f64,
}

/// Least-squares Gaussian fit to a histogram of `samples` with `bins` equal
/// bins (Levenberg-Marquardt). `None` when the samples have no spread or the
/// fit does not converge.
pub fn fit_gaussian_histogram(samples: &[f64], bins: usize) -> Option<GaussianFit> {
    let n = samples.len() as f64;
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if samples.len() < 2 || !(max > min) || bins < 3 {
        return None;
    }
    let width = (max - min) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &x in samples {
        let i = (((x - min) / width) as usize).min(bins - 1);
        counts[i] += 1.0;
    }
    let centers: Vec<f64> = (0..bins).map(|i| min + (i as f64 + 0.5) * width).collect();

    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut p = Vector3::new(
        counts.iter().cloned().fold(0.0, f64::max),
        mean,
        sd.max(width),
    );

    let residuals = |p: &Vector3<f64>| -> f64 {
        centers
            .iter()
            .zip(&counts)
            .map(|(x, y)| (y - p[0] * (-(x - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp()).powi(2))
            .sum()
    };
    let mut cost = residuals(&p);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (x, y) in centers.iter().zip(&counts) {
            let d = x - p[1];
            let e = (-d * d / (2.0 * p[2] * p[2])).exp();
            let model = p[0] * e;
            let j = Vector3::new(e, model * d / (p[2] * p[2]), model * d * d / p[2].powi(3));
            jtj += j * j.transpose();
            jtr += j * (y - model);
        }
        let mut damped = jtj;
        for i in 0..3 {
            damped[(i, i)] *= 1.0 + lambda;
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let trial = p + step;
        let trial_cost = residuals(&trial);
        if trial_cost.is_finite() && trial_cost <= cost {
            let converged = (cost - trial_cost) <= 1e-12 * cost.max(1e-300);
            p = trial;
            cost = trial_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if converged {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (p.iter().all(|v| v.is_finite()) && p[2] != 0.0).then(|| GaussianFit {
        amplitude: p[0],
        mean: p[1],
        sigma: p[2].abs(),
    })
}

/// Lower/upper empirical quantiles (linear interpolation) of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Bootstrap distribution of `K` and the intervals derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub sigma: f64,
    pub gaussian: IntervalEstimate,
    pub percentile: IntervalEstimate,
    pub resamples: usize,
}

/// Compact per-arm view of events for fast resampling: each event is a
/// category (retained at a site, or rejected).
struct ArmCategories {
    arm: crate::measurement::Arm,
    sites: Vec<i64>,
    codes: Vec<u16>,
}

impl ArmCategories {
    fn new(arm: crate::measurement::Arm, events: &[EventRecord]) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyArm(arm));
        }
        let mut sites: Vec<i64> = events
            .iter()
            .filter(|e| e.retained)
            .map(|e| e.reported_x3)
            .collect();
        sites.sort_unstable();
        sites.dedup();
        let rejected = sites.len() as u16;
        let codes = events
            .iter()
            .map(|e| {
                if e.retained {
                    sites.binary_search(&e.reported_x3).expect("site collected") as u16
                } else {
                    rejected
                }
            })
            .collect();
        Ok(ArmCategories { arm, sites, codes })
    }

    fn resample<R: Rng + ?Sized>(&self, rng: &mut R, counts: &mut Vec<u32>) -> ArmTally {
        counts.clear();
        counts.resize(self.sites.len() + 1, 0);
        let n = self.codes.len();
        for _ in 0..n {
            counts[self.codes[rng.random_range(0..n)] as usize] += 1;
        }
        ArmTally {
            arm: self.arm,
            total: n as f64,
            retained: self
                .sites
                .iter()
                .zip(counts.iter())
                .filter(|(_, c)| **c > 0)
                .map(|(x, c)| (*x, f64::from(*c)))
                .collect(),
            rejected: f64::from(counts[self.sites.len()]),
        }
    }
}

fn k_of(tallies: &ExperimentTallies, scheme: &QScheme) -> Option<f64> {
    tallies.correlators(scheme).ok().map(|c: Correlators| c.k())
}

fn summarize(point: f64, mut ks: Vec<f64>, resamples: usize) -> Result<BootstrapResult> {
    if ks.is_empty() {
        return Err(Error::Degenerate("every resample was degenerate".into()));
    }
    ks.sort_by(f64::total_cmp);
    let degenerate = ks.first() == ks.last();
    let sigma = if degenerate {
        0.0
    } else {
        fit_gaussian_histogram(&ks, HISTOGRAM_BINS)
            .map(|g| g.sigma)
            .ok_or_else(|| {
                Error::Degenerate("Gaussian fit to the bootstrap histogram failed".into())
            })?
    };
    let tail = 0.5 * (1.0 - ONE_SIGMA);
    let (lo, hi) = (quantile(&ks, tail), quantile(&ks, 1.0 - tail));
    Ok(BootstrapResult {
        sigma,
        gaussian: IntervalEstimate {
            point,
            lower: point - sigma,
            upper: point + sigma,
            confidence: ONE_SIGMA,
            method: IntervalMethod::BootstrapGaussian,
        },
        percentile: IntervalEstimate {
            point,
            lower: lo.min(point),
            upper: hi.max(point),
            confidence: ONE_SIGMA,
            method: IntervalMethod::BootstrapPercentile,
        },
        resamples,
    })
}

/// Resamples events with replacement within each arm, recomputes `K` per
/// resample and fits a Gaussian to the resulting histogram. Resample `b`
/// draws from stream `b` of `seed`.
pub fn bootstrap_k(
    events: &EventSet,
    scheme: &QScheme,
    resamples: usize,
    seed: StreamSeed,
) -> Result<BootstrapResult> {
    if resamples < 1000 {
        return Err(Error::invalid(
            "bootstrap resamples",
            format!("{resamples} < 1000"),
        ));
    }
    let point = ExperimentTallies::from_events(events)
        .correlators(scheme)?
        .k();
    let arms = [
        ArmCategories::new(crate::measurement::Arm::None, &events.unconditioned)?,
        ArmCategories::new(crate::measurement::Arm::ConditionOnLeft, &events.left)?,
        ArmCategories::new(crate::measurement::Arm::ConditionOnRight, &events.right)?,
    ];
    let ks: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map_init(Vec::new, |counts, b| {
            let mut rng = seed.stream(b);
            let tallies = ExperimentTallies {
                unconditioned: arms[0].resample(&mut rng, counts),
                left: arms[1].resample(&mut rng, counts),
                right: arms[2].resample(&mut rng, counts),
            };
            k_of(&tallies, scheme)
        })
        .flatten()
        .collect();
    summarize(point, ks, resamples)
}

fn check_counts(tally: &ArmTally) -> Result<()> {
    let whole = |w: f64| w >= 0.0 && w.fract() == 0.0 && w < 2f64.powi(53);
    if !whole(tally.total)
        || !whole(tally.rejected)
        || tally.retained.iter().any(|(_, w)| !whole(*w))
    {
        return Err(Error::InvalidCounts(format!(
            "{:?} arm has non-integer counts",
            tally.arm
        )));
    }
    if (tally.retained_weight() + tally.rejected - tally.total).abs() > 0.5 {
        return Err(Error::InvalidCounts(format!(
            "{:?} arm counts do not add up",
            tally.arm
        )));
    }
    if tally.total == 0.0 {
        return Err(Error::EmptyArm(tally.arm));
    }
    Ok(())
}

fn binomial_draw<R: Rng + ?Sized>(n: u64, count: f64, rng: &mut R) -> f64 {
    let p = (count / n as f64).clamp(0.0, 1.0);
    Binomial::new(n, p).expect("valid binomial").sample(rng) as f64
}

fn perturb<R: Rng + ?Sized>(tally: &ArmTally, rng: &mut R) -> ArmTally {
    let n = tally.total as u64;
    let retained: Vec<(i64, f64)> = tally
        .retained
        .iter()
        .map(|(x, c)| (*x, binomial_draw(n, *c, rng)))
        .collect();
    let rejected = binomial_draw(n, tally.rejected, rng);
    let total = retained.iter().map(|(_, c)| c).sum::<f64>() + rejected;
    ArmTally {
        arm: tally.arm,
        total,
        retained,
        rejected,
    }
}

/// Parametric Monte Carlo: every per-site count (and the rejected count)
/// is redrawn from a binomial with the observed frequency, `K` recomputed;
/// the spread of the draws is the uncertainty.
pub fn monte_carlo_k(
    tallies: &ExperimentTallies,
    scheme: &QScheme,
    draws: usize,
    seed: StreamSeed,
) -> Result<IntervalEstimate> {
    for t in [&tallies.unconditioned, &tallies.left, &tallies.right] {
        check_counts(t)?;
    }
    if draws < 2 {
        return Err(Error::invalid(
            "Monte Carlo draws",
            "need at least two draws",
        ));
    }
    let point = tallies.correlators(scheme)?.k();
    let ks: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .filter_map(|d| {
            let mut rng = seed.stream(d);
            let drawn = ExperimentTallies {
                unconditioned: perturb(&tallies.unconditioned, &mut rng),
                left: perturb(&tallies.left, &mut rng),
                right: perturb(&tallies.right, &mut rng),
            };
            k_of(&drawn, scheme)
        })
        .collect();
    if ks.len() < 2 {
        return Err(Error::Degenerate(
            "every Monte Carlo draw was degenerate".into(),
        ));
    }
    let m = ks.iter().sum::<f64>() / ks.len() as f64;
    let var = ks.iter().map(|k| (k - m).powi(2)).sum::<f64>() / (ks.len() - 1) as f64;
    let sigma = if ks.iter().all(|k| *k == ks[0]) {
        0.0
    } else {
        var.sqrt()
    };
    Ok(IntervalEstimate {
        point,
        lower: point - sigma,
        upper: point + sigma,
        confidence: ONE_SIGMA,
        method: IntervalMethod::MonteCarlo,
    })
}

/// Position counts of unconditioned walks at one coin angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaCounts {
    pub theta: f64,
    pub counts: Vec<(i64, u64)>,
}

impl ThetaCounts {
    /// Histograms of unconditioned events, one per distinct coin angle.
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a EventRecord>) -> Vec<ThetaCounts> {
        let mut by_theta: BTreeMap<u64, BTreeMap<i64, u64>> = BTreeMap::new();
        for e in events {
            if e.arm == crate::measurement::Arm::None {
                *by_theta
                    .entry(e.theta.to_bits())
                    .or_default()
                    .entry(e.reported_x3)
                    .or_default() += 1;
            }
        }
        by_theta
            .into_iter()
            .map(|(bits, counts)| ThetaCounts {
                theta: f64::from_bits(bits),
                counts: counts.into_iter().collect(),
            })
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|(_, c)| c).sum()
    }
}

/// Known parts of the model fitted in [`fit_dephasing`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DephasingModel {
    pub steps: usize,
    pub detection_error: f64,
}

impl DephasingModel {
    /// Predicted distribution of reported final positions.
    pub fn predict(&self, theta: f64, dephasing: f64) -> Result<PositionDistribution> {
        let spec = WalkSpec::new(self.steps, CoinParams::new(theta)?, dephasing)?;
        let window = Window::for_walk(self.steps, 0);
        let initial = prepared_state(Spin::Up, window)?;
        Ok(evolve(&initial, &spec, self.steps)?
            .position_distribution()
            .with_detection_error(self.detection_error))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DephasingFit {
    pub dephasing: f64,
    pub chi_squared: f64,
    pub degrees_of_freedom: usize,
    pub reduced_chi_squared: f64,
}

/// Pearson χ² with the expected count floored at one.
fn chi_squared(
    data: &[ThetaCounts],
    model: &DephasingModel,
    dephasing: f64,
) -> Result<(f64, usize)> {
    let mut chi2 = 0.0;
    let mut bins = 0;
    for d in data {
        let predicted = model.predict(d.theta, dephasing)?;
        let n = d.total() as f64;
        let observed: BTreeMap<i64, f64> = d.counts.iter().map(|(x, c)| (*x, *c as f64)).collect();
        let mut sites: Vec<i64> = predicted.support(1e-12);
        sites.extend(observed.keys());
        sites.sort_unstable();
        sites.dedup();
        for x in &sites {
            let expected = n * predicted.probability(*x);
            let o = observed.get(x).copied().unwrap_or(0.0);
            chi2 += (o - expected).powi(2) / expected.max(1.0);
        }
        bins += sites.len().saturating_sub(1);
    }
    Ok((chi2, bins))
}

/// One-parameter fit of the per-step dephasing probability to measured
/// final-position histograms by minimizing Pearson χ² over `[0, 1]`.
pub fn fit_dephasing(data: &[ThetaCounts], model: &DephasingModel) -> Result<DephasingFit> {
    if data.is_empty() {
        return Err(Error::Degenerate("no distributions to fit".into()));
    }
    if let Some(d) = data.iter().find(|d| d.total() == 0) {
        return Err(Error::Degenerate(format!("no counts at θ = {}", d.theta)));
    }
    // surface errors (bad θ, bad model) before the search
    chi_squared(data, model, 0.0)?;
    let objective = |p: f64| {
        chi_squared(data, model, p)
            .map(|(c, _)| -c)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (dephasing, _) = maximize(objective, 0.0, 1.0, 1e-7);
    let (chi2, bins) = chi_squared(data, model, dephasing)?;
    let dof = bins.saturating_sub(1).max(1);
    Ok(DephasingFit {
        dephasing,
        chi_squared: chi2,
        degrees_of_freedom: dof,
        reduced_chi_squared: chi2 / dof as f64,
    })
}

const BOOTSTRAP_STREAM: u64 = 100;
const MONTE_CARLO_STREAM: u64 = 101;

/// Full analysis of one data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LgAnalysis {
    pub config: ProtocolConfig,
    pub report: CorrelationReport,
    pub bootstrap: BootstrapResult,
    pub monte_carlo: IntervalEstimate,
    /// Retention fractions of the left and right removal arms.
    pub retention_left: IntervalEstimate,
    pub retention_right: IntervalEstimate,
    pub p_left: f64,
    pub p_right: f64,
    pub events: usize,
}

fn retention_interval(events: &[EventRecord]) -> Result<IntervalEstimate> {
    let kept = events.iter().filter(|e| e.retained).count() as u64;
    clopper_pearson(kept, events.len() as u64, ONE_SIGMA)
}

/// Estimates `K` with bootstrap and Monte Carlo uncertainties. Both are
/// seeded from `config.seed`, so the result is a pure function of
/// `(events, config)`.
pub fn analyze(events: &EventSet, config: &ProtocolConfig) -> Result<LgAnalysis> {
    config.validate()?;
    let scheme = &config.q2_scheme;
    let seed = StreamSeed::new(config.seed);
    let tallies = ExperimentTallies::from_events(events);
    let correlators = tallies.correlators(scheme)?;
    let (p_left, p_right) = tallies.branch_probabilities()?;
    let bootstrap = bootstrap_k(
        events,
        scheme,
        config.bootstrap_resamples,
        seed.derive(BOOTSTRAP_STREAM),
    )?;
    let monte_carlo = monte_carlo_k(
        &tallies,
        scheme,
        config.monte_carlo_draws.max(2),
        seed.derive(MONTE_CARLO_STREAM),
    )?;
    let report = CorrelationReport::new(
        correlators,
        config.excitation_prob,
        Some(Uncertainty {
            sigma: bootstrap.sigma,
            method: UncertaintyMethod::Bootstrap,
        }),
    )?;
    Ok(LgAnalysis {
        config: config.clone(),
        report,
        bootstrap,
        monte_carlo,
        retention_left: retention_interval(&events.left)?,
        retention_right: retention_interval(&events.right)?,
        p_left,
        p_right,
        events: events.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::Arm;
    use approx::assert_abs_diff_eq;

    #[test]
    fn clopper_pearson_boundaries() {
        let ci = clopper_pearson(0, 50, 0.68).unwrap();
        assert_eq!(ci.lower, 0.0);
        assert!(ci.upper > 0.0 && ci.upper < 0.1);
        let ci = clopper_pearson(50, 50, 0.68).unwrap();
        assert_eq!(ci.upper, 1.0);
        assert!(clopper_pearson(5, 4, 0.68).is_err());
        assert!(clopper_pearson(0, 0, 0.68).is_err());
        assert!(clopper_pearson(1, 4, 1.0).is_err());
    }

    #[test]
    fn clopper_pearson_at_experiment_scale() {
        let ci = clopper_pearson(202, 404, 0.68).unwrap();
        assert!(ci.lower <= 0.5 && 0.5 <= ci.upper);
        assert!(
            (ci.half_width() - 0.026).abs() < 0.002,
            "{}",
            ci.half_width()
        );
    }

    #[test]
    fn clopper_pearson_known_values() {
        // 95 % interval for 3/10, tabulated 0.0667 .. 0.6525
        let ci = clopper_pearson(3, 10, 0.95).unwrap();
        assert_abs_diff_eq!(ci.lower, 0.066_739, epsilon = 1e-5);
        assert_abs_diff_eq!(ci.upper, 0.652_453, epsilon = 1e-5);
    }

    #[test]
    fn gaussian_fit_recovers_width() {
        use rand::SeedableRng;
        use rand_distr::Normal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let normal = Normal::new(1.4, 0.07).unwrap();
        let xs: Vec<f64> = (0..20_000).map(|_| normal.sample(&mut rng)).collect();
        let fit = fit_gaussian_histogram(&xs, 50).unwrap();
        assert!((fit.sigma - 0.07).abs() < 0.003, "{}", fit.sigma);
        assert!((fit.mean - 1.4).abs() < 0.003);
        assert!(fit_gaussian_histogram(&[1.0; 10], 50).is_none());
    }

    fn event(arm: Arm, x: i64, retained: bool) -> EventRecord {
        EventRecord {
            run_id: 0,
            arm,
            theta: 0.0,
            reported_x3: x,
            retained,
            q3: crate::measurement::q3(x),
            branch_at_t2: None,
            seed: 0,
            wrong_prep: false,
            corrupt: false,
        }
    }

    #[test]
    fn identical_events_have_zero_spread() {
        let events = EventSet::new((0..50).flat_map(|_| {
            [
                event(Arm::None, -4, true),
                event(Arm::ConditionOnLeft, -4, true),
                event(Arm::ConditionOnRight, -9, false),
            ]
        }));
        let b = bootstrap_k(&events, &QScheme::ConstantOne, 1000, StreamSeed::new(1)).unwrap();
        assert_eq!(b.sigma, 0.0);
        assert_eq!(b.gaussian.point, 1.0);
        let t = ExperimentTallies::from_events(&events);
        let mc = monte_carlo_k(&t, &QScheme::ConstantOne, 1000, StreamSeed::new(1)).unwrap();
        assert_eq!(mc.half_width(), 0.0);
        assert!(bootstrap_k(&events, &QScheme::ConstantOne, 10, StreamSeed::new(1)).is_err());
    }

    #[test]
    fn empty_arm_rejected() {
        let events = EventSet::new([event(Arm::None, 0, true)]);
        assert!(matches!(
            bootstrap_k(&events, &QScheme::ConstantOne, 1000, StreamSeed::new(1)),
            Err(Error::EmptyArm(_))
        ));
    }

    #[test]
    fn monte_carlo_rejects_fractional_counts() {
        let mut t = ArmTally::empty(Arm::None);
        t.total = 1.5;
        t.retained = vec![(0, 1.5)];
        let tallies = ExperimentTallies {
            unconditioned: t.clone(),
            left: t.clone(),
            right: t,
        };
        assert!(matches!(
            monte_carlo_k(&tallies, &QScheme::ConstantOne, 10, StreamSeed::new(0)),
            Err(Error::InvalidCounts(_))
        ));
    }

    #[test]
    fn dephasing_fit_on_ideal_counts() {
        let model = DephasingModel {
            steps: 4,
            detection_error: 0.0,
        };
        let data: Vec<ThetaCounts> = [0.8, std::f64::consts::FRAC_PI_2, 2.2]
            .iter()
            .map(|&theta| {
                let d = model.predict(theta, 0.0).unwrap();
                ThetaCounts {
                    theta,
                    counts: d
                        .iter()
                        .map(|(x, p)| (x, (p * 10_000.0).round() as u64))
                        .filter(|(_, c)| *c > 0)
                        .collect(),
                }
            })
            .collect();
        let fit = fit_dephasing(&data, &model).unwrap();
        assert!(fit.dephasing < 0.005, "{}", fit.dephasing);
        assert!(fit.reduced_chi_squared < 1.0);
        assert!(fit_dephasing(&[], &model).is_err());
        let empty = [ThetaCounts {
            theta: 1.0,
            counts: vec![],
        }];
        assert!(matches!(
            fit_dephasing(&empty, &model),
            Err(Error::Degenerate(_))
        ));
    }
}
