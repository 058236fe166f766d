//! Flat experiment description shared by every command and echoed into
//! every output artifact.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::measurement::{Arm, NoiseParams, QScheme, RemovalProtocol, RightArmVariant, T2_STEP};
use crate::walk::{CoinParams, DephasingPlacement, WalkSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub steps: usize,
    /// Coin angle in radians.
    pub theta: f64,
    pub t2_step: usize,
    pub q2_scheme: QScheme,
    pub removal_shift: i64,
    pub dephasing: f64,
    pub detection_error: f64,
    pub prep_error: f64,
    pub excitation_prob: f64,
    pub shots_per_arm: usize,
    pub seed: u64,
    pub step_duration_us: f64,
    pub dephasing_placement: DephasingPlacement,
    pub right_arm_variant: RightArmVariant,
    pub bootstrap_resamples: usize,
    pub monte_carlo_draws: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            steps: 4,
            theta: std::f64::consts::FRAC_PI_2,
            t2_step: T2_STEP,
            q2_scheme: QScheme::ConstantOne,
            removal_shift: RemovalProtocol::DEFAULT_SHIFT,
            dephasing: 0.0,
            detection_error: 0.0,
            prep_error: 0.0,
            excitation_prob: 0.0,
            shots_per_arm: 404,
            seed: 0,
            step_duration_us: 26.0,
            dephasing_placement: DephasingPlacement::AfterStep,
            right_arm_variant: RightArmVariant::Mirror,
            bootstrap_resamples: 10_000,
            monte_carlo_draws: 10_000,
        }
    }
}

impl ProtocolConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ProtocolConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dephasing", self.dephasing),
            ("detection error", self.detection_error),
            ("preparation error", self.prep_error),
            ("excitation probability", self.excitation_prob),
        ] {
            check_unit(name, v)?;
        }
        if self.t2_step != T2_STEP {
            return Err(Error::invalid(
                "t2_step",
                format!(
                    "only a measurement after step {T2_STEP} is supported, got {}",
                    self.t2_step
                ),
            ));
        }
        if self.t2_step >= self.steps {
            return Err(Error::invalid(
                "steps",
                format!(
                    "t2_step {} must precede the last step {}",
                    self.t2_step, self.steps
                ),
            ));
        }
        if !(self.step_duration_us > 0.0) {
            return Err(Error::invalid("step_duration_us", "must be positive"));
        }
        if self.shots_per_arm == 0 {
            return Err(Error::invalid("shots_per_arm", "must be positive"));
        }
        if self.bootstrap_resamples < 1000 {
            return Err(Error::invalid(
                "bootstrap_resamples",
                "at least 1000 resamples",
            ));
        }
        if self.monte_carlo_draws == 0 {
            return Err(Error::invalid("monte_carlo_draws", "must be positive"));
        }
        self.walk_spec()?;
        for arm in [Arm::ConditionOnLeft, Arm::ConditionOnRight] {
            self.removal_protocol(arm)
                .validate(self.steps - self.t2_step)?;
        }
        Ok(())
    }

    pub fn coin(&self) -> Result<CoinParams> {
        CoinParams::new(self.theta)
    }

    pub fn walk_spec(&self) -> Result<WalkSpec> {
        Ok(WalkSpec::new(self.steps, self.coin()?, self.dephasing)?
            .with_placement(self.dephasing_placement))
    }

    pub fn removal_protocol(&self, arm: Arm) -> RemovalProtocol {
        RemovalProtocol::new(arm)
            .with_shift(self.removal_shift)
            .with_excitation(self.excitation_prob)
            .with_variant(self.right_arm_variant)
    }

    pub fn noise(&self) -> NoiseParams {
        NoiseParams {
            detection_error: self.detection_error,
            prep_error: self.prep_error,
        }
    }

    /// Walk duration in seconds.
    pub fn total_duration_s(&self) -> f64 {
        self.steps as f64 * self.step_duration_us * 1e-6
    }
}
