//! Parameter update rules. Neither rule applies bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear from `lr` at step 0 down to zero at step `T`.
    LinearDecay,
}

impl LrSchedule {
    pub fn lr_at(&self, base: f64, t: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::LinearDecay => base * (1.0 - t as f64 / total.max(1) as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdamMode {
    /// Elementwise `m / (sqrt(v) + ε)`.
    #[default]
    Practical,
    /// Scalar normalizer `1 / sqrt(max_t ‖V_t‖_max + ε)`.
    Amsgrad,
}

fn default_beta() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.99
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Msgd {
        lr: f64,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        schedule: LrSchedule,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        epsilon: f64,
        #[serde(default)]
        mode: AdamMode,
        #[serde(default)]
        schedule: LrSchedule,
    },
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match self {
            OptimizerConfig::Msgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => *lr,
        }
    }

    pub fn with_lr(mut self, new_lr: f64) -> Self {
        match &mut self {
            OptimizerConfig::Msgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => *lr = new_lr,
        }
        self
    }

    pub fn schedule(&self) -> LrSchedule {
        match self {
            OptimizerConfig::Msgd { schedule, .. } | OptimizerConfig::Adam { schedule, .. } => {
                *schedule
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, b: f64| {
            if (0.0..1.0).contains(&b) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {b}")))
            }
        };
        if !(self.lr() > 0.0 && self.lr().is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr()
            )));
        }
        match *self {
            OptimizerConfig::Msgd { beta, .. } => unit("beta", beta),
            OptimizerConfig::Adam {
                beta1,
                beta2,
                epsilon,
                ..
            } => {
                unit("beta1", beta1)?;
                unit("beta2", beta2)?;
                if epsilon > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("epsilon must be positive".into()))
                }
            }
        }
    }

    /// Fresh state for parameters of the given shape.
    pub fn build(&self, rows: usize, cols: usize) -> Optimizer {
        match *self {
            OptimizerConfig::Msgd { lr, beta, .. } => {
                Optimizer::Msgd(MsgdState::new(rows, cols, beta, lr))
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
                mode,
                ..
            } => Optimizer::Adam(AdamState::new(rows, cols, beta1, beta2, lr, epsilon, mode)),
        }
    }
}

fn shape_check(x: &DenseMatrix, g: &DenseMatrix) -> Result<()> {
    if x.shape() != g.shape() {
        return Err(Error::DimensionMismatch {
            op: "optimizer_step",
            left: x.shape(),
            right: g.shape(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsgdState {
    pub m: DenseMatrix,
    pub beta: f64,
    pub gamma: f64,
}

impl MsgdState {
    pub fn new(rows: usize, cols: usize, beta: f64, gamma: f64) -> Self {
        Self {
            m: DenseMatrix::zeros(rows, cols),
            beta,
            gamma,
        }
    }

    /// `M ← βM + (1−β)Ĝ`, returns `X − γM`.
    pub fn step(&mut self, x: &DenseMatrix, g_hat: &DenseMatrix) -> Result<DenseMatrix> {
        shape_check(x, g_hat)?;
        shape_check(&self.m, g_hat)?;
        let (b, gamma) = (self.beta, self.gamma);
        let mut out = x.clone();
        for ((m, g), o) in self
            .m
            .as_mut_slice()
            .iter_mut()
            .zip(g_hat.as_slice())
            .zip(out.as_mut_slice())
        {
            *m = b * *m + (1.0 - b) * g;
            *o -= gamma * *m;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: DenseMatrix,
    pub v: DenseMatrix,
    pub v_tilde: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub mode: AdamMode,
}

impl AdamState {
    pub fn new(
        rows: usize,
        cols: usize,
        beta1: f64,
        beta2: f64,
        gamma: f64,
        epsilon: f64,
        mode: AdamMode,
    ) -> Self {
        Self {
            m: DenseMatrix::zeros(rows, cols),
            v: DenseMatrix::zeros(rows, cols),
            v_tilde: 0.0,
            beta1,
            beta2,
            gamma,
            epsilon,
            mode,
        }
    }

    /// Current scalar normalizer `1/sqrt(Ṽ + ε)` (amsgrad mode only).
    pub fn normalizer(&self) -> Option<f64> {
        match self.mode {
            AdamMode::Amsgrad => Some(1.0 / (self.v_tilde + self.epsilon).sqrt()),
            AdamMode::Practical => None,
        }
    }

    pub fn step(&mut self, x: &DenseMatrix, g_hat: &DenseMatrix) -> Result<DenseMatrix> {
        shape_check(x, g_hat)?;
        shape_check(&self.m, g_hat)?;
        let (b1, b2) = (self.beta1, self.beta2);
        for ((m, v), g) in self
            .m
            .as_mut_slice()
            .iter_mut()
            .zip(self.v.as_mut_slice())
            .zip(g_hat.as_slice())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
        }
        let mut out = x.clone();
        match self.mode {
            AdamMode::Practical => {
                for ((o, m), v) in out
                    .as_mut_slice()
                    .iter_mut()
                    .zip(self.m.as_slice())
                    .zip(self.v.as_slice())
                {
                    *o -= self.gamma * m / (v.sqrt() + self.epsilon);
                }
            }
            AdamMode::Amsgrad => {
                self.v_tilde = self.v_tilde.max(self.v.max_entry());
                let scale = self.gamma / (self.v_tilde + self.epsilon).sqrt();
                for (o, m) in out.as_mut_slice().iter_mut().zip(self.m.as_slice()) {
                    *o -= scale * m;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Msgd(MsgdState),
    Adam(AdamState),
}

impl Optimizer {
    pub fn step(&mut self, x: &DenseMatrix, g_hat: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Optimizer::Msgd(s) => s.step(x, g_hat),
            Optimizer::Adam(s) => s.step(x, g_hat),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            Optimizer::Msgd(s) => s.gamma = lr,
            Optimizer::Adam(s) => s.gamma = lr,
        }
    }

    /// Zeroes the moment estimates (GaLore period boundaries).
    pub fn reset_moments(&mut self) {
        match self {
            Optimizer::Msgd(s) => s.m.fill(0.0),
            Optimizer::Adam(s) => {
                s.m.fill(0.0);
                s.v.fill(0.0);
                s.v_tilde = 0.0;
            }
        }
    }

    pub fn moments_norm_sq(&self) -> f64 {
        match self {
            Optimizer::Msgd(s) => s.m.frobenius_norm_sq(),
            Optimizer::Adam(s) => s.m.frobenius_norm_sq() + s.v.frobenius_norm_sq(),
        }
    }

    pub fn amsgrad_normalizer(&self) -> Option<f64> {
        match self {
            Optimizer::Adam(s) => s.normalizer(),
            Optimizer::Msgd(_) => None,
        }
    }

    /// Bitwise state comparison for replica checks.
    pub fn bit_eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Optimizer::Msgd(a), Optimizer::Msgd(b)) => a.m.bit_eq(&b.m),
            (Optimizer::Adam(a), Optimizer::Adam(b)) => {
                a.m.bit_eq(&b.m) && a.v.bit_eq(&b.v) && a.v_tilde.to_bits() == b.v_tilde.to_bits()
            }
            _ => false,
        }
    }
}
