//! First-order optimizers over flat parameter vectors.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
    /// Learning-rate-free SGD driven by a running distance estimate.
    DAdaptSgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::SgdMomentum => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::DAdaptSgd => "dadapt",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" | "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            "adam" => Ok(OptimizerKind::Adam),
            "dadapt" | "dadapt_sgd" => Ok(OptimizerKind::DAdaptSgd),
            _ => Err(Error::InvalidArgument(format!(
                "unknown optimizer {s:?} (expected sgd, adam or dadapt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Step size for SGD and Adam; ignored by D-Adaptation.
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Initial distance estimate for D-Adaptation.
    pub d0: f64,
    /// Largest factor by which the distance estimate may grow in one step.
    pub growth_rate: f64,
}

impl OptimizerConfig {
    pub fn sgd() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            learning_rate: 0.1,
            momentum: 0.85,
            ..Self::dadapt()
        }
    }

    pub fn adam() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 0.001,
            momentum: 0.0,
            ..Self::dadapt()
        }
    }

    pub fn dadapt() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::DAdaptSgd,
            learning_rate: 1.0,
            momentum: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            d0: 1e-6,
            growth_rate: 2.0,
        }
    }

    pub fn for_kind(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::SgdMomentum => Self::sgd(),
            OptimizerKind::Adam => Self::adam(),
            OptimizerKind::DAdaptSgd => Self::dadapt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.d0 > 0.0
            && self.growth_rate >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid optimizer config {self:?}"
            )))
        }
    }
}

/// Mutable optimizer state sized to one flat parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    steps: usize,
    // sgd velocity / adam first moment / dadapt weighted gradient sum
    first: Vec<f64>,
    // adam second moment
    second: Vec<f64>,
    d: f64,
    g0_norm: f64,
    numerator: f64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Self {
        let second = if config.kind == OptimizerKind::Adam {
            vec![0.0; n_params]
        } else {
            Vec::new()
        };
        OptimizerState {
            config,
            steps: 0,
            first: vec![0.0; n_params],
            second,
            d: config.d0,
            g0_norm: 0.0,
            numerator: 0.0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Current D-Adaptation distance estimate.
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Applies one update in place. Non-finite gradients leave `params`
    /// untouched and return an error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer sized for {} parameters, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                stage: "optimizer",
                epoch: self.steps,
            });
        }
        match self.config.kind {
            OptimizerKind::SgdMomentum => self.sgd_step(params, grads),
            OptimizerKind::Adam => self.adam_step(params, grads),
            OptimizerKind::DAdaptSgd => self.dadapt_step(params, grads),
        }
        self.steps += 1;
        Ok(())
    }

    fn sgd_step(&mut self, params: &mut [f64], grads: &[f64]) {
        let OptimizerConfig {
            learning_rate: lr,
            momentum: mu,
            ..
        } = self.config;
        for ((p, v), g) in params.iter_mut().zip(&mut self.first).zip(grads) {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
    }

    fn adam_step(&mut self, params: &mut [f64], grads: &[f64]) {
        let OptimizerConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
            ..
        } = self.config;
        let t = (self.steps + 1) as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, m), v), g) in params
            .iter_mut()
            .zip(&mut self.first)
            .zip(&mut self.second)
            .zip(grads)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    // Dual-averaging form of D-Adaptation: steps λ_k = d_k / ‖g_0‖, the
    // weighted gradient sum `s` and the running numerator Σ λ_k⟨g_k, s_k⟩
    // give a lower bound on the distance to the solution, which is never
    // allowed to shrink.
    fn dadapt_step(&mut self, params: &mut [f64], grads: &[f64]) {
        if self.g0_norm == 0.0 {
            let g_norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if g_norm == 0.0 {
                return;
            }
            self.g0_norm = g_norm;
        }
        let lambda = self.d * self.config.learning_rate / self.g0_norm;
        let mut dot = 0.0;
        let mut s_sq = 0.0;
        for ((p, s), g) in params.iter_mut().zip(&mut self.first).zip(grads) {
            dot += g * *s;
            *s += lambda * g;
            s_sq += *s * *s;
            *p -= lambda * g;
        }
        self.numerator += lambda * dot;
        if s_sq > 0.0 {
            let d_hat = 2.0 * self.numerator / s_sq.sqrt();
            self.d = self.d.max(d_hat.min(self.d * self.config.growth_rate));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_momentum_hand_step() {
        let mut st = OptimizerState::new(OptimizerConfig::sgd(), 1);
        let mut p = [1.0];
        st.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
        assert_eq!(st.first[0], 1.0);
        st.step(&mut p, &[1.0]).unwrap();
        // v = 0.85 + 1
        assert!((p[0] - (0.9 - 0.1 * 1.85)).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut st = OptimizerState::new(OptimizerConfig::sgd(), 3);
        let mut p = [1.0, -2.0, 0.5];
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_first_step() {
        let mut st = OptimizerState::new(OptimizerConfig::adam(), 1);
        let mut p = [1.0];
        st.step(&mut p, &[1.0]).unwrap();
        let expect = 1.0 - 0.001 * (1.0 / (1.0 + 1e-8));
        assert!((p[0] - expect).abs() < 1e-15);
        assert!((p[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        for cfg in [
            OptimizerConfig::sgd(),
            OptimizerConfig::adam(),
            OptimizerConfig::dadapt(),
        ] {
            let mut st = OptimizerState::new(cfg, 2);
            let mut p = [1.0, 2.0];
            assert!(matches!(
                st.step(&mut p, &[f64::NAN, 0.0]),
                Err(Error::NonFinite { .. })
            ));
            assert_eq!(p, [1.0, 2.0]);
        }
    }

    #[test]
    fn dadapt_distance_grows_on_quadratic() {
        // f(x) = ½‖x − 3‖², far from the initial point
        let mut st = OptimizerState::new(OptimizerConfig::dadapt(), 4);
        let mut p = [0.0; 4];
        let mut last_d = st.d();
        for _ in 0..200 {
            let g: Vec<f64> = p.iter().map(|x| x - 3.0).collect();
            st.step(&mut p, &g).unwrap();
            assert!(st.d() >= last_d);
            last_d = st.d();
        }
        assert!(st.d() > 1e-3, "d stayed at {}", st.d());
        assert!(p.iter().all(|x| (x - 3.0).abs() < 0.5), "{p:?}");
    }

    #[test]
    fn shape_mismatch() {
        let mut st = OptimizerState::new(OptimizerConfig::adam(), 2);
        assert!(st.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "dadapt".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::DAdaptSgd
        );
        assert_eq!(OptimizerKind::Adam.to_string(), "adam");
        assert!("lbfgs".parse::<OptimizerKind>().is_err());
    }
}
