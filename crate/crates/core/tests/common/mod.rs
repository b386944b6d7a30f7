//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::f64::consts::TAU;

use ndarray::{Array1, Array2};
use rand::Rng;

use circaphase::phase::wrap_angle;
use circaphase::pretrain::EncoderStack;
use circaphase::tensornet::{Activation, DenseLayer};
use circaphase::{seed, CosinorParams, FineTuneModel, NormalizedMatrix, OmegaMode, Regularizer};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
// Gradients smaller than this are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ABS_FLOOR)
}

pub fn random_layer<R: Rng>(
    rng: &mut R,
    in_dim: usize,
    out_dim: usize,
    act: Activation,
) -> DenseLayer {
    let w = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-0.9..0.9));
    let b = Array1::from_shape_simple_fn(out_dim, || rng.random_range(-0.3..0.3));
    DenseLayer::new(w, b, act).unwrap()
}

// Plain loops: tanh hidden layers, identity code, atan2 phase, cosine fit.
pub fn naive_phases(layers: &[DenseLayer], x: &Array2<f64>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            let mut h: Vec<f64> = x.row(i).to_vec();
            for l in layers {
                let mut out = vec![0.0; l.weights.nrows()];
                for (o, v) in out.iter_mut().enumerate() {
                    let mut z = l.biases[o];
                    for (k, hk) in h.iter().enumerate() {
                        z += l.weights[[o, k]] * hk;
                    }
                    *v = match l.activation {
                        Activation::Tanh => z.tanh(),
                        Activation::Identity => z,
                    };
                }
                h = out;
            }
            h[0].atan2(h[1]).rem_euclid(TAU)
        })
        .collect()
}

pub fn naive_loss(model: &FineTuneModel, x: &Array2<f64>) -> f64 {
    let phases = naive_phases(&model.encoder.layers, x);
    let (m, n) = x.dim();
    let mut fit = 0.0;
    for i in 0..m {
        for p in 0..n {
            let c = &model.cosinor[p];
            let r = x[[i, p]] - (c.mesor + c.amplitude * (c.omega * phases[i] + c.acrophase).cos());
            fit += r.abs().powf(model.q_norm);
        }
    }
    fit /= (m * n) as f64;
    let reg = match model.regularizer {
        Regularizer::None => 0.0,
        Regularizer::L1 => {
            model
                .encoder
                .layers
                .iter()
                .flat_map(|l| l.weights.iter())
                .map(|w| w.abs())
                .sum::<f64>()
                + model
                    .cosinor
                    .iter()
                    .map(|c| c.mesor.abs() + c.amplitude.abs())
                    .sum::<f64>()
        }
        Regularizer::L2 => {
            model
                .encoder
                .layers
                .iter()
                .flat_map(|l| l.weights.iter())
                .map(|w| w * w)
                .sum::<f64>()
                + model
                    .cosinor
                    .iter()
                    .map(|c| c.mesor * c.mesor + c.amplitude * c.amplitude)
                    .sum::<f64>()
        }
        Regularizer::Tv => {
            // Sorted consecutive gaps telescope to max − min.
            let max = phases.iter().cloned().fold(f64::MIN, f64::max);
            let min = phases.iter().cloned().fold(f64::MAX, f64::min);
            max - min
        }
    };
    fit + model.lambda * reg
}

pub struct Instance {
    pub model: FineTuneModel,
    pub data: NormalizedMatrix,
}

// Rejects draws where a finite difference could straddle a kink: residuals
// near zero under L1, phases near the 0/2π seam, near-tied phase extremes
// under TV.
pub fn well_posed(inst: &Instance) -> bool {
    let x = inst.data.values();
    let phases = naive_phases(&inst.model.encoder.layers, x);
    if phases.iter().any(|&p| !(1e-3..=TAU - 1e-3).contains(&p)) {
        return false;
    }
    if inst.model.q_norm == 1.0 {
        for (i, &phi) in phases.iter().enumerate() {
            for (p, c) in inst.model.cosinor.iter().enumerate() {
                if (x[[i, p]] - c.evaluate(phi)).abs() < 1e-3 {
                    return false;
                }
            }
        }
    }
    if inst.model.regularizer == Regularizer::Tv {
        let mut s = phases.clone();
        s.sort_by(f64::total_cmp);
        if s[1] - s[0] < 1e-3 || s[s.len() - 1] - s[s.len() - 2] < 1e-3 {
            return false;
        }
    }
    true
}

pub fn draw_instance(k: u64) -> Instance {
    let mut attempt = 0;
    loop {
        let mut rng = seed::rng(seed::derive_index(
            seed::derive(11, "gradcheck"),
            k * 1000 + attempt,
        ));
        attempt += 1;
        let m = rng.random_range(4..9);
        let n = rng.random_range(3..7);
        let hidden = rng.random_range(2..5);
        let layers = vec![
            random_layer(&mut rng, n, hidden, Activation::Tanh),
            random_layer(&mut rng, hidden, 2, Activation::Identity),
        ];
        let learn_omega = k % 2 == 1;
        let cosinor = (0..n)
            .map(|_| CosinorParams {
                mesor: rng.random_range(-0.5..0.5),
                amplitude: rng.random_range(0.2..1.5),
                acrophase: rng.random_range(0.0..TAU),
                omega: if learn_omega {
                    rng.random_range(0.6..2.5)
                } else {
                    1.0
                },
            })
            .collect();
        let mut model = FineTuneModel::new(EncoderStack { layers }, cosinor);
        model.q_norm = [1.0, 1.5, 2.0][(k % 3) as usize];
        model.regularizer = [
            Regularizer::None,
            Regularizer::L1,
            Regularizer::L2,
            Regularizer::Tv,
        ][(k % 4) as usize];
        model.lambda = if model.regularizer == Regularizer::None {
            0.0
        } else {
            0.05
        };
        if learn_omega {
            model.omega_mode = OmegaMode::learnable();
        }
        let values = Array2::from_shape_simple_fn((m, n), || rng.random_range(-2.0..2.0));
        let ids = |prefix: &str, k: usize| (0..k).map(|i| format!("{prefix}{i}")).collect();
        let data = NormalizedMatrix::from_standardized(ids("s", m), ids("p", n), values).unwrap();
        let inst = Instance { model, data };
        if well_posed(&inst) {
            return inst;
        }
    }
}

pub fn sse(x: &[f64], phases: &[f64], l: f64, a: f64, psi: f64) -> f64 {
    x.iter()
        .zip(phases)
        .map(|(v, p)| (v - l - a * (p + psi).cos()).powi(2))
        .sum()
}

/// Coarse-to-fine grid search over (L, A ≥ 0, ψ). Each level centres a
/// 21-point grid per axis on the incumbent and shrinks the steps tenfold.
pub fn grid_oracle(x: &[f64], phases: &[f64]) -> (f64, f64, f64) {
    let lo = x.iter().cloned().fold(f64::MAX, f64::min);
    let hi = x.iter().cloned().fold(f64::MIN, f64::max);
    let span = hi - lo;
    let mut best = (f64::MAX, 0.0, 0.0, 0.0);
    // Level 0 covers the whole box.
    let (nl, na, np) = (61, 61, 120);
    for i in 0..nl {
        let l = lo + span * i as f64 / (nl - 1) as f64;
        for j in 0..na {
            let a = span * j as f64 / (na - 1) as f64;
            for k in 0..np {
                let psi = TAU * k as f64 / np as f64;
                let e = sse(x, phases, l, a, psi);
                if e < best.0 {
                    best = (e, l, a, psi);
                }
            }
        }
    }
    let mut step = (
        span / (nl - 1) as f64,
        span / (na - 1) as f64,
        TAU / np as f64,
    );
    while step.0 > 1e-6 || step.1 > 1e-6 || step.2 > 1e-5 {
        let (_, l0, a0, p0) = best;
        for i in -10..=10 {
            let l = l0 + step.0 * i as f64 / 10.0;
            for j in -10..=10 {
                let a = (a0 + step.1 * j as f64 / 10.0).max(0.0);
                for k in -10..=10 {
                    let psi = p0 + step.2 * k as f64 / 10.0;
                    let e = sse(x, phases, l, a, psi);
                    if e < best.0 {
                        best = (e, l, a, psi);
                    }
                }
            }
        }
        step = (step.0 / 10.0, step.1 / 10.0, step.2 / 10.0);
    }
    (best.1, best.2, wrap_angle(best.3))
}

pub fn circ_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

/// Worst relative error between the analytic fine-tuning gradient and
/// central differences of [`naive_loss`], with the offending parameter index.
pub fn worst_gradient_error(inst: &Instance) -> (f64, usize) {
    let learn_omega = inst.model.omega_mode.is_learnable();
    let (_, grad) = circaphase::finetune::loss_and_gradient(&inst.model, &inst.data).unwrap();
    let analytic = grad.flatten(learn_omega);
    let base = inst.model.flatten();
    assert_eq!(analytic.len(), base.len());
    let mut probe = inst.model.clone();
    let mut worst = (0.0, 0);
    for j in 0..base.len() {
        let mut v = base.clone();
        v[j] = base[j] + H;
        probe.unflatten(&v);
        let up = naive_loss(&probe, inst.data.values());
        v[j] = base[j] - H;
        probe.unflatten(&v);
        let down = naive_loss(&probe, inst.data.values());
        let e = rel_err(analytic[j], (up - down) / (2.0 * H));
        if e > worst.0 {
            worst = (e, j);
        }
    }
    worst
}
