//! Fixtures shared by the benches: synthetic matrices at realistic sizes and
//! a pretrained model ready for fine-tuning.

use circaphase::pretrain::initial_cosinor;
use circaphase::{
    generate, pretrain_stack, zscore, FineTuneModel, NormalizedMatrix, PretrainConfig, SynthSpec,
};

pub struct Fixture {
    pub data: NormalizedMatrix,
    pub truth_hours: Vec<f64>,
}

/// Standardized synthetic matrix with 40% rhythmic proteins.
pub fn fixture(m: usize, n: usize, seed: u64) -> Fixture {
    let spec = SynthSpec {
        m,
        n,
        rhythmic_fraction: 0.4,
        amplitude_range: (0.5, 1.5),
        seed,
        ..Default::default()
    };
    let (matrix, truth) = generate(&spec).expect("valid synthetic spec");
    let (data, _) = zscore(&matrix).expect("standardizable matrix");
    Fixture {
        data,
        truth_hours: truth.sample_hours,
    }
}

/// Pretrained stack with initial cosinor parameters, as fine-tuning sees it.
pub fn pretrained(data: &NormalizedMatrix, seed: u64) -> FineTuneModel {
    let pre = pretrain_stack(data, &PretrainConfig::default(), seed).expect("pretraining runs");
    let fits = initial_cosinor(data, &pre.initial.phi0).expect("cosinor fits");
    FineTuneModel::new(pre.stack, fits.iter().map(|f| f.params).collect())
}
