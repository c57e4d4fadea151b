use std::fmt::Write;

use super::loss::ClassWeights;
use super::metrics::evaluate;
use super::model::Model;
use super::spec::ArchitectureSpec;
use super::train::{train, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::KernelMask;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mask: KernelMask,
    pub params: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let mut s = String::from("Convolution kernel\tParams\tAccuracy\n");
        for r in &self.rows {
            writeln!(s, "{}\t{}\t{:.4}", r.mask.pretty(), r.params, r.accuracy).unwrap();
        }
        s
    }

    pub fn get(&self, mask: KernelMask) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mask == mask)
    }
}

/// Trains one model per mask with the same seed and recipe and reports test
/// accuracy. `on_row` sees each row as soon as it is finished.
pub fn ablation_run(
    base: &ArchitectureSpec,
    masks: &[KernelMask],
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<AblationReport> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("no kernel masks given".into()));
    }
    let mut rows = Vec::with_capacity(masks.len());
    for &mask in masks {
        let spec = ArchitectureSpec {
            mask,
            ..base.clone()
        };
        let model = Model::new(&spec, config.seed)?;
        let params = model.param_count();
        let (mut t, _) = train(model, train_set, None, config, None)?;
        let weights = ClassWeights::uniform(spec.num_classes);
        let acc = evaluate(&mut t.model, test_set, config.batch_size, &weights)?.accuracy;
        let row = AblationRow {
            mask,
            params,
            accuracy: acc,
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(AblationReport { rows })
}
