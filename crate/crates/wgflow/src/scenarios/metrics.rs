//! Classifier quality metrics for strategic-classification scenarios.
//!
//! The decision rule is the logistic game's threshold: a point `z` is
//! predicted label-1 when its label-1 probability `1 - q(z, x)` is at least
//! one half, i.e. when `sum(z - x) <= 0`. Label-0 points live in the
//! population `rho`; label-1 points in the fixed ensemble `pi`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::ParticleEnsemble;

/// Counts-based classifier metrics; subgroup accuracies are reported only
/// when the subgroup is nonempty (no denominator, no metric).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierMetrics {
    /// (correct label-0 + correct label-1) / total.
    pub accuracy: f64,
    /// True positives over all predicted positives ("positive" = predicted
    /// label-1); absent when nothing is predicted positive.
    pub precision: Option<f64>,
    /// Accuracy over each named index subset of `rho`.
    pub subgroup_accuracies: BTreeMap<String, f64>,
}

/// Predicted label-1 iff `sum(z - x) <= 0` (the logistic rule
/// `1 - q >= 1/2`).
pub fn predicts_label1(z: &[f64], x: &[f64]) -> bool {
    let u: f64 = z.iter().sum::<f64>() - x.iter().sum::<f64>();
    u <= 0.0
}

/// Computes accuracy, precision, and subgroup accuracies for the threshold
/// rule at classifier location `x`. Subgroups are named index sets into
/// `rho_label0`.
pub fn classifier_metrics(
    rho_label0: &ParticleEnsemble,
    pi_label1: &ParticleEnsemble,
    x: &[f64],
    subgroups: &BTreeMap<String, Vec<usize>>,
) -> Result<ClassifierMetrics> {
    if rho_label0.is_empty() || pi_label1.is_empty() {
        return Err(Error::invalid("classifier_metrics needs nonempty ensembles"));
    }
    if rho_label0.dim() != x.len() || pi_label1.dim() != x.len() {
        return Err(Error::invalid("classifier_metrics dimension mismatch"));
    }
    // Label-0 points are correct when predicted 0; label-1 when predicted 1.
    let correct0 =
        (0..rho_label0.len()).filter(|&i| !predicts_label1(rho_label0.point(i), x)).count();
    let true_pos =
        (0..pi_label1.len()).filter(|&i| predicts_label1(pi_label1.point(i), x)).count();
    let false_pos = rho_label0.len() - correct0;
    let total = rho_label0.len() + pi_label1.len();
    let accuracy = (correct0 + true_pos) as f64 / total as f64;
    let precision = if true_pos + false_pos > 0 {
        Some(true_pos as f64 / (true_pos + false_pos) as f64)
    } else {
        None
    };
    let mut subgroup_accuracies = BTreeMap::new();
    for (name, idx) in subgroups {
        if idx.is_empty() {
            continue; // empty subgroup: metric absent, not an error
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rho_label0.len()) {
            return Err(Error::invalid(format!(
                "subgroup `{name}` index {bad} out of range for rho ({} points)",
                rho_label0.len()
            )));
        }
        let c = idx.iter().filter(|&&i| !predicts_label1(rho_label0.point(i), x)).count();
        subgroup_accuracies.insert(name.clone(), c as f64 / idx.len() as f64);
    }
    Ok(ClassifierMetrics { accuracy, precision, subgroup_accuracies })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(points: &[[f64; 1]]) -> ParticleEnsemble {
        ParticleEnsemble::equal_weights(points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    #[test]
    fn all_label0_on_correct_side_gives_full_class_contribution() {
        // Label-0 points all above the threshold (predicted 0): correct.
        let rho = ens(&[[1.0], [2.0], [3.0]]);
        let pi = ens(&[[-1.0], [-2.0]]);
        let m = classifier_metrics(&rho, &pi, &[0.0], &BTreeMap::new()).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, Some(1.0));
    }

    #[test]
    fn interleaved_equal_masses_score_half() {
        // Half of each class on the wrong side of the threshold.
        let rho = ens(&[[1.0], [-1.0]]);
        let pi = ens(&[[1.0], [-1.0]]);
        let m = classifier_metrics(&rho, &pi, &[0.0], &BTreeMap::new()).unwrap();
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn precision_counts_true_over_all_predicted_positives() {
        // Predicted positive: one label-1 (true) and one label-0 (false).
        let rho = ens(&[[-1.0], [2.0]]);
        let pi = ens(&[[-2.0], [3.0]]);
        let m = classifier_metrics(&rho, &pi, &[0.0], &BTreeMap::new()).unwrap();
        assert_eq!(m.precision, Some(0.5));
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn precision_absent_when_no_predicted_positives() {
        let rho = ens(&[[1.0]]);
        let pi = ens(&[[2.0]]);
        let m = classifier_metrics(&rho, &pi, &[0.0], &BTreeMap::new()).unwrap();
        assert_eq!(m.precision, None);
    }

    #[test]
    fn empty_subgroup_is_absent_not_error() {
        let rho = ens(&[[1.0], [-1.0]]);
        let pi = ens(&[[-2.0]]);
        let mut groups = BTreeMap::new();
        groups.insert("empty".to_string(), vec![]);
        groups.insert("low".to_string(), vec![1]);
        let m = classifier_metrics(&rho, &pi, &[0.0], &groups).unwrap();
        assert!(!m.subgroup_accuracies.contains_key("empty"));
        assert_eq!(m.subgroup_accuracies["low"], 0.0);
    }

    #[test]
    fn out_of_range_subgroup_index_is_error() {
        let rho = ens(&[[1.0]]);
        let pi = ens(&[[-1.0]]);
        let mut groups = BTreeMap::new();
        groups.insert("bad".to_string(), vec![7]);
        assert!(classifier_metrics(&rho, &pi, &[0.0], &groups).is_err());
    }
}
