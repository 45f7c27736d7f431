//! Synthetic data with a known ground-truth metric, plus generators for
//! defendant/survey CSV files in the default schema. Used by tests, benches
//! and for trying the CLI without the real data.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::types::{LabeledDataset, RatingScale};

/// Standard normal points rated by their ground-truth distance to `anchor`.
///
/// Distances `sqrt(sum_k w_k (x_k - anchor_k)^2)` are binned into `levels`
/// equal-count bins, closest bin first (rating 1).
pub fn anchor_binned(n: usize, weights: &[f64], anchor: &[f64], levels: i32, seed: u64) -> Result<LabeledDataset> {
    assert_eq!(weights.len(), anchor.len(), "weights and anchor differ in length");
    let d = weights.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let dist: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(anchor)
                .zip(weights)
                .map(|((x, a), w)| w * (x - a) * (x - a))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = 1 + (rank * levels as usize / n) as i32;
    }
    LabeledDataset::from_rows(
        rows,
        labels,
        RatingScale::new(1, levels)?,
        (0..d).map(|k| format!("x{k}")).collect(),
        format!("synthetic(seed={seed})"),
    )
}

const CHARGES: [&str; 6] = ["violent", "property", "drug", "public_order", "traffic", "other"];

/// Defendant table in the default schema. The decile score is a noisy
/// function of age and priors, so learned metrics have something to find.
pub fn defendants_csv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(
        "id,age,sex,juv_fel_count,juv_misd_count,priors_count,c_charge_degree,charge_category,race,compas_decile\n",
    );
    for id in 0..n {
        let age: i32 = rng.random_range(18..70);
        let priors: i32 = rng.random_range(0..15);
        let juv_fel: i32 = if rng.random_bool(0.1) {
            rng.random_range(1..4)
        } else {
            0
        };
        let juv_misd: i32 = if rng.random_bool(0.15) {
            rng.random_range(1..4)
        } else {
            0
        };
        let sex = if rng.random_bool(0.2) { "Female" } else { "Male" };
        let degree = if rng.random_bool(0.6) { "F" } else { "M" };
        let charge = CHARGES[rng.random_range(0..CHARGES.len())];
        let race = ["African-American", "Caucasian", "Hispanic", "Other"][rng.random_range(0..4)];
        let noise: f64 = StandardNormal.sample(&mut rng);
        let risk = 5.5 - 0.12 * f64::from(age - 35) + 0.45 * f64::from(priors) + f64::from(juv_fel) + noise;
        let decile = risk.round().clamp(1.0, 10.0) as i32;
        writeln!(
            out,
            "{id},{age},{sex},{juv_fel},{juv_misd},{priors},{degree},{charge},{race},{decile}"
        )
        .unwrap();
    }
    out
}

/// Survey judgments by `respondents` raters over the first `defendants` ids of
/// a [`defendants_csv`] table generated with the same `seed`.
pub fn survey_csv(respondents: usize, defendants: usize, seed: u64) -> String {
    let table = defendants_csv(defendants, seed);
    let deciles: Vec<i32> = table
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = String::from("respondent_id,defendant_id,q1_recidivism,q2_bail,q3_confidence,two_year_recid\n");
    for r in 1..=respondents {
        let threshold: i32 = rng.random_range(3..=5);
        for (id, &decile) in deciles.iter().enumerate() {
            let jitter: i32 = rng.random_range(-1..=1);
            let q1 = ((decile + 1) / 2 + jitter).clamp(1, 5);
            let bail = q1 < threshold || (q1 == threshold && rng.random_bool(0.5));
            let q3: i32 = rng.random_range(1..=5);
            let recid = rng.random_bool(f64::from(decile) / 12.0);
            writeln!(
                out,
                "{r},{id},{q1},{},{q3},{}",
                if bail { "yes" } else { "no" },
                u8::from(recid)
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{read_defendants, read_survey, FeatureSchema};

    #[test]
    fn anchor_bins_are_balanced() {
        let ds = anchor_binned(200, &[4.0, 1.0, 1.0, 0.0, 0.0, 0.0], &[2.0; 6], 5, 1).unwrap();
        for level in 1..=5 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == level).count(), 40);
        }
    }

    #[test]
    fn generated_csv_parses() {
        let ds = read_defendants(
            defendants_csv(50, 3).as_bytes(),
            &FeatureSchema::default_compas(true),
            "gen",
        )
        .unwrap();
        assert_eq!(ds.len(), 50);
        let recs = read_survey(survey_csv(3, 20, 3).as_bytes(), "gen").unwrap();
        assert_eq!(recs.len(), 60);
    }
}
