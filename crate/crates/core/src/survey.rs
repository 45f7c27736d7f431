//! Descriptive tables over survey judgments: bail rate by predicted
//! recidivism level, and bail-decision accuracy split by confidence.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::{respondent_ids, SurveyRecord};
use crate::error::{Error, Result};
use crate::experiment::Summary;

pub const LEVEL_NAMES: [&str; 5] = [
    "Extremely Unlikely",
    "Unlikely",
    "Neither",
    "Likely",
    "Extremely Likely",
];

pub const DEFAULT_HIGH_CONFIDENCE: i32 = 4;

/// Bail-rate statistics across respondents for one prediction level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    /// Respondents with at least one judgment at this level.
    pub respondents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BailRateTable {
    /// Index 0 is prediction level 1.
    pub levels: [Option<LevelStats>; 5],
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

impl BailRateTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = LEVEL_NAMES.iter().map(|n| format!("{n:>20}")).collect();
        writeln!(out, "{:<10}{}", "Bail Rate", header.join("")).unwrap();
        for (label, pick) in [
            ("Mean", (|s: &LevelStats| s.mean) as fn(&LevelStats) -> f64),
            ("Max", |s| s.max),
            ("Min", |s| s.min),
        ] {
            let cells: Vec<String> = self
                .levels
                .iter()
                .map(|l| format!("{:>20}", l.as_ref().map_or("N/A".into(), |s| pct(pick(s)))))
                .collect();
            writeln!(out, "{:<10}{}", label, cells.join("")).unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,level_name,mean,max,min,respondents\n");
        for (i, l) in self.levels.iter().enumerate() {
            match l {
                Some(s) => writeln!(
                    out,
                    "{},{},{:?},{:?},{:?},{}",
                    i + 1,
                    LEVEL_NAMES[i],
                    s.mean,
                    s.max,
                    s.min,
                    s.respondents
                ),
                None => writeln!(out, "{},{},NA,NA,NA,0", i + 1, LEVEL_NAMES[i]),
            }
            .unwrap();
        }
        out
    }
}

/// Per-respondent bail rate at each prediction level, summarized by mean, max and min.
pub fn bail_rate_table(records: &[SurveyRecord]) -> Result<BailRateTable> {
    if records.is_empty() {
        return Err(Error::Config("no survey records".into()));
    }
    // respondent -> per level (granted, answered)
    let mut counts: BTreeMap<&str, [(usize, usize); 5]> = BTreeMap::new();
    for r in records {
        let level = (r.recidivism_prediction - 1) as usize;
        let slot = &mut counts.entry(&r.respondent_id).or_insert([(0, 0); 5])[level];
        slot.1 += 1;
        if r.bail_granted {
            slot.0 += 1;
        }
    }
    let ids = respondent_ids(records);
    let mut levels = [None; 5];
    for (level, out) in levels.iter_mut().enumerate() {
        let rates: Vec<f64> = ids
            .iter()
            .filter_map(|id| {
                let (granted, answered) = counts[id.as_str()][level];
                (answered > 0).then(|| granted as f64 / answered as f64)
            })
            .collect();
        if rates.is_empty() {
            continue;
        }
        *out = Some(LevelStats {
            mean: rates.iter().sum::<f64>() / rates.len() as f64,
            max: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: rates.iter().copied().fold(f64::INFINITY, f64::min),
            respondents: rates.len(),
        });
    }
    Ok(BailRateTable { levels })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RespondentAccuracy {
    pub respondent_id: String,
    pub overall: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub n_high: usize,
    pub n_low: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceAccuracyTable {
    /// Records with confidence at or above this value are high-confidence.
    pub threshold: i32,
    /// Mean and sample standard deviation across respondents.
    pub overall: Option<Summary>,
    pub high: Option<Summary>,
    pub low: Option<Summary>,
    pub respondents: Vec<RespondentAccuracy>,
}

impl ConfidenceAccuracyTable {
    pub fn to_text(&self) -> String {
        let fmt_summary = |s: &Option<Summary>| match s {
            Some(s) => format!("{:.3}±{:.3}", s.mean, s.std),
            None => "N/A".into(),
        };
        let fmt_opt = |v: Option<f64>| v.map_or("N/A".into(), |v| format!("{v:.3}"));
        let mut out = String::new();
        let mut header = format!("{:<16}{:>16}", "Accuracy", "All Judges");
        for r in &self.respondents {
            write!(header, "{:>10}", format!("J{}", r.respondent_id)).unwrap();
        }
        writeln!(out, "{header}").unwrap();
        let rows: [(&str, &Option<Summary>, fn(&RespondentAccuracy) -> Option<f64>); 3] = [
            ("Overall", &self.overall, |r| r.overall),
            ("High Confidence", &self.high, |r| r.high),
            ("Low Confidence", &self.low, |r| r.low),
        ];
        for (label, summary, pick) in rows {
            let mut line = format!("{:<16}{:>16}", label, fmt_summary(summary));
            for r in &self.respondents {
                write!(line, "{:>10}", fmt_opt(pick(r))).unwrap();
            }
            writeln!(out, "{line}").unwrap();
        }
        writeln!(
            out,
            "(high confidence: Q3 >= {}; ± is the sample standard deviation across respondents)",
            self.threshold
        )
        .unwrap();
        out
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("NA".into(), |v| format!("{v:?}"));
        let mut out = String::from("respondent,overall,high,low,n_high,n_low\n");
        let rows: [(&str, fn(&Summary) -> f64); 2] = [("all_mean", |s| s.mean), ("all_std", |s| s.std)];
        for (label, s) in rows {
            writeln!(
                out,
                "{label},{},{},{},,",
                opt(self.overall.as_ref().map(s)),
                opt(self.high.as_ref().map(s)),
                opt(self.low.as_ref().map(s))
            )
            .unwrap();
        }
        for r in &self.respondents {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.respondent_id,
                opt(r.overall),
                opt(r.high),
                opt(r.low),
                r.n_high,
                r.n_low
            )
            .unwrap();
        }
        out
    }
}

fn accuracy(records: &[&SurveyRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    Some(records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64)
}

/// Bail-decision accuracy per respondent, overall and split at `threshold` confidence.
pub fn confidence_accuracy_table(records: &[SurveyRecord], threshold: i32) -> Result<ConfidenceAccuracyTable> {
    if records.is_empty() {
        return Err(Error::Config("no survey records".into()));
    }
    let mut by_respondent: BTreeMap<&str, Vec<&SurveyRecord>> = BTreeMap::new();
    for r in records {
        by_respondent.entry(&r.respondent_id).or_default().push(r);
    }
    let respondents: Vec<RespondentAccuracy> = respondent_ids(records)
        .into_iter()
        .map(|id| {
            let recs = &by_respondent[id.as_str()];
            let (high, low): (Vec<&SurveyRecord>, Vec<&SurveyRecord>) =
                recs.iter().copied().partition(|r| r.confidence >= threshold);
            RespondentAccuracy {
                overall: accuracy(recs),
                high: accuracy(&high),
                low: accuracy(&low),
                n_high: high.len(),
                n_low: low.len(),
                respondent_id: id,
            }
        })
        .collect();
    let summarize = |pick: fn(&RespondentAccuracy) -> Option<f64>| {
        let values: Vec<f64> = respondents.iter().filter_map(pick).collect();
        Summary::of(&values)
    };
    Ok(ConfidenceAccuracyTable {
        threshold,
        overall: summarize(|r| r.overall),
        high: summarize(|r| r.high),
        low: summarize(|r| r.low),
        respondents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(resp: &str, def: usize, q1: i32, bail: bool, q3: i32, recid: bool) -> SurveyRecord {
        SurveyRecord {
            respondent_id: resp.into(),
            defendant_id: def.to_string(),
            recidivism_prediction: q1,
            bail_granted: bail,
            confidence: q3,
            ground_truth_recidivated: recid,
        }
    }

    #[test]
    fn all_bail_granted_gives_full_rates() {
        let recs: Vec<_> = (0..10)
            .map(|i| rec("1", i, (i % 5) as i32 + 1, true, 3, false))
            .collect();
        let t = bail_rate_table(&recs).unwrap();
        for l in t.levels.iter().flatten() {
            assert_eq!((l.mean, l.max, l.min), (1.0, 1.0, 1.0));
        }
        assert!(t.to_text().contains("100.0%"));
    }

    #[test]
    fn respondents_missing_a_level_are_excluded() {
        let recs = vec![
            rec("1", 0, 5, true, 3, false),
            rec("1", 1, 5, false, 3, false),
            rec("2", 0, 1, true, 3, false),
        ];
        let t = bail_rate_table(&recs).unwrap();
        let top = t.levels[4].unwrap();
        assert_eq!((top.mean, top.respondents), (0.5, 1));
        assert!(t.levels[2].is_none());
        assert!(bail_rate_table(&[]).is_err());
    }

    #[test]
    fn accuracy_strata() {
        let recs = vec![
            rec("1", 0, 3, true, 5, false),  // correct, high
            rec("1", 1, 3, true, 4, true),   // wrong, high
            rec("1", 2, 3, false, 4, true),  // correct, high
            rec("1", 3, 3, false, 5, false), // wrong, high
            rec("1", 4, 3, false, 1, true),  // correct, low
        ];
        let t = confidence_accuracy_table(&recs, 4).unwrap();
        let r = &t.respondents[0];
        assert_eq!(r.high, Some(0.5));
        assert_eq!(r.low, Some(1.0));
        assert_eq!(r.overall, Some(0.6));
        let t5 = confidence_accuracy_table(&recs, 6).unwrap();
        assert_eq!(t5.respondents[0].high, None);
        assert!(t5.high.is_none());
    }

    #[test]
    fn all_correct_is_perfect() {
        let recs: Vec<_> = (0..8)
            .map(|i| rec(&format!("{}", i % 2), i, 2, true, (i % 5) as i32 + 1, false))
            .collect();
        let t = confidence_accuracy_table(&recs, 4).unwrap();
        assert_eq!(t.overall.unwrap().mean, 1.0);
        assert_eq!(t.high.unwrap().mean, 1.0);
        assert_eq!(t.low.unwrap().mean, 1.0);
    }

    fn arb_records() -> impl Strategy<Value = Vec<SurveyRecord>> {
        prop::collection::vec((0u8..4, 1i32..=5, any::<bool>(), 1i32..=5, any::<bool>()), 1..80).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (resp, q1, bail, q3, recid))| rec(&resp.to_string(), i, q1, bail, q3, recid))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn rates_bounded_and_mean_between_extremes(recs in arb_records()) {
            let t = bail_rate_table(&recs).unwrap();
            for l in t.levels.iter().flatten() {
                prop_assert!(0.0 <= l.min && l.min <= l.mean + 1e-12 && l.mean <= l.max + 1e-12 && l.max <= 1.0);
            }
        }

        #[test]
        fn overall_is_weighted_combination_of_strata(recs in arb_records(), thr in 1i32..=6) {
            let t = confidence_accuracy_table(&recs, thr).unwrap();
            for r in &t.respondents {
                let total = (r.n_high + r.n_low) as f64;
                let combined = r.high.unwrap_or(0.0) * r.n_high as f64 / total
                    + r.low.unwrap_or(0.0) * r.n_low as f64 / total;
                prop_assert!((combined - r.overall.unwrap()).abs() < 1e-12);
            }
        }
    }
}
