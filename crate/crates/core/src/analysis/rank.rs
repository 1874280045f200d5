use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SplitLabel;

/// Relative change (percent) of each split of one operator, lowest split
/// first, with the best split resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpRankRow {
    pub op_name: String,
    pub changes: Vec<f64>,
    pub best_split: SplitLabel,
    pub best_value: f64,
}

impl OpRankRow {
    /// Ties between splits go to the lower one.
    pub fn new(op_name: impl Into<String>, changes: Vec<f64>) -> Result<Self> {
        let op_name = op_name.into();
        if changes.is_empty() {
            return Err(Error::Invalid(format!("operator {op_name:?} has no split results")));
        }
        if let Some(v) = changes.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("operator {op_name:?} has a non-finite change ({v})")));
        }
        let mut best = 0;
        for (i, v) in changes.iter().enumerate().skip(1) {
            if *v > changes[best] {
                best = i;
            }
        }
        Ok(Self {
            best_split: SplitLabel::for_bucket(best, changes.len()),
            best_value: changes[best],
            op_name,
            changes,
        })
    }

    /// Three-split row in table order.
    pub fn tertiles(op_name: impl Into<String>, low: f64, mid: f64, high: f64) -> Result<Self> {
        Self::new(op_name, vec![low, mid, high])
    }

    pub fn change(&self, label: SplitLabel) -> Option<f64> {
        (0..self.changes.len())
            .find(|&i| SplitLabel::for_bucket(i, self.changes.len()) == label)
            .map(|i| self.changes[i])
    }
}

/// Descending by best value; equal values fall back to operator name.
pub fn rank_ops(mut rows: Vec<OpRankRow>) -> Result<Vec<OpRankRow>> {
    if rows.is_empty() {
        return Err(Error::Invalid("cannot rank an empty table".into()));
    }
    rows.sort_by(|a, b| match b.best_value.total_cmp(&a.best_value) {
        Ordering::Equal => a.op_name.cmp(&b.op_name),
        o => o,
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn image_to_text_top_three() {
        let rows = vec![
            OpRankRow::tertiles("LanguageScore", 49.90, 0.85, -1.43).unwrap(),
            OpRankRow::tertiles("ImageNSFW", 7.13, 18.44, 66.38).unwrap(),
            OpRankRow::tertiles("TextAction", 59.90, 0.29, -2.05).unwrap(),
        ];
        let ranked = rank_ops(rows).unwrap();
        let got: Vec<_> = ranked.iter().map(|r| (r.op_name.as_str(), r.best_split)).collect();
        assert_eq!(
            got,
            [
                ("ImageNSFW", SplitLabel::High),
                ("TextAction", SplitLabel::Low),
                ("LanguageScore", SplitLabel::Low)
            ]
        );
        assert_eq!(ranked[0].best_value, 66.38);
    }

    #[test]
    fn single_row_and_empty() {
        assert_eq!(rank_ops(vec![OpRankRow::new("a", vec![1.0]).unwrap()]).unwrap().len(), 1);
        assert!(rank_ops(vec![]).is_err());
    }

    #[test]
    fn ties() {
        let r = OpRankRow::tertiles("x", 1.0, 1.0, 0.5).unwrap();
        assert_eq!(r.best_split, SplitLabel::Low);
        let r = OpRankRow::tertiles("x", 0.0, 2.0, 2.0).unwrap();
        assert_eq!(r.best_split, SplitLabel::Mid);
        let ranked = rank_ops(vec![
            OpRankRow::new("b", vec![0.44]).unwrap(),
            OpRankRow::new("a", vec![0.44]).unwrap(),
        ])
        .unwrap();
        assert_eq!(ranked[0].op_name, "a");
    }

    #[test]
    fn change_lookup() {
        let r = OpRankRow::tertiles("x", 1.0, 2.0, 3.0).unwrap();
        assert_eq!(r.change(SplitLabel::Mid), Some(2.0));
        assert_eq!(r.change(SplitLabel::Random), None);
    }

    proptest! {
        #[test]
        fn permutation_and_idempotent(values in prop::collection::vec((-50i32..50, -50i32..50, -50i32..50), 1..20)) {
            let rows: Vec<_> = values
                .iter()
                .enumerate()
                .map(|(i, (a, b, c))| OpRankRow::tertiles(format!("op{i}"), *a as f64, *b as f64, *c as f64).unwrap())
                .collect();
            let ranked = rank_ops(rows.clone()).unwrap();
            let mut names: Vec<_> = ranked.iter().map(|r| r.op_name.clone()).collect();
            names.sort();
            let mut orig: Vec<_> = rows.iter().map(|r| r.op_name.clone()).collect();
            orig.sort();
            prop_assert_eq!(names, orig);
            prop_assert_eq!(rank_ops(ranked.clone()).unwrap(), ranked.clone());
            for w in ranked.windows(2) {
                prop_assert!(w[0].best_value >= w[1].best_value);
            }
            for r in &ranked {
                prop_assert_eq!(r.best_value, r.changes.iter().cloned().fold(f64::MIN, f64::max));
            }
        }
    }
}
