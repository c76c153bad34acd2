//! Delegate election: each rule is anchored to one real training sample.

use crate::error::{Error, Result};
use crate::fuzzy_core::fcm::{fcm, FcmConfig, FcmState};

#[derive(Clone, Debug, PartialEq)]
pub struct Delegate {
    pub rule: usize,
    /// Index of the elected sample in the training set.
    pub source_id: usize,
    /// The sample's feature vector, stored so similarity at inference needs
    /// no corpus access.
    pub feature: Vec<f32>,
}

/// Clusters the features and elects, per cluster, the sample with maximal
/// membership (ties to the smaller sample index). Returns the delegates in
/// rule order alongside the clustering state.
pub fn elect_delegates(
    features: &[Vec<f32>],
    k: usize,
    seed: u64,
) -> Result<(Vec<Delegate>, FcmState)> {
    let state = fcm(features, FcmConfig::with_k(k), seed)?;
    let mut delegates = Vec::with_capacity(k);
    for rule in 0..k {
        let mut best = 0usize;
        let mut best_u = f64::NEG_INFINITY;
        for (j, row) in state.memberships.iter().enumerate() {
            if row[rule] > best_u {
                best_u = row[rule];
                best = j;
            }
        }
        delegates.push(Delegate { rule, source_id: best, feature: features[best].clone() });
    }
    Ok((delegates, state))
}

/// Expert-override path: pins delegates to the given sample ids, bypassing
/// clustering entirely.
pub fn delegates_from_ids(features: &[Vec<f32>], ids: &[usize]) -> Result<Vec<Delegate>> {
    if ids.is_empty() {
        return Err(Error::config("delegate override list is empty".to_string()));
    }
    ids.iter()
        .enumerate()
        .map(|(rule, &source_id)| {
            let feature = features
                .get(source_id)
                .ok_or(Error::IndexOutOfBounds {
                    axis: 0,
                    index: source_id,
                    bound: features.len(),
                })?
                .clone();
            Ok(Delegate { rule, source_id, feature })
        })
        .collect()
}

/// One line `rule <k> source <sample_id>` per delegate, followed by its
/// feature vector as decimal literals. f32 Display round-trips exactly.
pub fn delegates_to_lines(delegates: &[Delegate]) -> Vec<String> {
    let mut lines = Vec::with_capacity(delegates.len() * 2);
    for d in delegates {
        lines.push(format!("rule {} source {}", d.rule, d.source_id));
        lines.push(
            d.feature
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    lines
}

pub fn delegates_from_lines(lines: &[String]) -> Result<Vec<Delegate>> {
    if lines.len() % 2 != 0 {
        return Err(Error::Parse {
            line: lines.len(),
            msg: "delegate block must alternate header and feature lines".into(),
        });
    }
    let mut delegates = Vec::with_capacity(lines.len() / 2);
    for (i, pair) in lines.chunks(2).enumerate() {
        let lineno = 2 * i + 1;
        let parts: Vec<&str> = pair[0].split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "rule" || parts[2] != "source" {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected `rule <k> source <id>`, got {:?}", pair[0]),
            });
        }
        let rule: usize = parts[1]
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: "bad rule index".into() })?;
        if rule != i {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("rule {rule} out of order, expected {i}"),
            });
        }
        let source_id: usize = parts[3]
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: "bad source id".into() })?;
        let feature = pair[1]
            .split_whitespace()
            .map(|v| {
                v.parse::<f32>()
                    .map_err(|_| Error::Parse { line: lineno + 1, msg: format!("bad float {v:?}") })
            })
            .collect::<Result<Vec<f32>>>()?;
        if feature.is_empty() {
            return Err(Error::Parse { line: lineno + 1, msg: "empty feature vector".into() });
        }
        delegates.push(Delegate { rule, source_id, feature });
    }
    Ok(delegates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elects_one_sample_per_cluster() {
        // Two tight groups; the delegate of each cluster must come from it.
        let features = vec![
            vec![0.0f32, 0.1],
            vec![0.1, 0.0],
            vec![0.05, 0.05],
            vec![5.0, 5.1],
            vec![5.1, 5.0],
        ];
        let (delegates, state) = elect_delegates(&features, 2, 13).unwrap();
        assert_eq!(delegates.len(), 2);
        assert_eq!(state.memberships.len(), 5);
        let mut ids: Vec<usize> = delegates.iter().map(|d| d.source_id).collect();
        ids.sort();
        assert!(ids[0] < 3 && ids[1] >= 3, "one delegate per group, got {ids:?}");
        for d in &delegates {
            assert_eq!(d.feature, features[d.source_id]);
        }
    }

    #[test]
    fn membership_ties_pick_smaller_sample_index() {
        // Samples 0 and 1 are identical, so their membership rows tie
        // exactly; the elected delegate must be sample 0.
        let features = vec![vec![0.0f32], vec![0.0], vec![4.0], vec![4.0]];
        let (delegates, _) = elect_delegates(&features, 2, 1).unwrap();
        for d in &delegates {
            assert!(d.source_id == 0 || d.source_id == 2, "got {}", d.source_id);
        }
    }

    #[test]
    fn override_path_bypasses_clustering() {
        let features = vec![vec![1.0f32], vec![2.0], vec![3.0]];
        let delegates = delegates_from_ids(&features, &[2, 0]).unwrap();
        assert_eq!(delegates[0].source_id, 2);
        assert_eq!(delegates[0].rule, 0);
        assert_eq!(delegates[1].source_id, 0);
        assert_eq!(delegates[0].feature, vec![3.0]);
        assert!(delegates_from_ids(&features, &[5]).is_err());
        assert!(delegates_from_ids(&features, &[]).is_err());
    }

    #[test]
    fn line_round_trip_is_exact() {
        let delegates = vec![
            Delegate { rule: 0, source_id: 17, feature: vec![0.1, 0.25, 1.0 / 3.0] },
            Delegate { rule: 1, source_id: 3, feature: vec![f32::MIN_POSITIVE, 2.5e-7, 0.0] },
        ];
        let lines = delegates_to_lines(&delegates);
        assert!(lines[0].starts_with("rule 0 source 17"));
        let back = delegates_from_lines(&lines).unwrap();
        assert_eq!(delegates, back);
        for (d, b) in delegates.iter().zip(&back) {
            for (x, y) in d.feature.iter().zip(&b.feature) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn malformed_delegate_lines_are_rejected() {
        let bad = vec!["rule 0 src 1".to_string(), "0.5".to_string()];
        assert!(delegates_from_lines(&bad).is_err());
        let odd = vec!["rule 0 source 1".to_string()];
        assert!(delegates_from_lines(&odd).is_err());
        let out_of_order = vec![
            "rule 1 source 0".to_string(),
            "0.5".to_string(),
        ];
        assert!(delegates_from_lines(&out_of_order).is_err());
        let bad_float = vec!["rule 0 source 0".to_string(), "x".to_string()];
        assert!(delegates_from_lines(&bad_float).is_err());
    }
}
