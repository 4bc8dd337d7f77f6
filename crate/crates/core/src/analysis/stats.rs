use std::collections::BTreeMap;

use log::info;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::MetadataSidecar;
use crate::entrainment::CedResult;
use crate::error::{CedError, Result};

pub const SIGNIFICANCE: f64 = 0.05;

/// Sample Pearson r and its two-sided p-value from Student's t with n−2
/// degrees of freedom.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(CedError::Dimension(format!("pearson inputs have lengths {} and {}", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 3 {
        return Err(CedError::InsufficientData(format!("pearson needs n >= 3, got {n}")));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CedError::UndefinedCorrelation("one input has zero variance".into()));
    }
    // sqrt of the product keeps r exactly ±1 when ys = ±xs
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    if r.abs() == 1.0 {
        return Ok((r, 0.0));
    }
    let dof = (n - 2) as f64;
    let t = r * (dof / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof >= 1");
    Ok((r, (2.0 * dist.sf(t.abs())).min(1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub score_name: String,
    pub direction: String,
    pub n: usize,
    pub rho: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Outcome per (score, direction); a report that cannot be computed keeps
/// its error so other reports still go through.
#[derive(Debug)]
pub struct CorrelationOutcome {
    pub score_name: String,
    pub direction: String,
    pub skipped: usize,
    pub result: Result<CorrelationReport>,
}

pub fn correlate_scores(ced: &[CedResult], metadata: &MetadataSidecar, score_names: &[String]) -> Vec<CorrelationOutcome> {
    let mut by_direction: BTreeMap<String, Vec<&CedResult>> = BTreeMap::new();
    for r in ced {
        by_direction.entry(r.direction.to_string()).or_default().push(r);
    }
    let mut out = Vec::new();
    for name in score_names {
        for (direction, results) in &by_direction {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut skipped = 0;
            for r in results {
                match metadata.get(&r.session_id).and_then(|m| m.scores.get(name)) {
                    Some(&score) => {
                        xs.push(r.session_ced);
                        ys.push(score);
                    }
                    None => skipped += 1,
                }
            }
            if skipped > 0 {
                info!("{name} / {direction}: {skipped} session(s) lack the score");
            }
            let result = pearson(&xs, &ys).map(|(rho, p_value)| CorrelationReport {
                score_name: name.clone(),
                direction: direction.clone(),
                n: xs.len(),
                rho,
                p_value,
                significant: p_value < SIGNIFICANCE,
            });
            out.push(CorrelationOutcome { score_name: name.clone(), direction: direction.clone(), skipped, result });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    /// age <= 5
    Group1,
    /// 5 < age <= 10
    Group2,
    /// age > 10
    Group3,
}

impl AgeBand {
    pub fn of(age: f64) -> AgeBand {
        if age <= 5.0 {
            AgeBand::Group1
        } else if age <= 10.0 {
            AgeBand::Group2
        } else {
            AgeBand::Group3
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub gender: String,
    pub age_band: AgeBand,
    pub direction: String,
    pub mean_abs_ced: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub stats: Vec<GroupStat>,
    /// Records whose session lacks gender or age.
    pub excluded: usize,
}

/// Mean |CED| per (gender, age band, direction), sorted by that key.
pub fn group_stats(ced: &[CedResult], metadata: &MetadataSidecar) -> GroupReport {
    let mut acc: BTreeMap<(String, AgeBand, String), (f64, usize)> = BTreeMap::new();
    let mut excluded = 0;
    for r in ced {
        let Some((gender, age)) = metadata.get(&r.session_id).and_then(|m| Some((m.gender.clone()?, m.age?))) else {
            excluded += 1;
            continue;
        };
        let e = acc.entry((gender, AgeBand::of(age), r.direction.to_string())).or_default();
        e.0 += r.session_ced.abs();
        e.1 += 1;
    }
    if excluded > 0 {
        info!("{excluded} record(s) excluded for missing gender or age");
    }
    let stats = acc
        .into_iter()
        .map(|((gender, age_band, direction), (sum, n))| GroupStat {
            gender,
            age_band,
            direction,
            mean_abs_ced: sum / n as f64,
            n,
        })
        .collect();
    GroupReport { stats, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Direction, SessionMetadata};

    #[test]
    fn perfect_correlations() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(pearson(&xs, &xs).unwrap(), (1.0, 0.0));
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_eq!(pearson(&xs, &neg).unwrap().0, -1.0);
    }

    #[test]
    fn five_point_example() {
        let (r, p) = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 6.0]).unwrap();
        assert!((r - 10.0 / 148f64.sqrt()).abs() < 1e-12);
        // 3 dof: two-sided p = 1 − (2/π)(atan(u) + u/(1+u²)), u = t/√3
        let u = r * (3.0 / (1.0 - r * r)).sqrt() / 3f64.sqrt();
        let expected = 1.0 - 2.0 / std::f64::consts::PI * (u.atan() + u / (1.0 + u * u));
        assert!((p - expected).abs() < 1e-9, "{p} vs {expected}");
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(CedError::InsufficientData(_))));
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(CedError::UndefinedCorrelation(_))));
    }

    #[test]
    fn age_band_boundaries() {
        assert_eq!(AgeBand::of(5.0), AgeBand::Group1);
        assert_eq!(AgeBand::of(5.01), AgeBand::Group2);
        assert_eq!(AgeBand::of(10.0), AgeBand::Group2);
        assert_eq!(AgeBand::of(10.01), AgeBand::Group3);
    }

    fn result(sid: &str, ced: f64) -> CedResult {
        CedResult { session_id: sid.into(), direction: Direction::new("A", "B"), pair_distances: vec![], session_ced: ced }
    }

    #[test]
    fn singleton_group_and_exclusions() {
        let mut meta = MetadataSidecar::default();
        meta.sessions.insert("s1".into(), SessionMetadata { gender: Some("F".into()), age: Some(3.0), ..Default::default() });
        meta.sessions.insert("s2".into(), SessionMetadata { gender: Some("F".into()), ..Default::default() });
        let rep = group_stats(&[result("s1", 0.7), result("s2", 0.1), result("s3", 0.2)], &meta);
        assert_eq!(rep.excluded, 2);
        assert_eq!(rep.stats.len(), 1);
        assert_eq!(rep.stats[0].mean_abs_ced, 0.7);
        assert_eq!(rep.stats[0].age_band, AgeBand::Group1);
    }

    #[test]
    fn correlation_skips_sessions_without_scores() {
        let mut meta = MetadataSidecar::default();
        for (i, s) in [1.0, 2.0, 3.5, 4.0].iter().enumerate() {
            let mut m = SessionMetadata::default();
            m.scores.insert("x".into(), *s);
            meta.sessions.insert(format!("s{i}"), m);
        }
        let ced: Vec<_> = (0..5).map(|i| result(&format!("s{i}"), i as f64)).collect();
        let out = correlate_scores(&ced, &meta, &["x".into(), "y".into()]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].skipped, 1);
        assert_eq!(out[0].result.as_ref().unwrap().n, 4);
        assert!(matches!(out[1].result, Err(CedError::InsufficientData(_))));
    }
}
