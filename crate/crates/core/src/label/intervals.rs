//! Deterministic rank-then-slot interval assignment.

use super::{LabelError, ScoreInterval, SCORE_MAX, SCORE_MIN};
use crate::label::ClusterProfile;
use serde::{Deserialize, Serialize};
use std::io::BufRead;

/// The partial-labeling rulebook. Every cap the slotting must respect lives
/// here so alternate case studies can retune without code changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RulePolicy {
    pub score_floor: u16,
    pub score_ceiling: u16,
    /// Clusters of new users (median Borrow count < 10) stay inside this.
    pub new_user_range: [u16; 2],
    /// Upper cap for any cluster containing liquidated users.
    pub liquidated_cap: u16,
    /// Exclusive upper cap for clusters that are both new and liquidated.
    pub new_liquidated_cap: u16,
    /// Hard cap on interval width (upper − lower).
    pub max_width: u16,
    /// Width given to the safest cluster; higher ranges are narrower so
    /// they are harder to occupy.
    pub narrow_width: u16,
    /// Width given to the riskiest cluster.
    pub wide_width: u16,
    /// Narrowest width the shrink loop may fall back to when the range is
    /// crowded.
    pub floor_width: u16,
}

impl Default for RulePolicy {
    fn default() -> Self {
        RulePolicy {
            score_floor: SCORE_MIN,
            score_ceiling: SCORE_MAX,
            new_user_range: [100, 250],
            liquidated_cap: 400,
            new_liquidated_cap: 150,
            max_width: 100,
            narrow_width: 30,
            wide_width: 100,
            floor_width: 5,
        }
    }
}

impl RulePolicy {
    pub fn from_toml_str(text: &str) -> Result<Self, LabelError> {
        toml::from_str(text).map_err(|e| LabelError::MalformedOverride(e.to_string()))
    }

    fn window(&self, profile: &ClusterProfile) -> (u16, u16) {
        match (profile.is_new_users, profile.has_liquidations) {
            (true, true) => (
                self.new_user_range[0],
                self.new_user_range[1].min(self.new_liquidated_cap - 1),
            ),
            (true, false) => (self.new_user_range[0], self.new_user_range[1]),
            (false, true) => (self.score_floor, self.liquidated_cap),
            (false, false) => (self.score_floor, self.score_ceiling),
        }
    }
}

/// Rank clusters riskiest-first: liquidation rate, then volatile exposure,
/// then sporadicity, then (ascending) interaction volume; cluster id breaks
/// exact ties so the ordering is total.
fn risk_ranked(profiles: &[ClusterProfile]) -> Vec<&ClusterProfile> {
    let mut ranked: Vec<&ClusterProfile> = profiles.iter().collect();
    ranked.sort_by(|a, b| {
        b.liquidation_rate
            .partial_cmp(&a.liquidation_rate)
            .unwrap()
            .then(b.volatile_exposure_mean.partial_cmp(&a.volatile_exposure_mean).unwrap())
            .then(b.sporadicity.partial_cmp(&a.sporadicity).unwrap())
            .then(a.interaction_mean.partial_cmp(&b.interaction_mean).unwrap())
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    ranked
}

/// Slot disjoint intervals top-down: walking the ranking from safest to
/// riskiest, each cluster takes the highest still-free range its rule caps
/// allow, with safer ranks getting narrower widths so high ranges are
/// harder to occupy. Capped clusters (new users, liquidated) therefore
/// never drag uncapped ones below their windows. When the schedule widths
/// cannot fit, they shrink uniformly before the assignment is declared
/// infeasible — never silently overlapped.
pub fn assign_intervals(
    profiles: &[ClusterProfile],
    policy: &RulePolicy,
) -> Result<Vec<ScoreInterval>, LabelError> {
    if profiles.is_empty() {
        return Err(LabelError::NoProfiles);
    }
    let ranked = risk_ranked(profiles);
    let safest_first: Vec<&ClusterProfile> = ranked.into_iter().rev().collect();

    let m = safest_first.len();
    let desired: Vec<f64> = (0..m)
        .map(|j| {
            let t = j as f64 / (m.max(2) - 1) as f64;
            f64::from(policy.narrow_width)
                + (f64::from(policy.wide_width) - f64::from(policy.narrow_width)) * t
        })
        .collect();

    let mut last_stuck = safest_first[0].cluster_id;
    for step in 0..10 {
        let scale = 1.0 - step as f64 * 0.1;
        let widths: Vec<u16> = desired
            .iter()
            .map(|w| ((w * scale).round() as u16).clamp(policy.floor_width, policy.max_width))
            .collect();
        match slot(&safest_first, &widths, policy) {
            Ok(mut intervals) => {
                intervals.sort_by_key(|iv| iv.cluster_id);
                return Ok(intervals);
            }
            Err(at) => last_stuck = at,
        }
    }
    Err(LabelError::InfeasibleSlotting {
        clusters: m,
        at: last_stuck,
    })
}

/// One slotting pass; `Err` carries the cluster id that failed to fit.
fn slot(
    safest_first: &[&ClusterProfile],
    widths: &[u16],
    policy: &RulePolicy,
) -> Result<Vec<ScoreInterval>, i64> {
    let mut intervals: Vec<ScoreInterval> = Vec::with_capacity(safest_first.len());

    for (profile, &width) in safest_first.iter().zip(widths) {
        let (window_bottom, window_top) = policy.window(profile);
        let width = i64::from(width);
        let window_bottom = i64::from(window_bottom);

        // Highest upper bound inside the window that clears every already
        // placed interval; placed intervals are walked top-down.
        let mut upper = i64::from(window_top);
        let mut placed: Vec<&ScoreInterval> = intervals.iter().collect();
        placed.sort_by_key(|iv| std::cmp::Reverse(iv.lower));
        for existing in placed {
            let (lo, hi) = (i64::from(existing.lower), i64::from(existing.upper));
            if lo > upper {
                continue; // entirely above the candidate range
            }
            let candidate_lower = (upper - width).max(window_bottom);
            if hi >= candidate_lower {
                // Overlap: drop the candidate below this interval.
                upper = lo - 1;
            }
        }

        let lower = (upper - width).max(window_bottom);
        if lower >= upper || lower < i64::from(policy.score_floor) {
            return Err(profile.cluster_id);
        }
        intervals.push(ScoreInterval {
            cluster_id: profile.cluster_id,
            lower: lower as u16,
            upper: upper as u16,
        });
    }
    Ok(intervals)
}

/// Replace computed intervals with expert-provided ones, then re-validate
/// the whole set against the rules.
pub fn apply_overrides(
    intervals: &mut [ScoreInterval],
    overrides: &[ScoreInterval],
    profiles: &[ClusterProfile],
    policy: &RulePolicy,
) -> Result<(), LabelError> {
    for over in overrides {
        match intervals.iter_mut().find(|iv| iv.cluster_id == over.cluster_id) {
            Some(slot) => *slot = *over,
            None => return Err(LabelError::MissingInterval(over.cluster_id)),
        }
    }
    validate_intervals(intervals, profiles, policy)
}

/// Check every interval invariant: bounds, width cap, rule caps by cluster
/// flags, and pairwise disjointness.
pub fn validate_intervals(
    intervals: &[ScoreInterval],
    profiles: &[ClusterProfile],
    policy: &RulePolicy,
) -> Result<(), LabelError> {
    let bad = |msg: String| Err(LabelError::BadOverride(msg));
    for iv in intervals {
        if !(policy.score_floor <= iv.lower && iv.lower < iv.upper && iv.upper <= policy.score_ceiling)
        {
            return bad(format!(
                "cluster {} interval [{}, {}] outside [{}, {}]",
                iv.cluster_id, iv.lower, iv.upper, policy.score_floor, policy.score_ceiling
            ));
        }
        if iv.width() > policy.max_width {
            return bad(format!(
                "cluster {} interval width {} exceeds {}",
                iv.cluster_id,
                iv.width(),
                policy.max_width
            ));
        }
        let Some(profile) = profiles.iter().find(|p| p.cluster_id == iv.cluster_id) else {
            return bad(format!("no profile for cluster {}", iv.cluster_id));
        };
        if profile.has_liquidations && iv.upper > policy.liquidated_cap {
            return bad(format!(
                "liquidated cluster {} capped at {}, got upper {}",
                iv.cluster_id, policy.liquidated_cap, iv.upper
            ));
        }
        if profile.is_new_users
            && !(iv.lower >= policy.new_user_range[0] && iv.upper <= policy.new_user_range[1])
        {
            return bad(format!(
                "new-user cluster {} must stay within [{}, {}]",
                iv.cluster_id, policy.new_user_range[0], policy.new_user_range[1]
            ));
        }
        if profile.is_new_users && profile.has_liquidations && iv.upper >= policy.new_liquidated_cap {
            return bad(format!(
                "new liquidated cluster {} must stay below {}",
                iv.cluster_id, policy.new_liquidated_cap
            ));
        }
    }
    for (i, a) in intervals.iter().enumerate() {
        for b in &intervals[i + 1..] {
            if a.lower <= b.upper && b.lower <= a.upper {
                return bad(format!(
                    "clusters {} and {} overlap: [{}, {}] vs [{}, {}]",
                    a.cluster_id, b.cluster_id, a.lower, a.upper, b.lower, b.upper
                ));
            }
        }
    }
    Ok(())
}

/// Manual-override CSV: `cluster_id,lower,upper` with header.
pub fn read_override_csv<R: BufRead>(reader: R) -> Result<Vec<ScoreInterval>, LabelError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LabelError::MalformedOverride(e.to_string()))?;
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(LabelError::MalformedOverride(format!(
                "row {}: expected 3 fields",
                i + 1
            )));
        }
        let parse_err = |field: &str| LabelError::MalformedOverride(format!("row {}: bad {field}", i + 1));
        out.push(ScoreInterval {
            cluster_id: cells[0].parse().map_err(|_| parse_err("cluster_id"))?,
            lower: cells[1].parse().map_err(|_| parse_err("lower"))?,
            upper: cells[2].parse().map_err(|_| parse_err("upper"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEATURE_COUNT;
    use crate::label::profile::FeatureStats;

    fn profile(
        cluster_id: i64,
        new: bool,
        liq_rate: f64,
        volatile: f64,
        interactions: f64,
    ) -> ClusterProfile {
        ClusterProfile {
            cluster_id,
            size: 10,
            stats: vec![
                FeatureStats { mean: 0.0, std: 0.0, min: 0.0, max: 0.0 };
                FEATURE_COUNT
            ],
            is_new_users: new,
            has_liquidations: liq_rate > 0.0,
            liquidation_rate: liq_rate,
            volatile_exposure_mean: volatile,
            sporadicity: 1.0,
            interaction_mean: interactions,
        }
    }

    #[test]
    fn new_user_cluster_lands_in_its_range() {
        let profiles = vec![profile(0, true, 0.0, 0.2, 5.0)];
        let intervals = assign_intervals(&profiles, &RulePolicy::default()).unwrap();
        assert!(intervals[0].lower >= 100 && intervals[0].upper <= 250);
    }

    #[test]
    fn new_liquidated_cluster_stays_below_150() {
        let profiles = vec![profile(0, true, 1.0, 0.5, 3.0)];
        let intervals = assign_intervals(&profiles, &RulePolicy::default()).unwrap();
        assert!(intervals[0].upper < 150, "{:?}", intervals[0]);
        assert!(intervals[0].lower >= 100);
    }

    #[test]
    fn liquidated_clusters_cap_at_400() {
        let profiles: Vec<ClusterProfile> = (0..6)
            .map(|i| profile(i, false, 0.5 + 0.05 * i as f64, 0.4, 20.0))
            .collect();
        let intervals = assign_intervals(&profiles, &RulePolicy::default()).unwrap();
        for iv in &intervals {
            assert!(iv.upper <= 400, "{iv:?}");
        }
        validate_intervals(&intervals, &profiles, &RulePolicy::default()).unwrap();
    }

    #[test]
    fn safest_cluster_gets_the_highest_narrowest_interval() {
        let profiles = vec![
            profile(0, false, 0.0, 0.9, 50.0), // risky: volatile
            profile(1, false, 0.0, 0.1, 200.0), // safe: busy, stable
            profile(2, false, 0.4, 0.5, 10.0), // riskiest: liquidations
        ];
        let intervals = assign_intervals(&profiles, &RulePolicy::default()).unwrap();
        let by_id: std::collections::BTreeMap<i64, ScoreInterval> =
            intervals.iter().map(|iv| (iv.cluster_id, *iv)).collect();
        assert!(by_id[&1].lower > by_id[&0].upper);
        assert!(by_id[&0].lower > by_id[&2].upper);
        assert!(by_id[&1].width() <= by_id[&0].width());
        assert_eq!(by_id[&1].upper, 900);
    }

    #[test]
    fn assignment_is_deterministic() {
        let profiles: Vec<ClusterProfile> = (0..12)
            .map(|i| profile(i, i % 4 == 0, if i % 3 == 0 { 0.2 } else { 0.0 }, 0.1 * i as f64, i as f64))
            .collect();
        let a = assign_intervals(&profiles, &RulePolicy::default()).unwrap();
        let b = assign_intervals(&profiles, &RulePolicy::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crowded_ranges_shrink_before_failing() {
        // Ten liquidated clusters must share [1, 400]: schedule widths
        // (30..100 avg 65) cannot fit without shrinking.
        let profiles: Vec<ClusterProfile> = (0..10)
            .map(|i| profile(i, false, 0.3 + 0.01 * i as f64, 0.4, 10.0))
            .collect();
        let policy = RulePolicy::default();
        let intervals = assign_intervals(&profiles, &policy).unwrap();
        validate_intervals(&intervals, &profiles, &policy).unwrap();
        assert!(intervals.iter().all(|iv| iv.upper <= 400));
    }

    #[test]
    fn truly_infeasible_slotting_reports() {
        // Forty new+liquidated clusters cannot fit disjointly in [100, 149].
        let profiles: Vec<ClusterProfile> = (0..40)
            .map(|i| profile(i, true, 0.9, 0.5, 2.0))
            .collect();
        let err = assign_intervals(&profiles, &RulePolicy::default()).unwrap_err();
        assert!(matches!(err, LabelError::InfeasibleSlotting { clusters: 40, .. }));
    }

    #[test]
    fn overrides_replace_and_validate() {
        let profiles = vec![profile(0, false, 0.0, 0.1, 50.0), profile(1, false, 0.0, 0.9, 5.0)];
        let policy = RulePolicy::default();
        let mut intervals = assign_intervals(&profiles, &policy).unwrap();
        let ok = apply_overrides(
            &mut intervals,
            &[ScoreInterval { cluster_id: 1, lower: 10, upper: 90 }],
            &profiles,
            &policy,
        );
        ok.unwrap();
        // An overlapping override must be rejected.
        let err = apply_overrides(
            &mut intervals,
            &[ScoreInterval { cluster_id: 1, lower: 850, upper: 900 }],
            &profiles,
            &policy,
        )
        .unwrap_err();
        assert!(matches!(err, LabelError::BadOverride(_)));
    }

    #[test]
    fn override_csv_parses() {
        let rows = read_override_csv("cluster_id,lower,upper\n3,120,199\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![ScoreInterval { cluster_id: 3, lower: 120, upper: 199 }]);
    }

    #[test]
    fn policy_toml_round_trip() {
        let policy = RulePolicy::from_toml_str("liquidated_cap = 350\n").unwrap();
        assert_eq!(policy.liquidated_cap, 350);
        assert_eq!(policy.new_user_range, [100, 250]);
    }
}
