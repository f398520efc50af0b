use serde::{Deserialize, Serialize};

/// Category count at which coverage is considered fully diverse.
pub const REFERENCE_CATEGORIES: f64 = 10.0;
const THRESHOLDS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
/// Identifier of the rule below, reported alongside levels.
pub const SEVERITY_RULE: &str = "mean3-thresholds-v1";

/// Bubble signals for one time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleReport {
    pub coverage: f64,
    pub iso_index: f64,
    pub mcd: f64,
    pub severity: u8,
    /// Free-form window label, e.g. "history" or "recommendations".
    pub window: String,
}

impl BubbleReport {
    /// Report for a single window; its severity ignores trends.
    pub fn new(coverage: f64, iso_index: f64, mcd: f64, window: impl Into<String>) -> Self {
        BubbleReport {
            coverage,
            iso_index,
            mcd,
            severity: severity_level(severity_score(coverage, iso_index, mcd)),
            window: window.into(),
        }
    }
}

/// Mean of `1 − coverage/10` (floored at 0), iso index and MCD.
pub fn severity_score(coverage: f64, iso_index: f64, mcd: f64) -> f64 {
    let narrow = (1.0 - coverage / REFERENCE_CATEGORIES).clamp(0.0, 1.0);
    (narrow + iso_index + mcd) / 3.0
}

/// Maps a score in [0, 1] to levels 1–5.
pub fn severity_level(score: f64) -> u8 {
    1 + THRESHOLDS.iter().filter(|&&t| score >= t).count() as u8
}

/// Level of the latest window, bumped by one (max 5) when its MCD exceeds the
/// previous window's. `1` for an empty history.
pub fn severity(reports: &[BubbleReport]) -> u8 {
    let Some(last) = reports.last() else {
        return 1;
    };
    let mut level = severity_level(severity_score(last.coverage, last.iso_index, last.mcd));
    if let [.., prev, _] = reports {
        if last.mcd > prev.mcd {
            level = (level + 1).min(5);
        }
    }
    level
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(c: f64, i: f64, m: f64) -> BubbleReport {
        BubbleReport::new(c, i, m, "w")
    }

    #[test]
    fn floor_ceiling_and_middle() {
        assert_eq!(severity(&[r(10.0, 0.0, 0.0)]), 1);
        assert_eq!(severity(&[r(1.0, 1.0, 1.0)]), 5);
        assert_eq!(severity(&[r(5.0, 0.5, 0.5)]), 3);
    }

    #[test]
    fn rising_mcd_bumps_level() {
        assert_eq!(severity(&[r(5.0, 0.5, 0.3), r(5.0, 0.5, 0.5)]), 4);
        assert_eq!(severity(&[r(5.0, 0.5, 0.7), r(5.0, 0.5, 0.5)]), 3);
        assert_eq!(severity(&[r(1.0, 1.0, 0.9), r(1.0, 1.0, 1.0)]), 5);
    }

    #[test]
    fn monotone_in_each_signal() {
        let grid: Vec<f64> = (0..=10).map(|x| x as f64 / 10.0).collect();
        for &a in &grid {
            for &b in &grid {
                for w in grid.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    assert!(severity_level(severity_score(10.0 * (1.0 - hi), a, b)) >= severity_level(severity_score(10.0 * (1.0 - lo), a, b)));
                    assert!(severity_level(severity_score(5.0, lo, b)) <= severity_level(severity_score(5.0, hi, b)));
                    assert!(severity_level(severity_score(5.0, a, lo)) <= severity_level(severity_score(5.0, a, hi)));
                }
            }
        }
    }
}
