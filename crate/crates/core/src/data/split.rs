use std::fmt;
use std::str::FromStr;

use super::types::FrameSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SplitPolicy {
    /// Chronological train/val/test fractions summing to 1.
    Ratio { train: f64, val: f64, test: f64 },
    /// Train on every scene except `scene`, test on `scene`.
    LeaveOneOut { scene: String },
    /// Everything is training data.
    All,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<FrameSample>,
    pub val: Vec<FrameSample>,
    pub test: Vec<FrameSample>,
}

impl SplitPolicy {
    pub fn vehicle_default() -> Self {
        SplitPolicy::Ratio {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let &SplitPolicy::Ratio { train, val, test } = self {
            let parts = [train, val, test];
            if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::config("split", "fractions must lie in [0, 1]"));
            }
            let total: f64 = parts.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::config(
                    "split",
                    format!("fractions sum to {total}, expected 1"),
                ));
            }
        }
        Ok(())
    }
}

impl FromStr for SplitPolicy {
    type Err = Error;

    /// `train,val,test` fractions, `loo:<scene>`, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(SplitPolicy::All);
        }
        if let Some(scene) = s.strip_prefix("loo:") {
            return Ok(SplitPolicy::LeaveOneOut {
                scene: scene.to_string(),
            });
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config("split", format!("cannot parse `{s}`")))?;
        let [train, val, test] = parts[..] else {
            return Err(Error::config("split", "expected three fractions"));
        };
        let policy = SplitPolicy::Ratio { train, val, test };
        policy.validate()?;
        Ok(policy)
    }
}

impl fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitPolicy::Ratio { train, val, test } => write!(f, "{train},{val},{test}"),
            SplitPolicy::LeaveOneOut { scene } => write!(f, "loo:{scene}"),
            SplitPolicy::All => f.write_str("all"),
        }
    }
}

pub fn split_dataset(samples: &[FrameSample], policy: &SplitPolicy) -> Result<Split> {
    policy.validate()?;
    match policy {
        SplitPolicy::All => Ok(Split {
            train: samples.to_vec(),
            ..Split::default()
        }),
        SplitPolicy::Ratio { train, val, .. } => {
            let mut ordered = samples.to_vec();
            ordered.sort_by_key(|s| s.anchor_frame);
            let n = ordered.len();
            let n_train = ((n as f64) * train).round() as usize;
            let n_val = (((n as f64) * val).round() as usize).min(n - n_train.min(n));
            let n_train = n_train.min(n);
            let test = ordered.split_off(n_train + n_val);
            let val = ordered.split_off(n_train);
            Ok(Split {
                train: ordered,
                val,
                test,
            })
        }
        SplitPolicy::LeaveOneOut { scene } => {
            if !samples.iter().any(|s| &s.scene == scene) {
                return Err(Error::config(
                    "split",
                    format!("unknown scene `{scene}`"),
                ));
            }
            let (test, train) = samples.iter().cloned().partition(|s| &s.scene == scene);
            Ok(Split {
                train,
                val: Vec::new(),
                test,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(scene: &str, anchor: u64) -> FrameSample {
        FrameSample {
            scene: scene.into(),
            anchor_frame: anchor,
            windows: Vec::new(),
            normalization_offset: [0.0, 0.0],
        }
    }

    #[test]
    fn ratio_split_is_exact_and_chronological() {
        let frames: Vec<_> = (0..100).rev().map(|a| frame("a", a)).collect();
        let s = split_dataset(&frames, &SplitPolicy::vehicle_default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
        assert_eq!(s.train.last().unwrap().anchor_frame, 69);
        assert_eq!(s.val[0].anchor_frame, 70);
        assert_eq!(s.test[0].anchor_frame, 80);
    }

    #[test]
    fn leave_one_out() {
        let frames = vec![frame("A", 0), frame("B", 0), frame("C", 0), frame("C", 1)];
        let s = split_dataset(&frames, &"loo:C".parse().unwrap()).unwrap();
        let scenes: Vec<_> = s.train.iter().map(|f| f.scene.as_str()).collect();
        assert_eq!(scenes, ["A", "B"]);
        assert_eq!(s.test.len(), 2);
        assert!(split_dataset(&frames, &"loo:D".parse().unwrap()).is_err());
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!("0.5,0.5,0.1".parse::<SplitPolicy>().is_err());
        assert!("0.7,0.1,0.2".parse::<SplitPolicy>().is_ok());
    }
}
