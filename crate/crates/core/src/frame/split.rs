//! Train / validation / test partitioning by whole local days.

use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureFrame, FrameError};

/// Half-open range of local calendar dates held out for testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPeriod {
    pub start: NaiveDate,
    /// Exclusive.
    pub end: NaiveDate,
}

impl TestPeriod {
    pub fn year(year: i32) -> Self {
        Self::years(year, year)
    }

    /// Inclusive calendar-year range.
    pub fn years(first: i32, last: i32) -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(first, 1, 1).expect("valid year"),
            end: NaiveDate::from_ymd_opt(last + 1, 1, 1).expect("valid year"),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date < self.end
    }
}

/// How the non-test period is divided between training and validation.
///
/// Days are stratified by calendar month: each month contributes validation
/// days in proportion to its length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default = "default_train_parts")]
    pub train_parts: u32,
    #[serde(default = "default_val_parts")]
    pub val_parts: u32,
    #[serde(default = "default_test_period")]
    pub test_period: TestPeriod,
    #[serde(default)]
    pub seed: u64,
}

fn default_train_parts() -> u32 {
    3
}

fn default_val_parts() -> u32 {
    1
}

fn default_test_period() -> TestPeriod {
    TestPeriod::year(2020)
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_parts: 3,
            val_parts: 1,
            test_period: TestPeriod::year(2020),
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_test_period(mut self, period: TestPeriod) -> Self {
        self.test_period = period;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Validation days drawn from a month of `days` days, rounded half up.
    pub fn validation_days(&self, days: usize) -> usize {
        let total = (self.train_parts + self.val_parts) as usize;
        (2 * days * self.val_parts as usize + total) / (2 * total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

/// Day-level assignment produced by [`plan_split`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_days: BTreeSet<NaiveDate>,
    pub val_days: BTreeSet<NaiveDate>,
    pub test_days: BTreeSet<NaiveDate>,
}

impl SplitPlan {
    pub fn part_of(&self, date: NaiveDate) -> Option<SplitPart> {
        if self.train_days.contains(&date) {
            Some(SplitPart::Train)
        } else if self.val_days.contains(&date) {
            Some(SplitPart::Validation)
        } else if self.test_days.contains(&date) {
            Some(SplitPart::Test)
        } else {
            None
        }
    }

    pub fn days(&self, part: SplitPart) -> &BTreeSet<NaiveDate> {
        match part {
            SplitPart::Train => &self.train_days,
            SplitPart::Validation => &self.val_days,
            SplitPart::Test => &self.test_days,
        }
    }

    /// Row positions of `frame` whose local day belongs to `part`.
    pub fn rows(&self, frame: &FeatureFrame, part: SplitPart) -> Vec<usize> {
        let days = self.days(part);
        (0..frame.len())
            .filter(|&r| days.contains(&frame.local_date(r)))
            .collect()
    }
}

/// Assigns every local day of `frame` to exactly one split.
///
/// Deterministic given `spec.seed`.
pub fn plan_split(frame: &FeatureFrame, spec: &SplitSpec) -> Result<SplitPlan, FrameError> {
    if spec.train_parts == 0 || spec.val_parts == 0 {
        return Err(FrameError::BadSplitSpec(
            "train and validation parts must be positive".into(),
        ));
    }
    if spec.test_period.start >= spec.test_period.end {
        return Err(FrameError::BadSplitSpec("empty test period".into()));
    }
    let days = frame.day_groups();
    let mut plan = SplitPlan::default();
    let mut months: Vec<((i32, u32), Vec<NaiveDate>)> = Vec::new();
    for &day in days.keys() {
        if spec.test_period.contains(day) {
            plan.test_days.insert(day);
            continue;
        }
        let key = (day.year(), day.month());
        match months.last_mut() {
            Some((k, list)) if *k == key => list.push(day),
            _ => months.push((key, vec![day])),
        }
    }
    let earlier = days.keys().any(|d| *d < spec.test_period.start);
    if plan.test_days.is_empty() || !earlier {
        return Err(FrameError::SpanTooShort);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (_, mut month_days) in months {
        let n_val = spec.validation_days(month_days.len());
        month_days.shuffle(&mut rng);
        for (i, day) in month_days.into_iter().enumerate() {
            if i < n_val {
                plan.val_days.insert(day);
            } else {
                plan.train_days.insert(day);
            }
        }
    }
    Ok(plan)
}

/// Splits `frame` into (train, validation, test) frames of whole days.
pub fn split(
    frame: &FeatureFrame,
    spec: &SplitSpec,
) -> Result<(FeatureFrame, FeatureFrame, FeatureFrame), FrameError> {
    let plan = plan_split(frame, spec)?;
    Ok((
        frame.select_rows(&plan.rows(frame, SplitPart::Train)),
        frame.select_rows(&plan.rows(frame, SplitPart::Validation)),
        frame.select_rows(&plan.rows(frame, SplitPart::Test)),
    ))
}
