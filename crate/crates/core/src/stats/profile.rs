//! Negative/neutral/positive composition per group.

use std::collections::BTreeMap;

use serde::Serialize;

use super::StatsError;
use crate::corpus::utc_year;
use crate::matcher::Mention;
use crate::sentiment::SentimentLabel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SentimentCounts {
    pub negative: u64,
    pub neutral: u64,
    pub positive: u64,
}

impl SentimentCounts {
    pub fn from_labels<I: IntoIterator<Item = SentimentLabel>>(labels: I) -> Self {
        let mut c = SentimentCounts::default();
        for l in labels {
            c.add(l);
        }
        c
    }

    pub fn add(&mut self, label: SentimentLabel) {
        match label {
            SentimentLabel::Negative => self.negative += 1,
            SentimentLabel::Neutral => self.neutral += 1,
            SentimentLabel::Positive => self.positive += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.negative + self.neutral + self.positive
    }

    /// `(negative, neutral, positive)` shares summing to 1.
    pub fn proportions(&self) -> Result<(f64, f64, f64), StatsError> {
        let n = self.total();
        if n == 0 {
            return Err(StatsError::EmptyGroup);
        }
        let n = n as f64;
        Ok((self.negative as f64 / n, self.neutral as f64 / n, self.positive as f64 / n))
    }

    pub fn as_row(&self) -> Vec<u64> {
        vec![self.negative, self.neutral, self.positive]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Entity,
    Class,
    Subreddit,
    Year,
}

impl GroupKey {
    pub fn key_of(&self, m: &Mention) -> String {
        match self {
            GroupKey::Entity => m.generic_name.clone(),
            GroupKey::Class => m.therapy_class.clone(),
            GroupKey::Subreddit => m.subreddit.clone(),
            GroupKey::Year => utc_year(m.created_utc).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentimentProfile {
    pub group: String,
    pub counts: SentimentCounts,
    pub negative_share: f64,
    pub neutral_share: f64,
    pub positive_share: f64,
}

impl SentimentProfile {
    pub fn new(group: String, counts: SentimentCounts) -> Result<Self, StatsError> {
        let (negative_share, neutral_share, positive_share) = counts.proportions()?;
        Ok(SentimentProfile { group, counts, negative_share, neutral_share, positive_share })
    }
}

/// Profiles per group, ordered by decreasing positive share then group name.
pub fn sentiment_profile<'a, I>(labeled: I, key: GroupKey) -> Vec<SentimentProfile>
where
    I: IntoIterator<Item = (&'a Mention, SentimentLabel)>,
{
    let mut groups: BTreeMap<String, SentimentCounts> = BTreeMap::new();
    for (m, label) in labeled {
        groups.entry(key.key_of(m)).or_default().add(label);
    }
    let mut profiles: Vec<SentimentProfile> = groups
        .into_iter()
        .map(|(g, c)| SentimentProfile::new(g, c).expect("groups are nonempty by construction"))
        .collect();
    profiles.sort_by(|a, b| {
        b.positive_share
            .partial_cmp(&a.positive_share)
            .unwrap()
            .then_with(|| a.group.cmp(&b.group))
    });
    profiles
}
