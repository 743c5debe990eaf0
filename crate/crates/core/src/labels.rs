//! The two-point confidentiality lattice and the memory-update algebra
//! used for labeled store locations.

use std::fmt;
use std::str::FromStr;

/// A confidentiality level. `Low` is bottom, `High` is top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Label {
    #[default]
    Low,
    High,
}

impl Label {
    /// Least upper bound: `Low` iff both operands are `Low`.
    pub fn join(self, other: Label) -> Label {
        match (self, other) {
            (Label::Low, Label::Low) => Label::Low,
            _ => Label::High,
        }
    }

    pub fn is_low(self) -> bool {
        self == Label::Low
    }
}

/// Free-function form of [`Label::join`].
pub fn join(a: Label, b: Label) -> Label {
    a.join(b)
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Low => "Low",
            Label::High => "High",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}` (expected Low or High)")]
pub struct LabelParseError(pub String);

impl FromStr for Label {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Low" => Ok(Label::Low),
            "High" => Ok(Label::High),
            other => Err(LabelParseError(other.to_string())),
        }
    }
}

/// The label attached to a store location: a plain level, or a record of
/// a level change since the location was created.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StoredLabel {
    Low,
    High,
    /// An initially public location that now holds secret-dependent data.
    LowToHigh,
    /// An initially secret location that now holds public data.
    HighToLow,
}

impl StoredLabel {
    pub const ALL: [StoredLabel; 4] = [
        StoredLabel::Low,
        StoredLabel::High,
        StoredLabel::LowToHigh,
        StoredLabel::HighToLow,
    ];

    /// Writes a value labeled `new` into a location currently labeled `self`.
    pub fn update(self, new: Label) -> StoredLabel {
        match (self, new) {
            (StoredLabel::Low, Label::Low) => StoredLabel::Low,
            (StoredLabel::High, Label::High) => StoredLabel::High,
            (StoredLabel::Low, Label::High) => StoredLabel::LowToHigh,
            (StoredLabel::High, Label::Low) => StoredLabel::HighToLow,
            // revert to the original level
            (StoredLabel::LowToHigh, Label::Low) => StoredLabel::Low,
            (StoredLabel::HighToLow, Label::High) => StoredLabel::High,
            // persist the recorded change
            (StoredLabel::LowToHigh, Label::High) => StoredLabel::LowToHigh,
            (StoredLabel::HighToLow, Label::Low) => StoredLabel::HighToLow,
        }
    }

    /// The level of the data currently held by the location.
    pub fn current(self) -> Label {
        match self {
            StoredLabel::Low | StoredLabel::HighToLow => Label::Low,
            StoredLabel::High | StoredLabel::LowToHigh => Label::High,
        }
    }

    /// Joins the current level of a stored label with a plain label.
    pub fn join(self, other: Label) -> Label {
        self.current().join(other)
    }

    pub fn is_change(self) -> bool {
        matches!(self, StoredLabel::LowToHigh | StoredLabel::HighToLow)
    }
}

/// Free-function form of [`StoredLabel::update`].
pub fn update(prev: StoredLabel, new: Label) -> StoredLabel {
    prev.update(new)
}

/// Free-function form of [`StoredLabel::current`].
pub fn current(sl: StoredLabel) -> Label {
    sl.current()
}

impl From<Label> for StoredLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::Low => StoredLabel::Low,
            Label::High => StoredLabel::High,
        }
    }
}

impl fmt::Display for StoredLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoredLabel::Low => "Low",
            StoredLabel::High => "High",
            StoredLabel::LowToHigh => "Low >> High",
            StoredLabel::HighToLow => "High >> Low",
        })
    }
}

impl FromStr for StoredLabel {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.split_whitespace().collect();
        match compact.as_str() {
            "Low" => Ok(StoredLabel::Low),
            "High" => Ok(StoredLabel::High),
            "Low>>High" => Ok(StoredLabel::LowToHigh),
            "High>>Low" => Ok(StoredLabel::HighToLow),
            _ => Err(LabelParseError(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    const LABELS: [Label; 2] = [Label::Low, Label::High];

    #[test]
    fn join_table() {
        assert_eq!(join(Label::Low, Label::Low), Label::Low);
        assert_eq!(join(Label::Low, Label::High), Label::High);
        assert_eq!(join(Label::High, Label::Low), Label::High);
        assert_eq!(join(Label::High, Label::High), Label::High);
    }

    #[test]
    fn join_laws() {
        for a in LABELS {
            assert_eq!(a.join(a), a);
            assert_eq!(Label::Low.join(a), a);
            for b in LABELS {
                assert_eq!(a.join(b), b.join(a));
                for c in LABELS {
                    assert_eq!(a.join(b).join(c), a.join(b.join(c)));
                }
            }
        }
    }

    #[test]
    fn update_table() {
        use StoredLabel::*;
        let expected = [
            ((Low, Label::Low), Low),
            ((Low, Label::High), LowToHigh),
            ((High, Label::Low), HighToLow),
            ((High, Label::High), High),
            ((LowToHigh, Label::Low), Low),
            ((LowToHigh, Label::High), LowToHigh),
            ((HighToLow, Label::Low), HighToLow),
            ((HighToLow, Label::High), High),
        ];
        for ((prev, new), out) in expected {
            assert_eq!(update(prev, new), out, "{prev} >>> {new}");
        }
    }

    #[test]
    fn current_projection() {
        assert_eq!(current(StoredLabel::Low), Label::Low);
        assert_eq!(current(StoredLabel::High), Label::High);
        assert_eq!(current(StoredLabel::LowToHigh), Label::High);
        assert_eq!(current(StoredLabel::HighToLow), Label::Low);
    }

    #[test]
    fn update_then_current_is_new_label() {
        for sl in StoredLabel::ALL {
            for l in LABELS {
                assert_eq!(sl.update(l).current(), l);
            }
        }
    }

    fn closure(start: StoredLabel) -> BTreeSet<StoredLabel> {
        let mut seen = BTreeSet::from([start]);
        let mut work = vec![start];
        while let Some(sl) = work.pop() {
            for l in LABELS {
                let next = sl.update(l);
                if seen.insert(next) {
                    work.push(next);
                }
            }
        }
        seen
    }

    #[test]
    fn reachable_labels_from_policy_levels() {
        assert_eq!(
            closure(StoredLabel::Low),
            BTreeSet::from([StoredLabel::Low, StoredLabel::LowToHigh])
        );
        assert_eq!(
            closure(StoredLabel::High),
            BTreeSet::from([StoredLabel::High, StoredLabel::HighToLow])
        );
    }

    #[test]
    fn rendering_round_trips() {
        for sl in StoredLabel::ALL {
            assert_eq!(sl.to_string().parse::<StoredLabel>().unwrap(), sl);
        }
        assert_eq!(StoredLabel::LowToHigh.to_string(), "Low >> High");
        assert_eq!(StoredLabel::HighToLow.to_string(), "High >> Low");
        assert!("Medium".parse::<Label>().is_err());
    }

    #[test]
    fn change_labels_are_distinct_from_plain() {
        assert_ne!(StoredLabel::LowToHigh, StoredLabel::High);
        assert_ne!(StoredLabel::HighToLow, StoredLabel::Low);
        assert!(StoredLabel::LowToHigh.is_change());
        assert!(!StoredLabel::High.is_change());
    }
}
