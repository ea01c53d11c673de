//! Energy rating labels and their coarse grouping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the 15 dwelling energy grades, ordered best (`A1`) to worst (`G`).
///
/// The derived `Ord` follows declaration order, so `A1 < A2 < ... < G` reads
/// as "better than".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EnergyRating {
    A1,
    A2,
    A3,
    B1,
    B2,
    B3,
    C1,
    C2,
    C3,
    D1,
    D2,
    E1,
    E2,
    F,
    G,
}

impl EnergyRating {
    pub const COUNT: usize = 15;

    pub const ALL: [EnergyRating; 15] = [
        EnergyRating::A1,
        EnergyRating::A2,
        EnergyRating::A3,
        EnergyRating::B1,
        EnergyRating::B2,
        EnergyRating::B3,
        EnergyRating::C1,
        EnergyRating::C2,
        EnergyRating::C3,
        EnergyRating::D1,
        EnergyRating::D2,
        EnergyRating::E1,
        EnergyRating::E2,
        EnergyRating::F,
        EnergyRating::G,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnergyRating::A1 => "A1",
            EnergyRating::A2 => "A2",
            EnergyRating::A3 => "A3",
            EnergyRating::B1 => "B1",
            EnergyRating::B2 => "B2",
            EnergyRating::B3 => "B3",
            EnergyRating::C1 => "C1",
            EnergyRating::C2 => "C2",
            EnergyRating::C3 => "C3",
            EnergyRating::D1 => "D1",
            EnergyRating::D2 => "D2",
            EnergyRating::E1 => "E1",
            EnergyRating::E2 => "E2",
            EnergyRating::F => "F",
            EnergyRating::G => "G",
        }
    }

    /// Coarse group this grade belongs to.
    pub fn to_coarse(self) -> CoarseRating {
        use EnergyRating::*;
        match self {
            A1 | A2 | A3 => CoarseRating::A,
            B1 | B2 | B3 => CoarseRating::B,
            C1 | C2 => CoarseRating::C,
            C3 | D1 | D2 => CoarseRating::CD,
            E1 | E2 | F | G => CoarseRating::EFG,
        }
    }
}

impl fmt::Display for EnergyRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown rating `{0}`")]
pub struct UnknownRating(pub String);

impl FromStr for EnergyRating {
    type Err = UnknownRating;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| UnknownRating(s.to_string()))
    }
}

/// Merged rating used by the first stage of coarse-to-fine classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoarseRating {
    A,
    B,
    C,
    CD,
    EFG,
}

impl CoarseRating {
    pub const COUNT: usize = 5;

    pub const ALL: [CoarseRating; 5] = [
        CoarseRating::A,
        CoarseRating::B,
        CoarseRating::C,
        CoarseRating::CD,
        CoarseRating::EFG,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseRating::A => "A",
            CoarseRating::B => "B",
            CoarseRating::C => "C",
            CoarseRating::CD => "CD",
            CoarseRating::EFG => "EFG",
        }
    }

    /// Fine grades in this group, best first.
    pub fn members(self) -> &'static [EnergyRating] {
        use EnergyRating::*;
        match self {
            CoarseRating::A => &[A1, A2, A3],
            CoarseRating::B => &[B1, B2, B3],
            CoarseRating::C => &[C1, C2],
            CoarseRating::CD => &[C3, D1, D2],
            CoarseRating::EFG => &[E1, E2, F, G],
        }
    }
}

impl fmt::Display for CoarseRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
