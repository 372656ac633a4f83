//! The MBTI type algebra.
//!
//! A type is four letters, one per dimension, in the fixed order
//! E/I, S/N, T/F, J/P. Internally a type is a 4-bit code where bit `i`
//! (counting from the most significant of the four) selects the second
//! letter of dimension `i`.

use core::fmt;
use core::str::FromStr;

use thiserror::Error;

/// The four binary dimensions, in letter order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    /// Extraversion vs. Introversion.
    EnergyOrientation,
    /// Sensing vs. iNtuition.
    Perception,
    /// Thinking vs. Feeling.
    Judgement,
    /// Judging vs. Perceiving.
    Lifestyle,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::EnergyOrientation,
        Dimension::Perception,
        Dimension::Judgement,
        Dimension::Lifestyle,
    ];

    /// Zero-based letter position.
    pub const fn position(self) -> usize {
        self as usize
    }

    /// The two letters of this dimension's alphabet.
    pub const fn alphabet(self) -> [char; 2] {
        ALPHABETS[self as usize]
    }
}

const ALPHABETS: [[char; 2]; 4] = [['E', 'I'], ['S', 'N'], ['T', 'F'], ['J', 'P']];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("invalid MBTI type code {0:?}")]
    InvalidType(alloc::string::String),
    #[error("type index {0} out of range 0..16")]
    IndexOutOfRange(usize),
}

/// One of the 16 MBTI personality types.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MbtiType(u8);

impl MbtiType {
    pub const COUNT: usize = 16;

    /// Builds a type from its index in `0..16`.
    pub fn from_index(index: usize) -> Result<Self, TypeError> {
        if index < Self::COUNT {
            Ok(MbtiType(index as u8))
        } else {
            Err(TypeError::IndexOutOfRange(index))
        }
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    /// All 16 types in index order (ESTJ first, INFP last).
    pub fn all() -> impl Iterator<Item = MbtiType> + Clone {
        (0..Self::COUNT as u8).map(MbtiType)
    }

    /// The letter this type carries on `dim`.
    pub const fn letter(self, dim: Dimension) -> char {
        let bit = (self.0 >> (3 - dim.position())) & 1;
        ALPHABETS[dim.position()][bit as usize]
    }

    /// The letter at zero-based position `pos` (0..4).
    pub fn letter_at(self, pos: usize) -> char {
        self.letter(Dimension::ALL[pos])
    }

    pub fn letters(self) -> [char; 4] {
        [
            self.letter(Dimension::EnergyOrientation),
            self.letter(Dimension::Perception),
            self.letter(Dimension::Judgement),
            self.letter(Dimension::Lifestyle),
        ]
    }

    /// Whether this type carries the first letter of `dim`'s alphabet.
    pub const fn is_first_pole(self, dim: Dimension) -> bool {
        (self.0 >> (3 - dim.position())) & 1 == 0
    }

    /// The type that differs from `self` on every dimension.
    pub const fn opposite(self) -> Self {
        MbtiType(!self.0 & 0b1111)
    }

    /// The canonical uppercase code as a fixed-size byte array.
    pub fn code(self) -> [u8; 4] {
        let l = self.letters();
        [l[0] as u8, l[1] as u8, l[2] as u8, l[3] as u8]
    }

    /// The canonical uppercase code.
    pub fn as_str(self) -> &'static str {
        CODES[self.index()]
    }
}

const CODES: [&str; 16] = [
    "ESTJ", "ESTP", "ESFJ", "ESFP", "ENTJ", "ENTP", "ENFJ", "ENFP", "ISTJ", "ISTP", "ISFJ", "ISFP",
    "INTJ", "INTP", "INFJ", "INFP",
];

/// Parses a type code. Surrounding whitespace is trimmed and case is folded;
/// wildcard forum abbreviations such as `xNTP` are rejected.
pub fn parse_type(text: &str) -> Result<MbtiType, TypeError> {
    let trimmed = text.trim();
    let invalid = || TypeError::InvalidType(alloc::string::String::from(text));
    let bytes = trimmed.as_bytes();
    if bytes.len() != 4 {
        return Err(invalid());
    }
    let mut code = 0u8;
    for (pos, &b) in bytes.iter().enumerate() {
        let c = b.to_ascii_uppercase() as char;
        let bit = ALPHABETS[pos]
            .iter()
            .position(|&l| l == c)
            .ok_or_else(invalid)?;
        code = (code << 1) | bit as u8;
    }
    Ok(MbtiType(code))
}

impl FromStr for MbtiType {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_type(s)
    }
}

impl fmt::Display for MbtiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for MbtiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for MbtiType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for MbtiType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        parse_type(&s).map_err(serde::de::Error::custom)
    }
}

/// Character matching function: 1 when the letters agree, 0 otherwise.
pub fn delta(a: char, b: char) -> u8 {
    u8::from(a == b)
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("dimension weight coefficient must be finite and nonnegative, got {0}")]
pub struct InvalidDimWeight(pub f64);

/// Weighting of the per-dimension matches in [`dim_similarity`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DimWeightConfig {
    epsilon: f64,
}

impl DimWeightConfig {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn new(epsilon: f64) -> Result<Self, InvalidDimWeight> {
        if epsilon.is_finite() && epsilon >= 0.0 {
            Ok(DimWeightConfig { epsilon })
        } else {
            Err(InvalidDimWeight(epsilon))
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Weight of the dimension at one-based position `i`: `1 + epsilon * i`.
    pub fn weight(&self, one_based: usize) -> f64 {
        1.0 + self.epsilon * one_based as f64
    }

    /// Similarity of a type with itself: `4 + 10 * epsilon`.
    pub fn max_similarity(&self) -> f64 {
        (1..=4).map(|i| self.weight(i)).sum()
    }
}

impl Default for DimWeightConfig {
    fn default() -> Self {
        DimWeightConfig {
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

/// Weighted count of matching letters between `pred` and `truth`.
///
/// Position `i` (one-based, E/I first) contributes `1 + epsilon * i` when
/// the letters agree, so later dimensions weigh more.
pub fn dim_similarity(pred: MbtiType, truth: MbtiType, cfg: &DimWeightConfig) -> f64 {
    let (p, t) = (pred.letters(), truth.letters());
    (0..4)
        .map(|pos| cfg.weight(pos + 1) * f64::from(delta(p[pos], t[pos])))
        .sum()
}
