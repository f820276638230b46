//! Record pairs rendered as natural-language match questions.
//!
//! The default format is schema-free: every value is introduced by the
//! generic marker `COL`, values are comma-separated, each record is enclosed
//! in `<p>`/`</p>`, and the match question is appended as a suffix:
//!
//! ```text
//! Record A is <p>COL v1, COL v2</p>. Record B is <p>COL w1, COL w2</p>. Given the attributes of the two records, are they the same?
//! ```
//!
//! Missing values render as `N/A`. Each axis of the format can be varied
//! independently (question first, no enclosure, real column names) for
//! ablation runs; the variant identifier travels with checkpoints so that
//! prediction always reuses the training-time format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::MatchLabel;
use crate::error::{ErrorClass, Fallible};

/// The match question appended (or prepended) to every serialized pair.
pub const QUESTION: &str = "Given the attributes of the two records, are they the same?";

/// Rendering of a missing attribute value.
pub const MISSING_VALUE_TOKEN: &str = "N/A";

/// Where the match question goes relative to the two record renderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionPosition {
    #[default]
    Suffix,
    Prefix,
}

/// Markup around each record's value list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enclosure {
    /// `<p>` ... `</p>`
    #[default]
    AngleP,
    /// No enclosure at all.
    None,
}

/// Token placed before each attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeMarker {
    /// The literal marker `COL`, independent of any schema.
    #[default]
    GenericCol,
    /// The attribute's real name; requires names at serialization time.
    ColumnName,
}

/// One point in the three-axis format space. The default is the format used
/// for all non-ablation training and prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SerializationVariant {
    pub question_position: QuestionPosition,
    pub enclosure: Enclosure,
    pub attribute_marker: AttributeMarker,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SerializeError {
    #[error("cannot serialize a record with zero values")]
    EmptyRecord,
    #[error("attribute_marker=column_name needs attribute names; use the *_named entry points")]
    NamesRequired,
    #[error("record has {values} values but {names} attribute names were given")]
    NameCount { values: usize, names: usize },
    #[error("unknown {axis} {value:?} (expected one of {expected})")]
    UnknownVariant {
        axis: &'static str,
        value: String,
        expected: &'static str,
    },
}

impl Fallible for SerializeError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

impl fmt::Display for QuestionPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionPosition::Suffix => "suffix",
            QuestionPosition::Prefix => "prefix",
        })
    }
}

impl FromStr for QuestionPosition {
    type Err = SerializeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "suffix" => Ok(QuestionPosition::Suffix),
            "prefix" => Ok(QuestionPosition::Prefix),
            other => Err(SerializeError::UnknownVariant {
                axis: "question_position",
                value: other.to_string(),
                expected: "suffix, prefix",
            }),
        }
    }
}

impl fmt::Display for Enclosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Enclosure::AngleP => "angle_p",
            Enclosure::None => "none",
        })
    }
}

impl FromStr for Enclosure {
    type Err = SerializeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "angle_p" => Ok(Enclosure::AngleP),
            "none" => Ok(Enclosure::None),
            other => Err(SerializeError::UnknownVariant {
                axis: "enclosure",
                value: other.to_string(),
                expected: "angle_p, none",
            }),
        }
    }
}

impl fmt::Display for AttributeMarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeMarker::GenericCol => "generic_col",
            AttributeMarker::ColumnName => "column_name",
        })
    }
}

impl FromStr for AttributeMarker {
    type Err = SerializeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic_col" => Ok(AttributeMarker::GenericCol),
            "column_name" => Ok(AttributeMarker::ColumnName),
            other => Err(SerializeError::UnknownVariant {
                axis: "attribute_marker",
                value: other.to_string(),
                expected: "generic_col, column_name",
            }),
        }
    }
}

impl fmt::Display for SerializationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}+{}+{}",
            self.question_position, self.enclosure, self.attribute_marker
        )
    }
}

impl FromStr for SerializationVariant {
    type Err = SerializeError;

    /// Parse the `position+enclosure+marker` identifier produced by
    /// [`Display`](fmt::Display).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('+');
        let (qp, enc, marker) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => {
                return Err(SerializeError::UnknownVariant {
                    axis: "serialization_variant",
                    value: s.to_string(),
                    expected: "position+enclosure+marker",
                })
            }
        };
        Ok(SerializationVariant {
            question_position: qp.parse()?,
            enclosure: enc.parse()?,
            attribute_marker: marker.parse()?,
        })
    }
}

fn value_list(
    values: &[Option<String>],
    names: Option<&[String]>,
    marker: AttributeMarker,
) -> String {
    let mut out = String::new();
    for (i, value) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match marker {
            AttributeMarker::GenericCol => out.push_str("COL "),
            AttributeMarker::ColumnName => {
                out.push_str(&names.expect("names checked by caller")[i]);
                out.push(' ');
            }
        }
        out.push_str(value.as_deref().unwrap_or(MISSING_VALUE_TOKEN));
    }
    out
}

fn record_sentence(which: char, inner: &str, enclosure: Enclosure) -> String {
    match enclosure {
        Enclosure::AngleP => format!("Record {which} is <p>{inner}</p>."),
        Enclosure::None => format!("Record {which} is {inner}."),
    }
}

fn assemble(sentence_a: String, sentence_b: String, position: QuestionPosition) -> String {
    match position {
        QuestionPosition::Suffix => format!("{sentence_a} {sentence_b} {QUESTION}"),
        QuestionPosition::Prefix => format!("{QUESTION} {sentence_a} {sentence_b}"),
    }
}

fn serialize_pair_inner(
    left: &[Option<String>],
    right: &[Option<String>],
    names: Option<&[String]>,
    variant: &SerializationVariant,
) -> Result<String, SerializeError> {
    if left.is_empty() || right.is_empty() {
        return Err(SerializeError::EmptyRecord);
    }
    if let Some(names) = names {
        for side in [left, right] {
            if side.len() != names.len() {
                return Err(SerializeError::NameCount {
                    values: side.len(),
                    names: names.len(),
                });
            }
        }
    } else if variant.attribute_marker == AttributeMarker::ColumnName {
        return Err(SerializeError::NamesRequired);
    }
    let marker_names = match variant.attribute_marker {
        AttributeMarker::ColumnName => names,
        AttributeMarker::GenericCol => None,
    };
    let a = record_sentence(
        'A',
        &value_list(left, marker_names, variant.attribute_marker),
        variant.enclosure,
    );
    let b = record_sentence(
        'B',
        &value_list(right, marker_names, variant.attribute_marker),
        variant.enclosure,
    );
    Ok(assemble(a, b, variant.question_position))
}

/// Serialize a record pair without schema information. Fails for empty
/// records and for the `column_name` marker (which needs names).
pub fn serialize_record_pair(
    left: &[Option<String>],
    right: &[Option<String>],
    variant: &SerializationVariant,
) -> Result<String, SerializeError> {
    serialize_pair_inner(left, right, None, variant)
}

/// Serialize a record pair with attribute names available. With the
/// `generic_col` marker the names are accepted but unused, so ablation runs
/// can switch markers without changing call sites.
pub fn serialize_record_pair_named(
    left: &[Option<String>],
    right: &[Option<String>],
    names: &[String],
    variant: &SerializationVariant,
) -> Result<String, SerializeError> {
    serialize_pair_inner(left, right, Some(names), variant)
}

/// Serialize a single attribute value pair as a one-value record pair.
/// `name` is only rendered under the `column_name` marker.
pub fn serialize_attribute_pair(
    left: Option<&str>,
    right: Option<&str>,
    name: Option<&str>,
    variant: &SerializationVariant,
) -> Result<String, SerializeError> {
    let left = [left.map(str::to_string)];
    let right = [right.map(str::to_string)];
    match (variant.attribute_marker, name) {
        (AttributeMarker::GenericCol, _) => serialize_pair_inner(&left, &right, None, variant),
        (AttributeMarker::ColumnName, Some(name)) => {
            let names = [name.to_string()];
            serialize_pair_inner(&left, &right, Some(&names), variant)
        }
        (AttributeMarker::ColumnName, None) => Err(SerializeError::NamesRequired),
    }
}

/// Append the answer token for a training dump: `" Yes."` for a match,
/// `" No."` otherwise.
pub fn render_training_dump(text: &str, label: MatchLabel) -> String {
    match label {
        MatchLabel::Match => format!("{text} Yes."),
        MatchLabel::NonMatch => format!("{text} No."),
    }
}
