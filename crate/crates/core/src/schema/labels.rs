use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Posture {
    #[serde(rename = "WLK")]
    Walking,
    #[serde(rename = "SIT")]
    Sitting,
    #[serde(rename = "STD")]
    Standing,
}

impl Posture {
    pub const ALL: [Posture; 3] = [Posture::Walking, Posture::Sitting, Posture::Standing];

    pub fn binary(self) -> BinaryPosture {
        match self {
            Posture::Walking => BinaryPosture::Walking,
            Posture::Sitting | Posture::Standing => BinaryPosture::Stationary,
        }
    }
}

/// Two-class posture view used by the posture classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinaryPosture {
    #[serde(rename = "STN")]
    Stationary,
    #[serde(rename = "WLK")]
    Walking,
}

impl BinaryPosture {
    pub const ALL: [BinaryPosture; 2] = [BinaryPosture::Stationary, BinaryPosture::Walking];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Behavior {
    #[serde(rename = "EAT")]
    Eating,
    #[serde(rename = "DRK")]
    Drinking,
    #[serde(rename = "PRE")]
    Preening,
    #[serde(rename = "PRA")]
    AlloPreening,
    #[serde(rename = "FOR")]
    Foraging,
    #[serde(rename = "DUB")]
    DustBathing,
    /// No behavior or activity; a visible bird with no behavior flag set.
    #[serde(rename = "CTR")]
    Control,
}

impl Behavior {
    pub const ALL: [Behavior; 7] = [
        Behavior::Eating,
        Behavior::Drinking,
        Behavior::Preening,
        Behavior::AlloPreening,
        Behavior::Foraging,
        Behavior::DustBathing,
        Behavior::Control,
    ];
}

/// Class label carried by predictions and used for classification metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Walking,
    Sitting,
    Standing,
    Stationary,
    Eating,
    Drinking,
    Preening,
    AlloPreening,
    Foraging,
    DustBathing,
    Control,
}

impl Label {
    pub const ALL: [Label; 11] = [
        Label::Walking,
        Label::Sitting,
        Label::Standing,
        Label::Stationary,
        Label::Eating,
        Label::Drinking,
        Label::Preening,
        Label::AlloPreening,
        Label::Foraging,
        Label::DustBathing,
        Label::Control,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Label::Walking => "WLK",
            Label::Sitting => "SIT",
            Label::Standing => "STD",
            Label::Stationary => "STN",
            Label::Eating => "EAT",
            Label::Drinking => "DRK",
            Label::Preening => "PRE",
            Label::AlloPreening => "PRA",
            Label::Foraging => "FOR",
            Label::DustBathing => "DUB",
            Label::Control => "CTR",
        }
    }

    /// Case-insensitive lookup by three-letter code.
    pub fn from_code(code: &str) -> Result<Label> {
        let upper = code.trim().to_ascii_uppercase();
        Label::ALL
            .into_iter()
            .find(|l| l.code() == upper)
            .ok_or_else(|| {
                let valid: Vec<&str> = Label::ALL.iter().map(|l| l.code()).collect();
                Error::Schema(format!(
                    "unknown class label {code:?}; valid labels: {}",
                    valid.join(", ")
                ))
            })
    }

    pub fn is_posture(self) -> bool {
        matches!(
            self,
            Label::Walking | Label::Sitting | Label::Standing | Label::Stationary
        )
    }

    pub fn is_behavior(self) -> bool {
        !self.is_posture()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Label::from_code(&s).map_err(serde::de::Error::custom)
    }
}

impl From<Posture> for Label {
    fn from(p: Posture) -> Self {
        match p {
            Posture::Walking => Label::Walking,
            Posture::Sitting => Label::Sitting,
            Posture::Standing => Label::Standing,
        }
    }
}

impl From<BinaryPosture> for Label {
    fn from(p: BinaryPosture) -> Self {
        match p {
            BinaryPosture::Stationary => Label::Stationary,
            BinaryPosture::Walking => Label::Walking,
        }
    }
}

impl From<Behavior> for Label {
    fn from(b: Behavior) -> Self {
        match b {
            Behavior::Eating => Label::Eating,
            Behavior::Drinking => Label::Drinking,
            Behavior::Preening => Label::Preening,
            Behavior::AlloPreening => Label::AlloPreening,
            Behavior::Foraging => Label::Foraging,
            Behavior::DustBathing => Label::DustBathing,
            Behavior::Control => Label::Control,
        }
    }
}

impl TryFrom<Label> for Posture {
    type Error = Error;

    fn try_from(l: Label) -> Result<Self> {
        match l {
            Label::Walking => Ok(Posture::Walking),
            Label::Sitting => Ok(Posture::Sitting),
            Label::Standing => Ok(Posture::Standing),
            other => Err(Error::Schema(format!("{other} is not a posture label"))),
        }
    }
}

impl TryFrom<Label> for Behavior {
    type Error = Error;

    fn try_from(l: Label) -> Result<Self> {
        Behavior::ALL
            .into_iter()
            .find(|b| Label::from(*b) == l)
            .ok_or_else(|| Error::Schema(format!("{l} is not a behavior label")))
    }
}

/// Which label family a classification evaluation runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Posture,
    BinaryPosture,
    Behavior,
}

impl Task {
    pub fn classes(self) -> Vec<Label> {
        match self {
            Task::Posture => Posture::ALL.into_iter().map(Label::from).collect(),
            Task::BinaryPosture => BinaryPosture::ALL.into_iter().map(Label::from).collect(),
            Task::Behavior => Behavior::ALL.into_iter().map(Label::from).collect(),
        }
    }

    /// Ground-truth class of an annotated bird under this task.
    pub fn truth(self, posture: Option<Posture>, behavior: Option<Behavior>) -> Option<Label> {
        match self {
            Task::Posture => posture.map(Label::from),
            Task::BinaryPosture => posture.map(|p| Label::from(p.binary())),
            Task::Behavior => behavior.map(Label::from),
        }
    }

    /// Projects a predicted label into this task's classes, if it belongs.
    pub fn project(self, label: Label) -> Option<Label> {
        match self {
            Task::Posture => {
                matches!(label, Label::Walking | Label::Sitting | Label::Standing).then_some(label)
            }
            Task::BinaryPosture => match label {
                Label::Sitting | Label::Standing | Label::Stationary => Some(Label::Stationary),
                Label::Walking => Some(Label::Walking),
                _ => None,
            },
            Task::Behavior => label.is_behavior().then_some(label),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "posture" => Ok(Task::Posture),
            "binary_posture" | "binary-posture" => Ok(Task::BinaryPosture),
            "behavior" | "behaviour" => Ok(Task::Behavior),
            other => Err(Error::Schema(format!(
                "unknown task {other:?}; expected posture, binary_posture or behavior"
            ))),
        }
    }
}
