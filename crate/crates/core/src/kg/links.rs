use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{EntityId, KgError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// One interaction flag per pair (DTI-style).
    Binary,
    /// Exactly one class per pair (multi-type DDI).
    MultiClass,
    /// Any subset of classes per pair (side-effect DDI).
    MultiLabel,
}

impl TaskMode {
    pub fn name(self) -> &'static str {
        match self {
            TaskMode::Binary => "binary",
            TaskMode::MultiClass => "multi_class",
            TaskMode::MultiLabel => "multi_label",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "binary" => Some(TaskMode::Binary),
            "multi_class" | "multiclass" => Some(TaskMode::MultiClass),
            "multi_label" | "multilabel" => Some(TaskMode::MultiLabel),
            _ => None,
        }
    }

    /// Width of the classifier output.
    pub fn output_width(self, num_classes: usize) -> usize {
        match self {
            TaskMode::Binary => 1,
            _ => num_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Binary(bool),
    Class(u32),
    /// Sorted, deduplicated set of positive classes.
    Multi(Vec<u32>),
}

impl Label {
    pub fn mode(&self) -> TaskMode {
        match self {
            Label::Binary(_) => TaskMode::Binary,
            Label::Class(_) => TaskMode::MultiClass,
            Label::Multi(_) => TaskMode::MultiLabel,
        }
    }

    pub fn multi(mut classes: Vec<u32>) -> Self {
        classes.sort_unstable();
        classes.dedup();
        Label::Multi(classes)
    }

    /// Stratification / disjointness key.
    pub fn class_key(&self) -> String {
        match self {
            Label::Binary(b) => String::from(if *b { "1" } else { "0" }),
            Label::Class(c) => format!("{c}"),
            Label::Multi(cs) => {
                let parts: Vec<String> = cs.iter().map(|c| format!("{c}")).collect();
                parts.join(";")
            }
        }
    }

    /// Target indicator vector of width `mode.output_width(num_classes)`.
    pub fn indicator(&self, num_classes: usize) -> Vec<f64> {
        match self {
            Label::Binary(b) => vec![if *b { 1.0 } else { 0.0 }],
            Label::Class(c) => {
                let mut v = vec![0.0; num_classes];
                v[*c as usize] = 1.0;
                v
            }
            Label::Multi(cs) => {
                let mut v = vec![0.0; num_classes];
                for &c in cs {
                    v[c as usize] = 1.0;
                }
                v
            }
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            Label::Binary(b) => *b,
            Label::Class(_) => true,
            Label::Multi(cs) => !cs.is_empty(),
        }
    }

    /// Label of a generated negative counterpart in the same task mode.
    pub fn negative(&self) -> Result<Label, KgError> {
        match self {
            Label::Binary(_) => Ok(Label::Binary(false)),
            Label::Multi(_) => Ok(Label::Multi(Vec::new())),
            Label::Class(_) => Err(KgError::Label("multi-class links have no negative label".into())),
        }
    }

    pub fn check(&self, mode: TaskMode, num_classes: usize) -> Result<(), KgError> {
        if self.mode() != mode {
            return Err(KgError::Label(format!("label {:?} does not match task mode {}", self, mode.name())));
        }
        let bad = match self {
            Label::Binary(_) => false,
            Label::Class(c) => *c as usize >= num_classes,
            Label::Multi(cs) => cs.iter().any(|&c| c as usize >= num_classes),
        };
        if bad {
            return Err(KgError::Label(format!("label {:?} outside {} classes", self, num_classes)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkExample {
    pub head: EntityId,
    pub tail: EntityId,
    pub label: Label,
}

impl LinkExample {
    pub fn new(head: EntityId, tail: EntityId, label: Label) -> Self {
        LinkExample { head, tail, label }
    }

    pub fn key(&self) -> (EntityId, EntityId, String) {
        (self.head, self.tail, self.label.class_key())
    }
}
