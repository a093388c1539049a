use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tissue class of a slide or patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class {
    Normal,
    Benign,
    InSitu,
    Invasive,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Normal, Class::Benign, Class::InSitu, Class::Invasive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Class> {
        Class::ALL.get(i).copied().ok_or(Error::LabelOutOfRange {
            label: i,
            classes: 4,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Normal => "Normal",
            Class::Benign => "Benign",
            Class::InSitu => "InSitu",
            Class::Invasive => "Invasive",
        }
    }

    /// Class-map color: green, blue, orange, red.
    pub fn color(self) -> [u8; 3] {
        match self {
            Class::Normal => [0, 160, 0],
            Class::Benign => [0, 90, 255],
            Class::InSitu => [255, 150, 0],
            Class::Invasive => [220, 0, 0],
        }
    }

    pub fn from_color(rgb: [u8; 3]) -> Option<Class> {
        Class::ALL.into_iter().find(|c| c.color() == rgb)
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Class> {
        Class::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown class name `{s}`")))
    }
}
