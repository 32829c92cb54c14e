use serde::{Deserialize, Serialize};
use std::fmt;

/// Overall condition of the patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Remission,
    Disease1,
    Disease2,
    Death,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Remission, Mode::Disease1, Mode::Disease2, Mode::Death];

    pub fn index(self) -> usize {
        match self {
            Mode::Remission => 0,
            Mode::Disease1 => 1,
            Mode::Disease2 => 2,
            Mode::Death => 3,
        }
    }

    pub fn is_disease(self) -> bool {
        matches!(self, Mode::Disease1 | Mode::Disease2)
    }
}

/// Treatment held until the next visit. Ordered `None < A < B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    None,
    A,
    B,
}

impl Treatment {
    pub const ALL: [Treatment; 3] = [Treatment::None, Treatment::A, Treatment::B];

    pub fn index(self) -> usize {
        match self {
            Treatment::None => 0,
            Treatment::A => 1,
            Treatment::B => 2,
        }
    }

    pub fn is_active(self) -> bool {
        self != Treatment::None
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Treatment::None => write!(f, "none"),
            Treatment::A => write!(f, "a"),
            Treatment::B => write!(f, "b"),
        }
    }
}

/// Time until the next visit. Serialized as the number of days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Delay {
    Days15,
    Days30,
    Days60,
}

impl Delay {
    pub const ALL: [Delay; 3] = [Delay::Days15, Delay::Days30, Delay::Days60];

    pub fn days(self) -> f64 {
        match self {
            Delay::Days15 => 15.0,
            Delay::Days30 => 30.0,
            Delay::Days60 => 60.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Delay::Days15 => 0,
            Delay::Days30 => 1,
            Delay::Days60 => 2,
        }
    }

    pub fn from_days(days: u32) -> Option<Delay> {
        match days {
            15 => Some(Delay::Days15),
            30 => Some(Delay::Days30),
            60 => Some(Delay::Days60),
            _ => None,
        }
    }
}

impl Serialize for Delay {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u32(self.days() as u32)
    }
}

impl<'de> Deserialize<'de> for Delay {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let days = u32::deserialize(deserializer)?;
        Delay::from_days(days).ok_or_else(|| {
            serde::de::Error::custom(format!("delay must be 15, 30 or 60 days, got {days}"))
        })
    }
}

/// A treatment allocation paired with the time to the next visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Decision {
    pub treatment: Treatment,
    pub delay: Delay,
}

impl Decision {
    /// The nine decisions in tie-break order: treatment first, then delay.
    pub const ALL: [Decision; 9] = {
        let t = [Treatment::None, Treatment::A, Treatment::B];
        let r = [Delay::Days15, Delay::Days30, Delay::Days60];
        [
            Decision {
                treatment: t[0],
                delay: r[0],
            },
            Decision {
                treatment: t[0],
                delay: r[1],
            },
            Decision {
                treatment: t[0],
                delay: r[2],
            },
            Decision {
                treatment: t[1],
                delay: r[0],
            },
            Decision {
                treatment: t[1],
                delay: r[1],
            },
            Decision {
                treatment: t[1],
                delay: r[2],
            },
            Decision {
                treatment: t[2],
                delay: r[0],
            },
            Decision {
                treatment: t[2],
                delay: r[1],
            },
            Decision {
                treatment: t[2],
                delay: r[2],
            },
        ]
    };

    pub const COUNT: usize = 9;

    pub fn new(treatment: Treatment, delay: Delay) -> Self {
        Self { treatment, delay }
    }

    /// Position in [`Decision::ALL`].
    pub fn index(self) -> usize {
        self.treatment.index() * 3 + self.delay.index()
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn days(self) -> f64 {
        self.delay.days()
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.treatment, self.delay.days() as u32)
    }
}

/// Hidden patient state `(m, ζ, u)` plus the absolute clock `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientState {
    pub mode: Mode,
    pub marker: f64,
    pub since_jump: f64,
    pub clock: f64,
}

impl PatientState {
    pub fn new(mode: Mode, marker: f64, since_jump: f64, clock: f64) -> Self {
        Self {
            mode,
            marker,
            since_jump,
            clock,
        }
    }

    /// Patient entering follow-up: remission at the nominal level, time zero.
    pub fn initial(nominal_level: f64) -> Self {
        Self::new(Mode::Remission, nominal_level, 0.0, 0.0)
    }

    pub fn is_dead(&self) -> bool {
        self.mode == Mode::Death
    }
}

/// Noisy marker reading taken at a visit, or the death sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub reading: f64,
    pub time: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub terminal: bool,
}

impl Observation {
    pub fn reading(reading: f64, time: f64) -> Self {
        Self {
            reading,
            time,
            terminal: false,
        }
    }

    /// Signals that the patient died; `reading` carries the death level.
    pub fn death(death_level: f64, time: f64) -> Self {
        Self {
            reading: death_level,
            time,
            terminal: true,
        }
    }
}
