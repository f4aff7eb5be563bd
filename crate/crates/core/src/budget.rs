//! Wall-clock budgets for searches with exponential worst cases.

use crate::error::{Error, Result};
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, Default)]
pub struct Budget {
    deadline: Option<Instant>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget { deadline: None }
    }

    pub fn millis(ms: u64) -> Self {
        Budget {
            deadline: Some(Instant::now() + Duration::from_millis(ms)),
        }
    }

    pub fn from_option(ms: Option<u64>) -> Self {
        ms.map_or_else(Self::unlimited, Self::millis)
    }

    #[inline]
    pub fn check(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() > d => Err(Error::TimeBudgetExceeded),
            _ => Ok(()),
        }
    }
}
