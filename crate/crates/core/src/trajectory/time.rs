use serde::{Deserialize, Serialize};

use crate::error::{MpeError, Result};

const MINUTES_PER_DAY: u32 = 24 * 60;

/// Equal-width time-of-day buckets over a daily window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSlotting {
    pub slot_minutes: u32,
    pub window_start_minute: u32,
    pub window_end_minute: u32,
}

impl TimeSlotting {
    pub fn new(
        slot_minutes: u32,
        window_start_minute: u32,
        window_end_minute: u32,
    ) -> Result<Self> {
        if slot_minutes == 0
            || window_end_minute <= window_start_minute
            || window_end_minute > MINUTES_PER_DAY
            || !(window_end_minute - window_start_minute).is_multiple_of(slot_minutes)
        {
            return Err(MpeError::Config(format!(
                "window [{window_start_minute}, {window_end_minute}) is not a positive multiple of {slot_minutes}-minute slots"
            )));
        }
        Ok(Self {
            slot_minutes,
            window_start_minute,
            window_end_minute,
        })
    }

    pub fn full_day(slot_minutes: u32) -> Result<Self> {
        Self::new(slot_minutes, 0, MINUTES_PER_DAY)
    }

    pub fn n_slots(&self) -> u32 {
        (self.window_end_minute - self.window_start_minute) / self.slot_minutes
    }

    /// Slot of a UTC epoch timestamp shifted by `tz_offset_minutes`, or
    /// `None` when the local time of day falls outside the window.
    pub fn slot_of(&self, timestamp: i64, tz_offset_minutes: i32) -> Option<u32> {
        let local = timestamp + i64::from(tz_offset_minutes) * 60;
        let minute = (local.rem_euclid(86_400) / 60) as u32;
        if minute < self.window_start_minute || minute >= self.window_end_minute {
            return None;
        }
        Some((minute - self.window_start_minute) / self.slot_minutes)
    }
}

fn parse_clock(s: &str) -> Result<u32> {
    let bad = || MpeError::Config(format!("invalid time of day '{s}', expected HH:MM"));
    let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if m >= 60 || h * 60 + m > MINUTES_PER_DAY {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

/// Parses `HH:MM-HH:MM` into `(start_minute, end_minute)`; `24:00` is a valid end.
pub fn parse_window(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s
        .split_once('-')
        .ok_or_else(|| MpeError::Config(format!("invalid window '{s}', expected HH:MM-HH:MM")))?;
    Ok((parse_clock(a)?, parse_clock(b)?))
}
